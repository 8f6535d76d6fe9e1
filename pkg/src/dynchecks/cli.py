"""Command-line entry point: ``dynchecks {build,sample,decode,sweep,fit,tdist}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .circuit import Circuit, build_memory_experiment, build_phenomenological_experiment
from .decode import Decoder, _bits_to_int
from .graph import DecodingGraph, compile_circuit_graph, compile_phenomenological_graph, graph_time_distance
from .noise import NoiseModel, attach_noise, enumerate_error_mechanisms, pauli_frame_sample, read_packed, write_packed
from .schedule import make_schedule, predicted_time_distance

EXIT_FIT = 2
EXIT_UNSUPPORTED = 3


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path)
    p.add_argument("--seed", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--decomposition", choices=("time-first", "space-first"))
    p.add_argument("--scheme", choices=("aligned", "offset"))


def _code(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", default="fw")
    p.add_argument("--l", type=int, default=2)
    p.add_argument("-L", "--L", dest="L", type=int, default=4)
    p.add_argument("--R", type=int, default=4)
    p.add_argument("--noise", choices=("phenomenological", "circuit"), default="circuit")
    p.add_argument("--p", type=float, default=0.001)


def _build(args):
    scheme = args.scheme or "offset"
    dec = args.decomposition or "space-first"
    if args.noise == "circuit":
        sched = make_schedule(args.L, args.l, args.family, scheme, args.R + 1)
        circ = attach_noise(build_memory_experiment(args.L, sched, args.R), NoiseModel.circuit(args.p))
        graph = compile_circuit_graph(circ, sched, dec, mechanisms=enumerate_error_mechanisms(circ))
    else:
        sched = make_schedule(args.L, args.l, args.family, scheme, args.R)
        circ = attach_noise(build_phenomenological_experiment(args.L, sched, args.R), NoiseModel.phenomenological(args.p))
        graph = compile_phenomenological_graph(args.L, args.l, args.family, scheme, args.R, p=args.p)
    stats = graph.stats()
    stats.update(qubits=circ.n_qubits, measurements=circ.num_measurements, detectors=circ.num_detectors)
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "circuit.txt").write_text(circ.to_text())
    (out / "graph.dem").write_text(graph.to_dem())
    meta = {"L": args.L, "l": args.l, "family": args.family, "scheme": scheme, "R": args.R,
            "noise": args.noise, "p": args.p, "decomposition": dec, "stats": stats,
            "diagnostics": [d.kind + ": " + d.detail for d in graph.diagnostics]}
    (out / "build.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if args.stats:
        keys = sorted(stats)
        print(",".join(keys))
        print(",".join(str(stats[k]) for k in keys))
    else:
        print(json.dumps(stats, sort_keys=True))
    for d in graph.diagnostics:
        print(f"{d.kind}: {d.detail}", file=sys.stderr)
    return EXIT_UNSUPPORTED if stats.get("unsupported", 0) else 0


def _sample(args):
    circ = Circuit.from_text(Path(args.circuit).read_text())
    batch = pauli_frame_sample(circ, args.seed or 0, args.shots or 1000)
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    write_packed(out / "detectors.b8", batch.unpack("detectors"))
    write_packed(out / "observables.b8", batch.unpack("observables"))
    (out / "sample.json").write_text(json.dumps(
        {"shots": batch.shots, "detectors": circ.num_detectors, "observables": circ.num_observables, "seed": args.seed or 0},
        indent=2, sort_keys=True) + "\n")
    print(f"{batch.shots} shots, {circ.num_detectors} detectors")
    return 0


def _decode(args):
    dem = Path(args.dem).read_text()
    graph = DecodingGraph.from_dem(dem, args.L)
    dets = read_packed(args.detectors, args.n_detectors)
    obs = read_packed(args.observables, 2)
    dec = Decoder(graph)
    pred = dec.decode_full(dets) if args.W is None else dec.decode_windows(dets, args.W)
    ok = pred == _bits_to_int(obs)
    out = args.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    np.savetxt(out / "success.csv", ok.astype(int), fmt="%d", header="success", comments="")
    lo, hi = harness.wilson_interval(int((~ok).sum()), len(ok))
    with open(out / "rates.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["W", "shots", "failures", "rate", "ci_lo", "ci_hi"])
        w.writerow(["full" if args.W is None else args.W, len(ok), int((~ok).sum()), f"{1 - ok.mean():.10g}", f"{lo:.10g}", f"{hi:.10g}"])
    print(f"logical error rate {1 - ok.mean():.6g} over {len(ok)} shots")
    return 0


def _overrides(cfgs, args):
    out = []
    for c in cfgs:
        kw = {}
        if args.seed is not None:
            kw["seed"] = args.seed
        if args.shots is not None:
            kw["shots"] = args.shots
        if args.decomposition:
            kw["decomposition"] = args.decomposition
        if args.scheme:
            kw["scheme"] = args.scheme
        out.append(replace(c, **kw))
    return out


def _sweep(args):
    if args.config is None:
        raise SystemExit("sweep needs --config")
    cfgs = _overrides(harness.load_configs(args.config), args)
    out = args.out or Path((cfgs[0].out if cfgs else "") or "results")
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    csv_path, _ = harness.sweep_report(cfgs, out, workers=args.workers, log=log)
    print(csv_path)
    unsupported = 0
    for c in cfgs:
        if c.noise != "circuit":
            continue
        for pt in harness.expand(c)[0]:
            g = harness.experiment(replace(pt, W=None))[1].graph
            unsupported += sum(1 for d in g.diagnostics if d.kind == "unsupported-hyperedge")
    if unsupported:
        print(f"{unsupported} unsupported hyperedges", file=sys.stderr)
        return EXIT_UNSUPPORTED
    return 0


def _fit(args):
    src = args.csv or ((args.out or Path("results")) / "rates.csv")
    groups = harness.read_rates_csv(src)
    status = 0
    for name, rates in groups.items():
        by_w: dict = {}
        for r in rates:
            by_w.setdefault(r.point.W, []).append(r)
        for W, rs in by_w.items():
            tag = f"{name} W={'full' if W is None else W}"
            try:
                cross = harness.crossing_estimate(rs)
            except harness.FitFailure as exc:
                print(f"{tag}: fit failure: {exc} {exc.diagnostics}")
                status = EXIT_FIT
                continue
            try:
                f = harness.fit_threshold(rs)
                print(f"{tag}: crossing {cross:.5f} fit p_th {f.p_th:.5f} +- {f.p_th_err:.5f} mu {f.mu:.3f}")
            except harness.FitFailure as exc:
                print(f"{tag}: crossing {cross:.5f} fit failure: {exc}")
                status = EXIT_FIT
    return status


def _tdist(args):
    scheme = args.scheme or "offset"
    print("W,predicted,measured")
    R = max(args.W) + 3
    if args.noise == "circuit":
        sched = make_schedule(args.L, args.l, args.family, scheme, R + 1)
        circ = attach_noise(build_memory_experiment(args.L, sched, R), NoiseModel.circuit(args.p))
        g = compile_circuit_graph(circ, sched, args.decomposition or "space-first")
    else:
        g = compile_phenomenological_graph(args.L, args.l, args.family, scheme, R)
    bad = 0
    for W in args.W:
        got = graph_time_distance(g, W)
        try:
            pred = predicted_time_distance(W, args.l, args.family) if scheme == "offset" else W
        except ValueError:
            pred = float("inf")
        bad += got != pred
        print(f"{W},{pred},{got}")
    return 1 if bad else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynchecks")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("build", help="build a noisy circuit and its decoding graph")
    _common(p)
    _code(p)
    p.add_argument("--stats", action="store_true", help="print graph statistics as CSV")
    p.set_defaults(func=_build)

    p = sub.add_parser("sample", help="sample detector and observable bits")
    _common(p)
    p.add_argument("--circuit", required=True)
    p.set_defaults(func=_sample)

    p = sub.add_parser("decode", help="decode packed shots against a DEM")
    _common(p)
    p.add_argument("--dem", required=True)
    p.add_argument("--detectors", required=True)
    p.add_argument("--observables", required=True)
    p.add_argument("--n-detectors", type=int, required=True)
    p.add_argument("-L", "--L", dest="L", type=int, required=True)
    p.add_argument("--W", type=int)
    p.set_defaults(func=_decode)

    p = sub.add_parser("sweep", help="run a JSON-configured Monte Carlo sweep")
    _common(p)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=_sweep)

    p = sub.add_parser("fit", help="threshold estimates from a rates CSV")
    _common(p)
    p.add_argument("--csv", type=Path)
    p.set_defaults(func=_fit)

    p = sub.add_parser("tdist", help="measured against predicted time distance")
    _common(p)
    _code(p)
    p.add_argument("--W", type=int, nargs="+", default=[2, 3, 4, 5])
    p.set_defaults(func=_tdist)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return int(args.func(args) or 0)


if __name__ == "__main__":
    sys.exit(main())
