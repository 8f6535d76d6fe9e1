"""Monte Carlo sweeps, Wilson intervals, threshold fits and result files."""

from __future__ import annotations

import ast
import csv
import hashlib
import io
import json
import math
import operator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .circuit import build_memory_experiment, build_phenomenological_experiment
from .code import InvalidParameter
from .decode import Decoder, _bits_to_int
from .graph import compile_circuit_graph, compile_phenomenological_graph
from .noise import NoiseModel, attach_noise, enumerate_error_mechanisms, sample_blocks
from .schedule import CheckKind, make_schedule

__version__ = "0.1.0"


class FitFailure(RuntimeError):
    def __init__(self, msg: str, diagnostics: dict | None = None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


# --- rules -------------------------------------------------------------------

_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod,
}


def eval_rule(rule: str | int | None, d: int) -> int | None:
    """Evaluate an integer rule such as ``"d+2"``, ``"20*d"`` or ``"d//2+1"``."""
    if rule is None or isinstance(rule, int):
        return rule
    if str(rule).strip().lower() in ("full", "none", ""):
        return None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return node.value
        if isinstance(node, ast.Name) and node.id == "d":
            return d
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in ("max", "min"):
            return {"max": max, "min": min}[node.func.id](*(ev(a) for a in node.args))
        raise InvalidParameter(f"unsupported expression in rule {rule!r}")

    try:
        tree = ast.parse(str(rule), mode="eval")
    except SyntaxError as exc:
        raise InvalidParameter(f"cannot parse rule {rule!r}") from exc
    return int(ev(tree))


# --- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    family: str
    L: tuple[int, ...]
    p: tuple[float, ...]
    l: int = 1
    scheme: str = "offset"
    noise: str = "phenomenological"
    R: str = "d+2"
    W: tuple = (None,)  # window rules; None means whole history
    shots: int = 100_000
    max_failures: int = 500
    seed: int = 0
    decomposition: str = "space-first"
    q_ratio: float = 1.0
    name: str = ""
    out: str = ""

    def __post_init__(self):
        if self.shots < 1:
            raise InvalidParameter("shots must be at least 1")
        CheckKind.parse(self.family)
        if self.noise not in ("phenomenological", "circuit"):
            raise InvalidParameter(f"unknown noise model {self.noise!r}")
        if self.decomposition not in ("time-first", "space-first"):
            raise InvalidParameter(f"unknown decomposition {self.decomposition!r}")
        for d in self.L:
            eval_rule(self.R, d)
            for w in self.W:
                eval_rule(w, d)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        raw = dict(raw)
        for key in ("L", "p"):
            if key in raw:
                raw[key] = tuple(raw[key]) if isinstance(raw[key], (list, tuple)) else (raw[key],)
        if "W" in raw:
            w = raw["W"]
            raw["W"] = tuple(w) if isinstance(w, (list, tuple)) else (w,)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(raw) - known
        if extra:
            raise InvalidParameter(f"unknown config keys {sorted(extra)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["L"], d["p"], d["W"] = list(self.L), list(self.p), list(self.W)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def load_configs(path) -> list[ExperimentConfig]:
    """A JSON file holding one config object or a list of them."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise OSError(f"{path}: {exc.strerror}") from exc
    raw = raw if isinstance(raw, list) else [raw]
    return [ExperimentConfig.from_dict(r) for r in raw]


@dataclass(frozen=True)
class Point:
    family: str
    l: int
    scheme: str
    noise: str
    decomposition: str
    L: int
    R: int
    p: float
    W: int | None
    q_ratio: float = 1.0

    def key(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def seed(self, base: int) -> int:
        h = hashlib.sha256(f"{base}|{self.key()}".encode()).digest()
        return int.from_bytes(h[:8], "little")


def expand(config: ExperimentConfig) -> tuple[list[Point], list[str]]:
    """Grid points in a fixed order, and reasons for any skipped ones."""
    points, skipped = [], []
    kind = CheckKind.parse(config.family)
    for d in config.L:
        if kind in (CheckKind.VARIABLE_WIDTH, CheckKind.FIXED_WIDTH) and d % config.l:
            skipped.append(f"{config.family} l={config.l} does not divide L={d}")
            continue
        R = eval_rule(config.R, d)
        for w in config.W:
            W = eval_rule(w, d)
            for p in config.p:
                points.append(
                    Point(kind.value, config.l, config.scheme, config.noise, config.decomposition, d, R, float(p), W, config.q_ratio)
                )
    return points, skipped


# --- experiments -------------------------------------------------------------


@lru_cache(maxsize=32)
def experiment(point: Point):
    """(noisy circuit, decoder) for one grid point."""
    pt = point
    if pt.noise == "phenomenological":
        sched = make_schedule(pt.L, pt.l, pt.family, pt.scheme, pt.R)
        q = pt.p * pt.q_ratio
        circ = attach_noise(build_phenomenological_experiment(pt.L, sched, pt.R), NoiseModel.phenomenological(pt.p, q))
        graph = compile_phenomenological_graph(pt.L, pt.l, pt.family, pt.scheme, pt.R, p=max(pt.p, 1e-12), q=max(q, 1e-12))
    else:
        sched = make_schedule(pt.L, pt.l, pt.family, pt.scheme, pt.R + 1)
        circ = attach_noise(build_memory_experiment(pt.L, sched, pt.R), NoiseModel.circuit(pt.p))
        weights = circ if pt.p > 0 else attach_noise(build_memory_experiment(pt.L, sched, pt.R), NoiseModel.circuit(1e-3))
        graph = compile_circuit_graph(weights, sched, pt.decomposition, mechanisms=enumerate_error_mechanisms(weights))
    return circ, Decoder(graph)


@dataclass(frozen=True)
class Rate:
    point: Point
    shots: int
    failures: int

    @property
    def rate(self) -> float:
        return self.failures / self.shots if self.shots else 0.0

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.failures, self.shots)

    @property
    def sigma(self) -> float:
        r = self.rate
        return math.sqrt(max(r * (1 - r), 1.0 / self.shots) / self.shots)


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ph = k / n
    den = 1 + z * z / n
    mid = (ph + z * z / (2 * n)) / den
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, mid - half)
    hi = 1.0 if k == n else min(1.0, mid + half)
    return lo, hi


def run_point(point: Point, shots: int, seed: int, max_failures: int | None = 500) -> Rate:
    """Sample in blocks until ``shots`` or ``max_failures`` is reached.

    The stop check happens between blocks, so the result depends only on
    the seed and the point.
    """
    circ, dec = experiment(replace(point, W=None))
    if point.p == 0:
        return Rate(point, shots, 0)
    n = f = 0
    for batch in sample_blocks(circ, point.seed(seed), shots):
        dets = batch.unpack("detectors")
        obs = _bits_to_int(batch.unpack("observables"))
        pred = dec.decode_full(dets) if point.W is None else dec.decode_windows(dets, point.W)
        f += int(np.count_nonzero(pred != obs))
        n += batch.shots
        if max_failures and f >= max_failures:
            break
    return Rate(point, n, f)


def _task(args):
    point, shots, seed, mf = args
    return run_point(point, shots, seed, mf)


def run_montecarlo(config: ExperimentConfig, workers: int = 1, log=None) -> list[Rate]:
    """One :class:`Rate` per feasible grid point, in grid order."""
    points, skipped = expand(config)
    for msg in skipped:
        if log:
            log(f"skipped: {msg}")
    tasks = [(pt, config.shots, config.seed, config.max_failures) for pt in points]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers) as ex:
            return list(ex.map(_task, tasks))
    out = []
    for t in tasks:
        r = _task(t)
        if log:
            log(f"L={r.point.L} p={r.point.p:g} W={r.point.W}: {r.failures}/{r.shots}")
        out.append(r)
    return out


# --- threshold estimation ----------------------------------------------------


def _curves(rates: Sequence[Rate]) -> dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    by: dict[int, list[Rate]] = {}
    for r in rates:
        by.setdefault(r.point.L, []).append(r)
    out = {}
    for d, rs in sorted(by.items()):
        rs = sorted(rs, key=lambda r: r.point.p)
        out[d] = (
            np.array([r.point.p for r in rs]),
            np.array([r.rate for r in rs]),
            np.array([r.sigma for r in rs]),
        )
    return out


def pairwise_crossings(rates: Sequence[Rate]) -> list[float]:
    """Physical error rates where curves of different distances cross.

    Each pair of distances is compared on its common ``p`` grid; the first
    sign change of the rate difference is located by linear interpolation.
    """
    curves = _curves(rates)
    ds = sorted(curves)
    out = []
    for i, a in enumerate(ds):
        for b in ds[i + 1 :]:
            pa, ra, _ = curves[a]
            pb, rb, _ = curves[b]
            ps = np.intersect1d(pa, pb)
            if len(ps) < 2:
                continue
            diff = np.interp(ps, pb, rb) - np.interp(ps, pa, ra)
            for k in range(len(ps) - 1):
                if diff[k] < 0 <= diff[k + 1]:
                    x0, x1, y0, y1 = ps[k], ps[k + 1], diff[k], diff[k + 1]
                    out.append(float(x0 - y0 * (x1 - x0) / (y1 - y0)) if y1 != y0 else float(x0))
                    break
    return out


def crossing_estimate(rates: Sequence[Rate]) -> float:
    cs = pairwise_crossings(rates)
    if not cs:
        raise FitFailure("no crossing in the sampled range", {"distances": sorted(_curves(rates))})
    return float(np.median(cs))


@dataclass(frozen=True)
class FitResult:
    p_th: float
    mu: float
    a: float
    b: float
    c: float
    covariance: np.ndarray = field(repr=False)
    residual_norm: float
    n_points: int
    p0: float

    @property
    def p_th_err(self) -> float:
        return float(math.sqrt(max(self.covariance[3, 3], 0.0)))


def scaling_model(X, a, b, c, p_th, mu):
    """``a x + b x^2 + c`` with ``x = (p - p_th) d^(1/mu)``."""
    p, d = X
    x = (p - p_th) * np.power(d, 1.0 / mu)
    return a * x + b * x * x + c


def fit_threshold(rates: Sequence[Rate], window: float = 0.2) -> FitResult:
    """Finite-size scaling fit around the pairwise-crossing estimate."""
    curves = _curves(rates)
    if len(curves) < 3:
        raise FitFailure("need at least three distances", {"distances": sorted(curves)})
    p0 = crossing_estimate(rates)
    P, D, Y, S = [], [], [], []
    for d, (ps, rs, ss) in curves.items():
        keep = np.abs(ps - p0) <= window * p0
        P += list(ps[keep])
        D += [d] * int(keep.sum())
        Y += list(rs[keep])
        S += list(ss[keep])
    per_d = {d: int(sum(1 for x in D if x == d)) for d in curves}
    if len(P) < 6 or sum(1 for v in per_d.values() if v >= 2) < 3:
        raise FitFailure("too few points inside the fit window", {"p0": p0, "points_per_distance": per_d})
    P, D, Y, S = map(np.asarray, (P, D, Y, S))
    slope = np.polyfit(P * D, Y, 1)[0] if len(set(P * D)) > 1 else 1.0
    init = [slope, 0.0, float(np.mean(Y)), p0, 1.0]
    lo = [-np.inf, -np.inf, -np.inf, 1e-9, 0.1]
    hi = [np.inf, np.inf, np.inf, 0.5 - 1e-9, 10.0]
    try:
        popt, pcov = curve_fit(scaling_model, (P, D.astype(float)), Y, p0=init, sigma=S, absolute_sigma=True, bounds=(lo, hi), maxfev=20000)
    except (RuntimeError, ValueError) as exc:
        raise FitFailure(f"least squares did not converge: {exc}", {"p0": p0}) from exc
    res = (Y - scaling_model((P, D.astype(float)), *popt)) / S
    a, b, c, p_th, mu = (float(v) for v in popt)
    if not 0 < p_th < 0.5:
        raise FitFailure("threshold outside (0, 0.5)", {"p_th": p_th})
    return FitResult(p_th, mu, a, b, c, pcov, float(np.linalg.norm(res)), len(P), p0)


# --- reports -----------------------------------------------------------------

CSV_FIELDS = (
    "name", "family", "scheme", "noise", "decomposition", "L", "l", "R", "W", "p",
    "shots", "failures", "rate", "ci_lo", "ci_hi",
)


def rates_to_csv(rows: Iterable[tuple[str, Rate]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for name, r in rows:
        pt = r.point
        lo, hi = r.interval
        w.writerow([
            name, pt.family, pt.scheme, pt.noise, pt.decomposition, pt.L, pt.l, pt.R,
            "full" if pt.W is None else pt.W, repr(pt.p), r.shots, r.failures,
            f"{r.rate:.10g}", f"{lo:.10g}", f"{hi:.10g}",
        ])
    return buf.getvalue()


def read_rates_csv(path) -> dict[str, list[Rate]]:
    out: dict[str, list[Rate]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            W = None if row["W"] == "full" else int(row["W"])
            pt = Point(row["family"], int(row["l"]), row["scheme"], row["noise"], row["decomposition"], int(row["L"]), int(row["R"]), float(row["p"]), W)
            out.setdefault(row["name"], []).append(Rate(pt, int(row["shots"]), int(row["failures"])))
    return out


def sweep_report(configs: Sequence[ExperimentConfig], out_dir, workers: int = 1, log=None) -> tuple[Path, Path]:
    """Run every config and write ``rates.csv`` plus ``manifest.json``."""
    out_dir = Path(out_dir)
    rows = []
    skipped = []
    for i, cfg in enumerate(configs):
        name = cfg.name or f"config{i}"
        skipped += [f"{name}: {m}" for m in expand(cfg)[1]]
        rows += [(name, r) for r in run_montecarlo(cfg, workers, log)]
    manifest = {
        "version": __version__,
        "seeds": [c.seed for c in configs],
        "config_hashes": [c.digest() for c in configs],
        "configs": [c.to_dict() for c in configs],
        "skipped": skipped,
    }
    csv_path, man_path = out_dir / "rates.csv", out_dir / "manifest.json"
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(rates_to_csv(rows))
        man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"{exc.filename or out_dir}: {exc.strerror}") from exc
    return csv_path, man_path
