"""Noise models, Pauli-frame sampling and error-mechanism enumeration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .circuit import NOISE, Circuit, Instruction

BLOCK = 4096  # shots per RNG stream; fixed so results do not depend on batching


class UnsupportedInstruction(ValueError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    kind: str  # "phenomenological" or "circuit"
    p: float
    q: float | None = None

    def __post_init__(self):
        if self.kind not in ("phenomenological", "circuit"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        for v in (self.p, self.q_eff):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"probability {v} outside [0, 1]")

    @property
    def q_eff(self) -> float:
        return self.p if self.q is None else self.q

    @classmethod
    def phenomenological(cls, p: float, q: float | None = None) -> "NoiseModel":
        return cls("phenomenological", p, q)

    @classmethod
    def circuit(cls, p: float) -> "NoiseModel":
        return cls("circuit", p)


def attach_noise(circuit: Circuit, model: NoiseModel) -> Circuit:
    """Insert noise channels according to ``model``.

    Circuit-level: depolarize(p) on data at each round marker, after resets
    and Hadamards, before measurements, and two-qubit depolarize(p) after
    every CNOT.  Phenomenological: X(p) on data at each round marker and a
    classical flip(q) on every parity measurement.
    """
    p, q = model.p, model.q_eff
    data = circuit.data_qubits
    out: list[Instruction] = []
    for ins in circuit.instructions:
        if model.kind == "phenomenological":
            if ins.name == "ROUND":
                out.append(ins)
                if p > 0:
                    out.append(Instruction("X_ERROR", data, (p,)))
                continue
            if ins.name == "MPP" and q > 0:
                out.append(Instruction("MPP", ins.targets, (q,)))
                continue
            out.append(ins)
            continue
        if p <= 0:
            out.append(ins)
            continue
        if ins.name in ("M", "MX"):
            out.append(Instruction("DEPOLARIZE1", ins.targets, (p,)))
            out.append(ins)
        elif ins.name == "ROUND":
            out.append(ins)
            out.append(Instruction("DEPOLARIZE1", data, (p,)))
        elif ins.name in ("R", "RX", "H"):
            out.append(ins)
            out.append(Instruction("DEPOLARIZE1", ins.targets, (p,)))
        elif ins.name == "CX":
            out.append(ins)
            out.append(Instruction("DEPOLARIZE2", ins.targets, (p,)))
        else:
            out.append(ins)
    return Circuit(circuit.n_qubits, tuple(out), circuit.data_qubits)


# --- sampling ---------------------------------------------------------------


def _stream(seed: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(block)])
    return np.random.Generator(np.random.Philox(ss))


def _event_positions(rng: np.random.Generator, n: int, p: float) -> np.ndarray:
    """Indices in ``range(n)`` hit by independent Bernoulli(p) events."""
    if p <= 0 or n == 0:
        return np.zeros(0, dtype=np.int64)
    if p >= 0.2:
        return np.flatnonzero(rng.random(n) < p)
    mean = n * p
    out = []
    pos = -1
    while True:
        m = int(mean + 6 * np.sqrt(mean) + 16)
        gaps = rng.geometric(p, size=m)
        idx = pos + np.cumsum(gaps)
        out.append(idx)
        pos = int(idx[-1])
        if pos >= n:
            break
    idx = np.concatenate(out)
    return idx[idx < n]


def _flip(frame: np.ndarray, rows: np.ndarray, shots: np.ndarray) -> None:
    if rows.size:
        np.bitwise_xor.at(frame, (rows, shots >> 3), (1 << (shots & 7)).astype(np.uint8))


@dataclass
class SampleBatch:
    """Bit-packed (little-endian within each byte) results for ``shots`` shots."""

    shots: int
    records: np.ndarray  # (n_measurements, nbytes)
    detectors: np.ndarray  # (n_detectors, nbytes)
    observables: np.ndarray  # (n_observables, nbytes)

    def unpack(self, which: str = "detectors") -> np.ndarray:
        a = getattr(self, which)
        if a.shape[0] == 0:
            return np.zeros((self.shots, 0), dtype=bool)
        return np.unpackbits(a, axis=1, count=self.shots, bitorder="little").T.astype(bool)


class _Evaluator:
    """Precomputed XOR-reduction of records into detectors and observables."""

    def __init__(self, circuit: Circuit):
        dets = [recs for _, recs in circuit.detectors()]
        self.det = self._plan(dets)
        self.obs = self._plan(circuit.observables())

    @staticmethod
    def _plan(groups):
        flat, starts, empty = [], [], []
        for i, g in enumerate(groups):
            if not g:
                empty.append(i)
                g = (0,)
            starts.append(len(flat))
            flat.extend(g)
        return np.array(flat, dtype=np.int64), np.array(starts, dtype=np.int64), empty

    @staticmethod
    def apply(plan, records: np.ndarray) -> np.ndarray:
        flat, starts, empty = plan
        if starts.size == 0:
            return np.zeros((0, records.shape[1]), dtype=np.uint8)
        out = np.bitwise_xor.reduceat(records[flat], starts, axis=0)
        if empty:
            out[empty] = 0
        return out


def _run(circuit: Circuit, width: int, rng: np.random.Generator | None, gauge: bool, inject=None):
    """Propagate Pauli frames ``width`` bits wide through ``circuit``.

    With ``rng`` noise channels are sampled; with ``inject`` each noise
    channel instead calls ``inject(index, ins, xf, zf, rec_flip)``.
    """
    nb = (width + 7) // 8
    xf = np.zeros((circuit.n_qubits, nb), dtype=np.uint8)
    zf = np.zeros_like(xf)
    records = np.zeros((circuit.num_measurements, nb), dtype=np.uint8)
    m = 0

    def randomize(frame, qs):
        if gauge and rng is not None:
            frame[list(qs)] = rng.integers(0, 256, size=(len(qs), nb), dtype=np.uint8)

    for idx, ins in enumerate(circuit.instructions):
        name, tg = ins.name, ins.targets
        if name in ("TICK", "ROUND", "DETECTOR", "OBSERVABLE_INCLUDE"):
            continue
        if name == "R":
            xf[list(tg)] = 0
            zf[list(tg)] = 0
            randomize(zf, tg)
        elif name == "RX":
            xf[list(tg)] = 0
            zf[list(tg)] = 0
            randomize(xf, tg)
        elif name == "H":
            t = list(tg)
            xf[t], zf[t] = zf[t].copy(), xf[t].copy()
        elif name == "CX":
            c = np.array(tg[0::2])
            t = np.array(tg[1::2])
            if len(set(tg)) == len(tg):
                xf[t] ^= xf[c]
                zf[c] ^= zf[t]
            else:
                for a, b in zip(c, t):
                    xf[b] ^= xf[a]
                    zf[a] ^= zf[b]
        elif name in ("M", "MX"):
            frame = xf if name == "M" else zf
            k = len(tg)
            records[m : m + k] = frame[list(tg)]
            flip_p = ins.args[0] if ins.args else 0.0
            if inject is not None and flip_p:
                inject(idx, ins, xf, zf, records[m : m + k])
            elif rng is not None and flip_p:
                pos = _event_positions(rng, k * width, flip_p)
                _flip(records[m : m + k], pos // width, pos % width)
            randomize(zf if name == "M" else xf, tg)
            m += k
        elif name == "MPP":
            k = len(tg)
            flat = np.array([q for prod in tg for q in prod], dtype=np.int64)
            starts = np.cumsum([0] + [len(prod) for prod in tg[:-1]])
            records[m : m + k] = np.bitwise_xor.reduceat(xf[flat], starts, axis=0)
            flip_p = ins.args[0] if ins.args else 0.0
            if inject is not None and flip_p:
                inject(idx, ins, xf, zf, records[m : m + k])
            elif rng is not None and flip_p:
                pos = _event_positions(rng, k * width, flip_p)
                _flip(records[m : m + k], pos // width, pos % width)
            m += k
        elif name in NOISE:
            if inject is not None:
                inject(idx, ins, xf, zf, None)
            elif rng is not None:
                _sample_channel(rng, ins, xf, zf, width)
        else:
            raise UnsupportedInstruction(name)
    return records


def _sample_channel(rng, ins: Instruction, xf, zf, width: int) -> None:
    p = ins.args[0]
    tg = np.asarray(ins.targets, dtype=np.int64)
    if ins.name == "X_ERROR":
        pos = _event_positions(rng, len(tg) * width, p)
        _flip(xf, tg[pos // width], pos % width)
    elif ins.name == "Z_ERROR":
        pos = _event_positions(rng, len(tg) * width, p)
        _flip(zf, tg[pos // width], pos % width)
    elif ins.name == "DEPOLARIZE1":
        pos = _event_positions(rng, len(tg) * width, p)
        code = rng.integers(1, 4, size=pos.size)
        q, s = tg[pos // width], pos % width
        _flip(xf, q[code & 1 == 1], s[code & 1 == 1])
        _flip(zf, q[code & 2 == 2], s[code & 2 == 2])
    elif ins.name == "DEPOLARIZE2":
        a, b = tg[0::2], tg[1::2]
        pos = _event_positions(rng, len(a) * width, p)
        code = rng.integers(1, 16, size=pos.size)
        pair, s = pos // width, pos % width
        for qs, shift in ((a, 0), (b, 2)):
            q = qs[pair]
            hx = (code >> shift) & 1 == 1
            hz = (code >> shift) & 2 == 2
            _flip(xf, q[hx], s[hx])
            _flip(zf, q[hz], s[hz])
    else:
        raise UnsupportedInstruction(ins.name)


def sample_blocks(
    circuit: Circuit, seed: int, shots: int, gauge: bool = False, start_block: int = 0
) -> Iterator[SampleBatch]:
    """Yield consecutive blocks of at most ``BLOCK`` shots.

    Block ``b`` draws from its own stream keyed by ``(seed, b)``, so the shots
    are identical however the blocks are later grouped or distributed.
    """
    ev = _Evaluator(circuit)
    done, b = 0, start_block
    while done < shots:
        n = min(BLOCK, shots - done)
        rng = _stream(seed, b)
        rec = _run(circuit, n, rng, gauge)
        yield SampleBatch(n, rec, ev.apply(ev.det, rec), ev.apply(ev.obs, rec))
        done += n
        b += 1


def pauli_frame_sample(circuit: Circuit, seed: int, shots: int, gauge: bool = False) -> SampleBatch:
    parts = list(sample_blocks(circuit, seed, shots, gauge))
    if not parts:
        z = np.zeros((0, 0), dtype=np.uint8)
        return SampleBatch(0, z, z, z)
    cat = lambda name: np.concatenate(
        [np.unpackbits(getattr(p, name), axis=1, count=p.shots, bitorder="little") for p in parts], axis=1
    )
    pack = lambda bits: np.packbits(bits, axis=1, bitorder="little")
    return SampleBatch(shots, pack(cat("records")), pack(cat("detectors")), pack(cat("observables")))


def inject_faults(circuit: Circuit, faults: Iterable[tuple[int, int, str]]) -> tuple[np.ndarray, np.ndarray]:
    """Deterministically apply Pauli faults and return (detector, observable) bits.

    Each fault is ``(instruction index, qubit, pauli)`` and acts just after
    that instruction; ``pauli`` is ``"X"``, ``"Y"``, ``"Z"`` or ``"M"`` (a
    flip of the ``qubit``-th outcome of a measurement instruction).
    """
    by_idx: dict[int, list] = {}
    for i, q, pa in faults:
        by_idx.setdefault(i, []).append((q, pa))
    ins = []
    for i, x in enumerate(circuit.instructions):
        if x.name in NOISE:
            x = Instruction("TICK")
        elif x.name in ("M", "MX", "MPP") and x.args:
            x = Instruction(x.name, x.targets)
        ins.append(x)
        for q, pa in by_idx.get(i, []):
            if pa in ("X", "Y"):
                ins.append(Instruction("X_ERROR", (q,), (1.0,)))
            if pa in ("Z", "Y"):
                ins.append(Instruction("Z_ERROR", (q,), (1.0,)))
    c = Circuit(circuit.n_qubits, tuple(ins), circuit.data_qubits)
    rec = _run(c, 1, np.random.Generator(np.random.Philox(0)), False)
    mflips = [(i, q) for i, qs in by_idx.items() for q, pa in qs if pa == "M"]
    if mflips:
        offset, starts = 0, {}
        for i, x in enumerate(circuit.instructions):
            starts[i] = offset
            offset += x.n_measurements()
        for i, q in mflips:
            rec[starts[i] + q] ^= 1
    ev = _Evaluator(circuit)
    d = ev.apply(ev.det, rec)[:, 0] & 1
    o = ev.apply(ev.obs, rec)[:, 0] & 1
    return d.astype(bool), o.astype(bool)


# --- enumeration ------------------------------------------------------------


@dataclass(frozen=True)
class ErrorMechanism:
    probability: float
    detectors: tuple[int, ...]
    logical_mask: int
    origin: tuple[int, str]


def merge_probability(p1: float, p2: float) -> float:
    return p1 * (1 - p2) + p2 * (1 - p1)


_PAULI = {1: "X", 2: "Z", 3: "Y"}


def _components(ins: Instruction):
    """Yield ``(probability, label, [(target slot, pauli code)])`` per component."""
    p = ins.args[0]
    if ins.name == "X_ERROR":
        for j in range(len(ins.targets)):
            yield p, "X", [(j, 1)]
    elif ins.name == "Z_ERROR":
        for j in range(len(ins.targets)):
            yield p, "Z", [(j, 2)]
    elif ins.name == "DEPOLARIZE1":
        for j in range(len(ins.targets)):
            for code in (1, 2, 3):
                yield p / 3, _PAULI[code], [(j, code)]
    elif ins.name == "DEPOLARIZE2":
        for j in range(len(ins.targets) // 2):
            for code in range(1, 16):
                a, b = code & 3, code >> 2
                lab = (_PAULI.get(a, "I")) + (_PAULI.get(b, "I"))
                yield p / 15, lab, [(2 * j, a), (2 * j + 1, b)]


def enumerate_error_mechanisms(circuit: Circuit, merge: bool = True) -> list[ErrorMechanism]:
    """One mechanism per independent Pauli component of every noise channel.

    Signatures come from a single deterministic frame pass in which every
    basis fault (X or Z on one qubit, or one classical flip) owns a bit
    column; components are XORs of basis columns.
    """
    # basis columns: for each noise slot, X and Z (or a single flip)
    cols: dict[tuple[int, int, int], int] = {}
    K = 0
    for idx, ins in enumerate(circuit.instructions):
        if ins.name in NOISE:
            for j in range(len(ins.targets)):
                for b in (1, 2):
                    cols[(idx, j, b)] = K
                    K += 1
        elif ins.name in ("M", "MX", "MPP") and ins.args and ins.args[0] > 0:
            for j in range(len(ins.targets)):
                cols[(idx, j, 0)] = K
                K += 1
    width = max(K, 1)

    def inject(idx, ins, xf, zf, rec):
        if rec is not None:
            for j in range(len(ins.targets)):
                c = cols[(idx, j, 0)]
                rec[j, c >> 3] ^= np.uint8(1 << (c & 7))
            return
        for j, q in enumerate(ins.targets):
            c = cols[(idx, j, 1)]
            xf[q, c >> 3] ^= np.uint8(1 << (c & 7))
            c = cols[(idx, j, 2)]
            zf[q, c >> 3] ^= np.uint8(1 << (c & 7))

    rec = _run(circuit, width, None, False, inject=inject)
    ev = _Evaluator(circuit)
    det = np.unpackbits(ev.apply(ev.det, rec), axis=1, count=width, bitorder="little").T
    obs = np.unpackbits(ev.apply(ev.obs, rec), axis=1, count=width, bitorder="little").T
    n_obs = obs.shape[1]
    weights = (1 << np.arange(n_obs)).astype(np.int64)
    det_packed = np.packbits(det, axis=1)
    obs_int = (obs.astype(np.int64) @ weights) if n_obs else np.zeros(width, dtype=np.int64)

    raw: list[tuple[float, bytes, int, tuple[int, str]]] = []
    for idx, ins in enumerate(circuit.instructions):
        if ins.name in NOISE:
            for p, lab, parts in _components(ins):
                if p <= 0:
                    continue
                sig = np.zeros(det_packed.shape[1], dtype=np.uint8)
                mask = 0
                for j, code in parts:
                    for b in (1, 2):
                        if code & b:
                            c = cols[(idx, j, b)]
                            sig ^= det_packed[c]
                            mask ^= int(obs_int[c])
                raw.append((p, sig.tobytes(), mask, (idx, lab + "@" + str(parts[0][0]))))
        elif ins.name in ("M", "MX", "MPP") and ins.args and ins.args[0] > 0:
            for j in range(len(ins.targets)):
                c = cols[(idx, j, 0)]
                raw.append((ins.args[0], det_packed[c].tobytes(), int(obs_int[c]), (idx, f"flip@{j}")))

    n_det = det.shape[1]

    def unpack(sig: bytes) -> tuple[int, ...]:
        bits = np.unpackbits(np.frombuffer(sig, dtype=np.uint8), count=n_det)
        return tuple(int(i) for i in np.flatnonzero(bits))

    if not merge:
        return [ErrorMechanism(p, unpack(s), m, o) for p, s, m, o in raw if s.strip(b"\0") or m]
    merged: dict[tuple[bytes, int], list] = {}
    for p, s, m, o in raw:
        key = (s, m)
        if key in merged:
            merged[key][0] = merge_probability(merged[key][0], p)
        else:
            merged[key] = [p, o]
    out = []
    for (s, m), (p, o) in merged.items():
        if not s.strip(b"\0") and not m:
            continue
        out.append(ErrorMechanism(p, unpack(s), m, o))
    out.sort(key=lambda e: (e.detectors, e.logical_mask))
    return out


# --- persistence -----------------------------------------------------------


def write_packed(path, bits: np.ndarray) -> None:
    """Write a (shots, n) bool array as rows of little-endian packed bytes."""
    bits = np.asarray(bits, dtype=bool)
    with open(path, "wb") as f:
        f.write(np.packbits(bits, axis=1, bitorder="little").tobytes())


def read_packed(path, n_bits: int) -> np.ndarray:
    raw = np.fromfile(path, dtype=np.uint8)
    nb = (n_bits + 7) // 8
    if nb == 0:
        return np.zeros((0, 0), dtype=bool)
    if raw.size % nb:
        raise ValueError(f"{path}: size {raw.size} is not a multiple of {nb} bytes per shot")
    rows = raw.reshape(-1, nb)
    return np.unpackbits(rows, axis=1, count=n_bits, bitorder="little").astype(bool)
