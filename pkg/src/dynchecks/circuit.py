"""Syndrome-extraction circuits and memory experiments.

Circuits are flat instruction lists in a small line-oriented text format
that is a subset of the stim circuit language (``R``, ``RX``, ``H``, ``CX``,
``M``, ``MX``, ``MPP``, ``TICK``, noise channels, ``DETECTOR`` and
``OBSERVABLE_INCLUDE``).  ``# round t`` comment lines mark the start of each
syndrome-extraction round so noise can be attached afterwards.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .code import Check, CheckSet, InvalidParameter, TorusLattice, logical_operators
from .schedule import CheckKind, Schedule

GATES = {"R", "RX", "H", "CX", "M", "MX", "MPP", "TICK", "ROUND", "DETECTOR", "OBSERVABLE_INCLUDE"}
NOISE = {"DEPOLARIZE1", "DEPOLARIZE2", "X_ERROR", "Z_ERROR"}
MEASURE = {"M", "MX", "MPP"}


class WrongShape(ValueError):
    pass


class SchedulingError(AssertionError):
    pass


@dataclass(frozen=True)
class Instruction:
    name: str
    targets: tuple = ()
    args: tuple = ()

    def n_measurements(self) -> int:
        return len(self.targets) if self.name in MEASURE else 0

    def to_text(self) -> str:
        if self.name == "ROUND":
            return f"# round {self.args[0]}"
        head = self.name
        if self.args:
            head += "(" + ", ".join(_fmt(a) for a in self.args) + ")"
        if self.name in ("DETECTOR", "OBSERVABLE_INCLUDE"):
            tail = [f"rec[{k}]" for k in self.targets]
        elif self.name == "MPP":
            tail = ["*".join(f"Z{q}" for q in prod) for prod in self.targets]
        else:
            tail = [str(q) for q in self.targets]
        return " ".join([head] + tail)


def _fmt(a) -> str:
    if isinstance(a, (int, np.integer)):
        return str(int(a))
    return repr(float(a))


_LINE = re.compile(r"^([A-Z_0-9]+)(?:\(([^)]*)\))?\s*(.*)$")


def parse_instruction(line: str) -> Instruction | None:
    line = line.strip()
    if not line:
        return None
    if line.startswith("#"):
        m = re.match(r"#\s*round\s+(\d+)", line)
        return Instruction("ROUND", (), (int(m.group(1)),)) if m else None
    m = _LINE.match(line)
    if not m:
        raise ValueError(f"cannot parse {line!r}")
    name, arg, rest = m.groups()
    if name not in GATES and name not in NOISE:
        raise ValueError(f"unsupported instruction {name}")
    args: tuple = ()
    if arg:
        vals = []
        for a in arg.split(","):
            a = a.strip()
            vals.append(int(a) if re.fullmatch(r"-?\d+", a) else float(a))
        args = tuple(vals)
    toks = rest.split()
    if name in ("DETECTOR", "OBSERVABLE_INCLUDE"):
        targets = tuple(int(t[4:-1]) for t in toks)
    elif name == "MPP":
        targets = tuple(tuple(int(p[1:]) for p in t.split("*")) for t in toks)
    else:
        targets = tuple(int(t) for t in toks)
    return Instruction(name, targets, args)


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    instructions: tuple[Instruction, ...]
    data_qubits: tuple[int, ...] = field(default=(), compare=False)

    @property
    def num_measurements(self) -> int:
        return sum(ins.n_measurements() for ins in self.instructions)

    @property
    def num_detectors(self) -> int:
        return sum(1 for ins in self.instructions if ins.name == "DETECTOR")

    @property
    def num_observables(self) -> int:
        ks = [ins.args[0] for ins in self.instructions if ins.name == "OBSERVABLE_INCLUDE"]
        return max(ks) + 1 if ks else 0

    def detectors(self) -> list[tuple[tuple, tuple[int, ...]]]:
        """``(coords, absolute record indices)`` for every detector."""
        out, n = [], 0
        for ins in self.instructions:
            if ins.name == "DETECTOR":
                out.append((ins.args, tuple(n + k for k in ins.targets)))
            n += ins.n_measurements()
        return out

    def observables(self) -> list[tuple[int, ...]]:
        obs: dict[int, set] = {}
        n = 0
        for ins in self.instructions:
            if ins.name == "OBSERVABLE_INCLUDE":
                s = obs.setdefault(int(ins.args[0]), set())
                s ^= {n + k for k in ins.targets}
            n += ins.n_measurements()
        return [tuple(sorted(obs.get(k, ()))) for k in range(self.num_observables)]

    def detector_coords(self) -> list[tuple]:
        return [c for c, _ in self.detectors()]

    def unused_measurements(self) -> list[int]:
        used = set()
        for _, recs in self.detectors():
            used.update(recs)
        for recs in self.observables():
            used.update(recs)
        return [i for i in range(self.num_measurements) if i not in used]

    def noiseless(self) -> "Circuit":
        keep = tuple(
            Instruction(i.name, i.targets) if i.name in ("M", "MX", "MPP") and i.args else i
            for i in self.instructions
            if i.name not in NOISE
        )
        return Circuit(self.n_qubits, keep, self.data_qubits)

    def to_text(self) -> str:
        return "\n".join(ins.to_text() for ins in self.instructions) + "\n"

    @classmethod
    def from_text(cls, text: str, data_qubits: Sequence[int] = ()) -> "Circuit":
        ins = [i for i in (parse_instruction(l) for l in text.splitlines()) if i is not None]
        n = 0
        for i in ins:
            if i.name == "MPP":
                n = max([n] + [q + 1 for p in i.targets for q in p])
            elif i.name not in ("DETECTOR", "OBSERVABLE_INCLUDE", "ROUND"):
                n = max([n] + [q + 1 for q in i.targets])
        return cls(n, tuple(ins), tuple(data_qubits))

    def __len__(self):
        return len(self.instructions)


# --- gadgets ---------------------------------------------------------------


@dataclass(frozen=True)
class Gadget:
    check: Check
    ancilla: int
    order: tuple[int, ...]
    shape: str  # "square" or "rect"

    @property
    def pauli(self) -> str:
        return self.check.pauli

    def instructions(self) -> list[Instruction]:
        a = self.ancilla
        seq = [Instruction("R", (a,))]
        if self.pauli == "X":
            seq.append(Instruction("H", (a,)))
        for q in self.order:
            pair = (q, a) if self.pauli == "Z" else (a, q)
            seq.append(Instruction("CX", pair))
        if self.pauli == "X":
            seq.append(Instruction("H", (a,)))
        seq.append(Instruction("M", (a,)))
        return seq


def _column_geometry(check: Check, L: int) -> tuple[int, int, int]:
    """Top row, column and height of a one-cell-wide vertical block."""
    cells = [divmod(i, L) for i in check.cells]
    cols = {c for _, c in cells}
    if len(cols) != 1:
        raise WrongShape(f"check {check.family.value} is wider than one cell")
    (c,) = cols
    rows = {r for r, _ in cells}
    h = len(rows)
    if h == L:
        top = check.patch_origin[0] if check.patch_origin is not None else 0
        return top % L, c, h
    tops = [r for r in rows if (r - 1) % L not in rows]
    if len(tops) != 1:
        raise WrongShape("cells do not form a contiguous column")
    return tops[0], c, h


def zigzag_order(check: Check, L: int) -> tuple[int, ...]:
    """North cap, then east/west pairs going down, then the south cap."""
    lat = TorusLattice(L)
    r0, c, h = _column_geometry(check, L)
    if check.pauli == "Z":
        north, south = lat.h(r0, c), lat.h(r0 + h, c)
        pairs = [(lat.v(r0 + i, c + 1), lat.v(r0 + i, c)) for i in range(h)]
    else:
        north, south = lat.v(r0 - 1, c), lat.v(r0 + h - 1, c)
        pairs = [(lat.h(r0 + i, c), lat.h(r0 + i, c - 1)) for i in range(h)]
    order = [q for p in pairs for q in p]
    if h < L:
        order = [north] + order + [south]
    if sorted(order) != sorted(check.support):
        raise WrongShape("zigzag order does not cover the check support")
    return tuple(order)


def build_sec_square(check: Check, L: int, ancilla: int = 0) -> Gadget:
    if check.weight != 4 or len(check.cells) != 1:
        raise WrongShape(f"square gadget needs a single-cell weight-4 check, got weight {check.weight}")
    return Gadget(check, ancilla, zigzag_order(check, L), "square")


def build_sec_rect(check: Check, L: int, ancilla: int = 0) -> Gadget:
    if len(check.cells) < 2:
        raise WrongShape("rectangular gadget needs at least two cells")
    return Gadget(check, ancilla, zigzag_order(check, L), "rect")


def _gadget(check: Check, L: int, ancilla: int) -> Gadget:
    if len(check.cells) == 1:
        return build_sec_square(check, L, ancilla)
    return build_sec_rect(check, L, ancilla)


# --- rounds ------------------------------------------------------------------


@dataclass(frozen=True)
class RoundLayout:
    """Gadgets of one round plus the CNOT tick each gate lands in."""

    z_gadgets: tuple[Gadget, ...]
    x_gadgets: tuple[Gadget, ...]
    ticks: tuple[tuple[tuple[int, int], ...], ...]

    @property
    def depth(self) -> int:
        return len(self.ticks)


def _pack(L: int, gadgets: Sequence[Gadget], n_qubits: int) -> list[list[tuple[int, int]]]:
    phases = [
        [g for g in gadgets if g.pauli == "Z" and g.shape == "square"],
        [g for g in gadgets if g.pauli == "Z" and g.shape == "rect"],
        [g for g in gadgets if g.pauli == "X" and g.shape == "square"],
        [g for g in gadgets if g.pauli == "X" and g.shape == "rect"],
    ]
    ready = np.zeros(n_qubits, dtype=np.int64)
    ticks: list[list[tuple[int, int]]] = []
    for phase in phases:
        phase = sorted(phase, key=lambda g: g.ancilla)
        steps = max((len(g.order) for g in phase), default=0)
        for s in range(steps):
            for g in phase:
                if s >= len(g.order):
                    continue
                q, a = g.order[s], g.ancilla
                t = int(max(ready[q], ready[a]))
                while len(ticks) <= t:
                    ticks.append([])
                ticks[t].append((q, a) if g.pauli == "Z" else (a, q))
                ready[q] = ready[a] = t + 1
    return ticks


def _verify_ticks(ticks) -> None:
    for k, gates in enumerate(ticks):
        seen = set()
        for a, b in gates:
            if a in seen or b in seen or a == b:
                raise SchedulingError(f"qubit reused within CNOT tick {k}")
            seen.update((a, b))


@lru_cache(maxsize=64)
def _layout(L: int, zset: CheckSet, xset: CheckSet) -> RoundLayout:
    n = 2 * L * L
    zg = tuple(_gadget(ch, L, n + k) for k, ch in enumerate(zset.checks))
    xg = tuple(_gadget(ch, L, n + L * L + k) for k, ch in enumerate(xset.checks))
    ticks = _pack(L, zg + xg, 4 * L * L)
    _verify_ticks(ticks)
    return RoundLayout(zg, xg, tuple(tuple(t) for t in ticks))


def _require_circuit_family(schedule: Schedule):
    if schedule.kind not in (CheckKind.LOCAL, CheckKind.FIXED_WIDTH):
        raise InvalidParameter(f"no extraction circuit for {schedule.kind.value} checks")


def round_layout(schedule: Schedule, t: int) -> RoundLayout:
    _require_circuit_family(schedule)
    return _layout(schedule.L, schedule.check_set(t, "Z"), schedule.check_set(t, "X"))


def build_round_circuit(L: int, schedule: Schedule, t: int) -> list[Instruction]:
    """One noiseless extraction round; Z-check results come before X-check results."""
    lay = round_layout(schedule, t)
    za = tuple(g.ancilla for g in lay.z_gadgets)
    xa = tuple(g.ancilla for g in lay.x_gadgets)
    out = [Instruction("ROUND", (), (t,)), Instruction("R", za + xa), Instruction("TICK"), Instruction("H", xa), Instruction("TICK")]
    for gates in lay.ticks:
        out.append(Instruction("CX", tuple(q for g in gates for q in g)))
        out.append(Instruction("TICK"))
    out += [Instruction("H", xa), Instruction("TICK"), Instruction("M", za), Instruction("M", xa), Instruction("TICK")]
    return out


# --- experiments ---------------------------------------------------------


class _Recorder:
    def __init__(self):
        self.ins: list[Instruction] = []
        self.n_meas = 0

    def add(self, ins: Instruction) -> range:
        start = self.n_meas
        self.ins.append(ins)
        self.n_meas += ins.n_measurements()
        return range(start, self.n_meas)

    def detector(self, coords, recs: Iterable[int]):
        recs = sorted(set(recs))
        self.ins.append(Instruction("DETECTOR", tuple(r - self.n_meas for r in recs), tuple(coords)))

    def observable(self, k: int, recs: Iterable[int]):
        recs = sorted(recs)
        self.ins.append(Instruction("OBSERVABLE_INCLUDE", tuple(r - self.n_meas for r in recs), (k,)))


def _converted(U: np.ndarray, recs: Sequence[int]) -> list[list[int]]:
    """Record indices whose XOR gives each entry of ``M = U @ m``."""
    n = len(recs)
    return [[recs[k] for k in np.flatnonzero(U[i, :n])] for i in range(U.shape[0])]


def _xor_lists(a, b):
    return set(a) ^ set(b)


def _emit_detectors(rec: _Recorder, L: int, layers: list[list[list[int]]], final: list[list[int]]):
    prev = None
    for t, M in enumerate(layers):
        for i, cur in enumerate(M):
            r, c = divmod(i, L)
            rec.detector((r, c, t), cur if prev is None else _xor_lists(cur, prev[i]))
        prev = M
    t = len(layers)
    for i, cur in enumerate(final):
        r, c = divmod(i, L)
        rec.detector((r, c, t), _xor_lists(cur, prev[i]))


def build_memory_experiment(L: int, schedule: Schedule, R: int, basis: str = "Z") -> Circuit:
    """Preparation round, ``R`` extraction rounds and a transversal readout.

    Detectors and the two logical observables are of type ``basis``.
    """
    if R < 1:
        raise InvalidParameter("memory experiment needs R >= 1")
    _require_circuit_family(schedule)
    if schedule.R < R + 1:
        schedule = schedule.extend(R + 1)
    n = 2 * L * L
    data = tuple(range(n))
    rec = _Recorder()
    rec.add(Instruction("R" if basis == "Z" else "RX", data))
    rec.add(Instruction("TICK"))
    layers = []
    for t in range(R + 1):
        recs = []
        for ins in build_round_circuit(L, schedule, t):
            got = rec.add(ins)
            if ins.name == "M":
                recs.append(list(got))
        zrec, xrec = recs
        U = schedule.conversion(t, basis)
        layers.append(_converted(U, zrec if basis == "Z" else xrec))
    final = rec.add(Instruction("M" if basis == "Z" else "MX", data))
    lat = TorusLattice(L)
    readout = [[final[q] for q in lat.cell(basis, r, c)] for r in range(L) for c in range(L)]
    _emit_detectors(rec, L, layers, readout)
    for k, sup in enumerate(logical_operators(L).z if basis == "Z" else logical_operators(L).x):
        rec.observable(k, [final[q] for q in sup])
    return Circuit(4 * L * L, tuple(rec.ins), data)


def build_phenomenological_experiment(L: int, schedule: Schedule, R: int) -> Circuit:
    """``R`` rounds of ideal parity measurements and a perfect readout.

    Noise is attached later: data flips at each ``# round`` marker and
    classical flips on every ``MPP`` outcome.
    """
    if R < 1:
        raise InvalidParameter("need R >= 1")
    if schedule.R < R:
        schedule = schedule.extend(R)
    n = 2 * L * L
    data = tuple(range(n))
    rec = _Recorder()
    rec.add(Instruction("R", data))
    layers = []
    for t in range(R):
        rec.add(Instruction("ROUND", (), (t,)))
        cs = schedule.check_set(t, "Z")
        got = rec.add(Instruction("MPP", tuple(ch.support for ch in cs.checks)))
        layers.append(_converted(cs.conversion, list(got)))
        rec.add(Instruction("TICK"))
    final = rec.add(Instruction("M", data))
    lat = TorusLattice(L)
    readout = [[final[q] for q in lat.plaquette(r, c)] for r in range(L) for c in range(L)]
    _emit_detectors(rec, L, layers, readout)
    for k, sup in enumerate(logical_operators(L).z):
        rec.observable(k, [final[q] for q in sup])
    return Circuit(n, tuple(rec.ins), data)
