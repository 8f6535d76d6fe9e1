"""Measurement schedules over alternating partitions and time-distance tools."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .code import (
    TIME,
    CheckSet,
    InvalidParameter,
    build_fixed_width_checks,
    build_local_checks,
    build_single_shot_checks,
    build_variable_width_checks,
    even_origins,
)


class CheckKind(str, enum.Enum):
    LOCAL = "local"
    SINGLE_SHOT = "ss"
    VARIABLE_WIDTH = "vw"
    FIXED_WIDTH = "fw"

    @classmethod
    def parse(cls, s: "str | CheckKind") -> "CheckKind":
        if isinstance(s, cls):
            return s
        key = str(s).strip().lower().replace("-", "").replace("_", "")
        aliases = {
            "local": cls.LOCAL,
            "ss": cls.SINGLE_SHOT,
            "singleshot": cls.SINGLE_SHOT,
            "vw": cls.VARIABLE_WIDTH,
            "variablewidth": cls.VARIABLE_WIDTH,
            "fw": cls.FIXED_WIDTH,
            "fixedwidth": cls.FIXED_WIDTH,
        }
        try:
            return aliases[key]
        except KeyError:
            raise InvalidParameter(f"unknown check family {s!r}") from None


class Scheme(str, enum.Enum):
    ALIGNED = "aligned"
    OFFSET = "offset"

    @classmethod
    def parse(cls, s: "str | Scheme") -> "Scheme":
        if isinstance(s, cls):
            return s
        try:
            return cls(str(s).strip().lower())
        except ValueError:
            raise InvalidParameter(f"unknown scheme {s!r}") from None


@dataclass(frozen=True)
class Partition:
    kind: str  # "square" or "strip"
    l: int
    origins: tuple[tuple[int, int], ...]
    parity: int

    def covers(self, L: int) -> np.ndarray:
        """How many patches cover each cell; a valid tiling gives all ones."""
        cnt = np.zeros((L, L), dtype=np.int64)
        w = self.l if self.kind == "square" else 1
        for u, v in self.origins:
            for i in range(self.l):
                for j in range(w):
                    cnt[(u + i) % L, (v + j) % L] += 1
        return cnt


def make_partition(L: int, l: int, kind: str, parity: int) -> Partition:
    if l < 1 or L % l:
        raise InvalidParameter(f"patch size {l} does not divide L={L}")
    base = even_origins(L, l, kind)
    s = (l // 2) * (parity % 2)
    if kind == "square":
        origins = [((u + s) % L, (v + s) % L) for u, v in base]
    else:
        origins = [((u + s) % L, v) for u, v in base]
    return Partition(kind, l, tuple(origins), parity % 2)


@dataclass(frozen=True)
class Schedule:
    """Round ``t`` measures ``sets[parities[t]]``.

    ``sets`` and ``x_sets`` hold the Z- and X-type families for the even and
    odd partitions; aligned schedules use the even entry throughout.
    """

    L: int
    l: int
    kind: CheckKind
    scheme: Scheme
    R: int
    parities: tuple[int, ...]
    partitions: tuple[Partition | None, Partition | None]
    sets: tuple[CheckSet, CheckSet]
    x_sets: tuple[CheckSet, CheckSet] = field(repr=False, default=None)

    def check_set(self, t: int, pauli: str = "Z") -> CheckSet:
        src = self.sets if pauli == "Z" else self.x_sets
        return src[self.parities[t]]

    def conversion(self, t: int, pauli: str = "Z") -> np.ndarray:
        return self.check_set(t, pauli).conversion

    def extend(self, R: int) -> "Schedule":
        """Same schedule over ``R`` rounds."""
        return make_schedule(self.L, self.l, self.kind, self.scheme, R)

    @cached_property
    def _allowed(self) -> tuple[frozenset, frozenset]:
        out = []
        for cs in self.sets:
            U = cs.conversion
            cells = set()
            for k, ch in enumerate(cs.checks):
                if ch.mapped_qubit == TIME:
                    (i,) = np.flatnonzero(U[:, k])
                    cells.add(divmod(int(i), self.L))
            out.append(frozenset(cells))
        return out[0], out[1]

    def allowed_positions(self, t: int) -> frozenset:
        """Cells ``(r, c)`` where a measurement error of round ``t`` is a time edge."""
        return self._allowed[self.parities[t]]

    def allowed_rows(self, t: int) -> frozenset:
        return frozenset(r for r, _ in self.allowed_positions(t))


_CACHE: dict = {}


def _family_sets(L: int, l: int, kind: CheckKind, partition: Partition | None):
    key = (L, l, kind, partition.origins if partition else None)
    if key not in _CACHE:
        if kind is CheckKind.LOCAL:
            z, x = build_local_checks(L)
        elif kind is CheckKind.SINGLE_SHOT:
            z, x = build_single_shot_checks(L, "Z"), build_single_shot_checks(L, "X")
        elif kind is CheckKind.VARIABLE_WIDTH:
            z = build_variable_width_checks(L, l, partition.origins, "Z")
            x = build_variable_width_checks(L, l, partition.origins, "X")
        else:
            z = build_fixed_width_checks(L, l, partition.origins, "Z")
            x = build_fixed_width_checks(L, l, partition.origins, "X")
        _CACHE[key] = (z, x)
    return _CACHE[key]


def make_schedule(L: int, l: int, family, scheme, R: int) -> Schedule:
    """Alternate even/odd partitions (offset) or repeat the even one (aligned).

    ``l`` is ignored for local and single-shot families.
    """
    kind = CheckKind.parse(family)
    scheme = Scheme.parse(scheme)
    if R < 1:
        raise InvalidParameter(f"need at least one round, got R={R}")
    if kind in (CheckKind.LOCAL, CheckKind.SINGLE_SHOT):
        l = 1 if kind is CheckKind.LOCAL else L
        z, x = _family_sets(L, l, kind, None)
        parts = (None, None)
        zs, xs = (z, z), (x, x)
        parities = (0,) * R
    else:
        if l < 1 or L % l:
            raise InvalidParameter(f"patch size {l} does not divide L={L}")
        pk = "square" if kind is CheckKind.VARIABLE_WIDTH else "strip"
        parts = (make_partition(L, l, pk, 0), make_partition(L, l, pk, 1))
        pairs = [_family_sets(L, l, kind, p) for p in parts]
        zs = (pairs[0][0], pairs[1][0])
        xs = (pairs[0][1], pairs[1][1])
        if scheme is Scheme.OFFSET:
            parities = tuple(t % 2 for t in range(R))
        else:
            parities = (0,) * R
    return Schedule(L, l, kind, scheme, R, parities, parts, zs, xs)


def predicted_time_distance(W: int, l: int, family) -> int:
    kind = CheckKind.parse(family)
    if kind is CheckKind.LOCAL or l <= 1:
        return W
    if kind is CheckKind.FIXED_WIDTH:
        return W + (W - 1) * (l // 2)
    if kind is CheckKind.VARIABLE_WIDTH:
        return W + 2 * (W - 1) * (l // 2)
    raise InvalidParameter("single-shot checks have no time edges")


def min_window(d: int, l: int, family) -> int:
    """Least ``W`` whose predicted time distance reaches ``d``."""
    kind = CheckKind.parse(family)
    if kind is CheckKind.SINGLE_SHOT or (kind is CheckKind.VARIABLE_WIDTH and l >= d):
        return 1
    k = l // 2 if kind is CheckKind.FIXED_WIDTH else 2 * (l // 2)
    if kind is CheckKind.LOCAL:
        k = 0
    return max(1, -(-(d + k) // (1 + k)))


def time_distance_bfs(graph, t_i: int, W: int) -> float:
    """Fewest edges from layer ``t_i`` to the time boundary after ``t_i + W - 1``.

    ``graph`` needs ``nodes`` (each with a ``t`` attribute) and ``edges``
    (pairs of node indices).  Returns ``math.inf`` when no path exists.
    """
    if not graph.nodes:
        raise InvalidParameter("empty decoding graph")
    lo, hi = t_i, t_i + W - 1
    layer = np.array([n.t for n in graph.nodes])
    if layer.max() < hi + 1:
        raise InvalidParameter(f"graph has no layer {hi + 1} to act as the time boundary")
    n = len(graph.nodes)
    boundary = n
    adj: list[list[int]] = [[] for _ in range(n + 1)]
    for u, v in graph.edge_pairs():
        tu, tv = layer[u], layer[v]
        inu, inv = lo <= tu <= hi, lo <= tv <= hi
        if inu and inv:
            adj[u].append(v)
            adj[v].append(u)
        elif inu and tv == hi + 1:
            adj[u].append(boundary)
        elif inv and tu == hi + 1:
            adj[v].append(boundary)
    dist = np.full(n + 1, -1)
    real = np.array([not getattr(nd, "aux", False) for nd in graph.nodes])
    q = deque(int(i) for i in np.flatnonzero((layer == lo) & real))
    for i in q:
        dist[i] = 0
    while q:
        u = q.popleft()
        if u == boundary:
            return int(dist[u])
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return math.inf


def window_sizes(d: int) -> Sequence[int]:
    """Window sweep ``2d, d, 3d/4, d/2, d/4`` (floors, at least 1)."""
    return [max(1, w) for w in (2 * d, d, (3 * d) // 4, d // 2, d // 4)]
