"""Decoding-graph compilation: detectors, hyperedges and their decomposition.

Vertices are detectors ``(r, c, t)`` on local-check positions plus, for the
space-edge-first pass, auxiliary vertices that are never flipped.  A
cross-layer edge from layer ``t`` to ``t + 1`` is *allowed* when it starts
and ends in the same row at positions listed for layer ``t`` (where
measurement errors of round ``t`` appear as time edges) and moves at most
one column.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import gf2
from .code import TorusLattice, chain_mask, displacement, logical_operators
from .noise import ErrorMechanism, merge_probability
from .schedule import Schedule, make_schedule, time_distance_bfs

P_MAX = 0.5 - 1e-9


class UnsupportedHyperedge(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Node:
    t: int
    r: int
    c: int
    aux: bool = False

    def pos(self) -> tuple[int, int]:
        return self.r, self.c


@dataclass
class Edge:
    u: int
    v: int | None  # None is the boundary
    p: float
    mask: int

    @property
    def weight(self) -> float:
        return edge_weight(self.p)


def edge_weight(p: float) -> float:
    p = min(max(p, 1e-300), P_MAX)
    return math.log((1 - p) / p)


@dataclass
class Diagnostic:
    kind: str  # "unsupported-hyperedge", "mask-mismatch", "undetectable-logical"
    detectors: tuple
    origin: object
    detail: str = ""


@dataclass
class DecodingGraph:
    L: int
    nodes: list[Node] = field(default_factory=list)
    n_detectors: int = 0
    edges: dict = field(default_factory=dict)  # (u, v) -> Edge
    hyperedges: list = field(default_factory=list)
    allowed: dict = field(default_factory=dict)  # layer -> frozenset of (r, c)
    diagnostics: list = field(default_factory=list)
    decomposition: str = ""
    _index: dict = field(default_factory=dict, repr=False)

    @classmethod
    def with_detectors(cls, L: int, coords: Sequence[tuple], **kw) -> "DecodingGraph":
        g = cls(L, **kw)
        for r, c, t in coords:
            g.node(Node(int(t), int(r), int(c)))
        g.n_detectors = len(g.nodes)
        return g

    def node(self, n: Node) -> int:
        i = self._index.get(n)
        if i is None:
            i = len(self.nodes)
            self.nodes.append(n)
            self._index[n] = i
        return i

    def index_of(self, n: Node) -> int | None:
        return self._index.get(n)

    @property
    def n_layers(self) -> int:
        return 1 + max(n.t for n in self.nodes) if self.nodes else 0

    def add_edge(self, u: int, v: int | None, p: float, mask: int) -> None:
        if p <= 0 or u == v:
            return
        key = (u, v) if v is None or u < v else (v, u)
        e = self.edges.get(key)
        if e is None:
            self.edges[key] = Edge(key[0], key[1], p, mask)
            return
        if e.mask != mask:
            # keep the mask of the dominant contribution
            if p > e.p:
                e.mask = mask
            self.diagnostics.append(Diagnostic("mask-conflict", key, None, f"{e.mask} vs {mask}"))
        e.p = merge_probability(e.p, p)

    def edge_pairs(self) -> Iterable[tuple[int, int]]:
        for (u, v) in self.edges:
            if v is not None:
                yield u, v

    def edge_kind(self, e: Edge) -> str:
        if e.v is None:
            return "boundary"
        a, b = self.nodes[e.u], self.nodes[e.v]
        if a.t == b.t:
            return "space"
        return "time" if a.pos() == b.pos() else "spacetime"

    def stats(self) -> dict:
        kinds = {"space": 0, "time": 0, "spacetime": 0, "boundary": 0}
        for e in self.edges.values():
            kinds[self.edge_kind(e)] += 1
        unsupported = sum(1 for d in self.diagnostics if d.kind == "unsupported-hyperedge")
        return {
            "vertices": len(self.nodes),
            "detectors": self.n_detectors,
            "aux": len(self.nodes) - self.n_detectors,
            "edges": len(self.edges),
            **{f"{k}_edges": v for k, v in kinds.items()},
            "hyperedges": len(self.hyperedges),
            "unsupported": unsupported,
        }

    def check_locality(self) -> list[Edge]:
        """Edges whose same-layer projection is neither a nearest nor a diagonal neighbour."""
        bad = []
        for e in self.edges.values():
            if e.v is None:
                continue
            a, b = self.nodes[e.u], self.nodes[e.v]
            if abs(a.t - b.t) > 1 or not _local(self.L, a.pos(), b.pos(), allow_same=a.t != b.t):
                bad.append(e)
        return bad

    def check_allowed(self) -> list[Edge]:
        """Cross-layer edges outside the allowed positions."""
        bad = []
        for e in self.edges.values():
            if e.v is None:
                continue
            a, b = sorted((self.nodes[e.u], self.nodes[e.v]))
            if a.t != b.t and not _allowed_cross(self.L, self.allowed, a, b):
                bad.append(e)
        return bad

    # --- matching helpers ----------------------------------------------

    def weighted_edges(self) -> list[tuple[int, int | None, float, int, float]]:
        return [(e.u, e.v, e.weight, e.mask, e.p) for e in self.edges.values()]

    def to_pymatching(self, nodes: set | None = None, boundary: set | None = None, fault_ids=None):
        import pymatching

        m = pymatching.Matching()
        for key, e in self.edges.items():
            fid = fault_ids(e) if fault_ids is not None else _mask_bits(e.mask)
            if e.v is None:
                m.add_boundary_edge(e.u, fault_ids=fid, weight=e.weight, error_probability=e.p)
            else:
                m.add_edge(e.u, e.v, fault_ids=fid, weight=e.weight, error_probability=e.p)
        return m

    # --- DEM text ------------------------------------------------------

    def to_dem(self) -> str:
        lines = []
        for key in sorted(self.edges, key=lambda k: (k[0], -1 if k[1] is None else k[1])):
            e = self.edges[key]
            ds = f"D{e.u}" if e.v is None else f"D{e.u} D{e.v}"
            ls = "".join(f" L{k}" for k in _mask_bits(e.mask))
            lines.append(f"error({e.p:.12g}) {ds}{ls}")
        for i, n in enumerate(self.nodes):
            extra = ", 1" if n.aux else ""
            lines.append(f"detector({n.r}, {n.c}, {n.t}{extra}) D{i}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dem(cls, text: str, L: int) -> "DecodingGraph":
        g = cls(L)
        coords: dict[int, Node] = {}
        errs = []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            head, _, rest = line.partition(")")
            name, _, arg = head.partition("(")
            toks = rest.split()
            if name == "detector":
                vals = [int(float(v)) for v in arg.split(",")]
                (i,) = [int(t[1:]) for t in toks]
                coords[i] = Node(vals[2], vals[0], vals[1], len(vals) > 3 and bool(vals[3]))
            elif name == "error":
                ds = [int(t[1:]) for t in toks if t.startswith("D")]
                mask = 0
                for t in toks:
                    if t.startswith("L"):
                        mask ^= 1 << int(t[1:])
                errs.append((float(arg), ds, mask))
            else:
                raise ValueError(f"unsupported DEM line {raw!r}")
        for i in range(len(coords)):
            g.node(coords[i])
        g.n_detectors = sum(1 for n in g.nodes if not n.aux)
        for p, ds, mask in errs:
            if len(ds) == 1:
                g.add_edge(ds[0], None, p, mask)
            elif len(ds) == 2:
                g.add_edge(ds[0], ds[1], p, mask)
            else:
                raise UnsupportedHyperedge(f"DEM error with {len(ds)} detectors")
        return g


def _mask_bits(mask: int) -> set[int]:
    return {k for k in range(mask.bit_length()) if mask >> k & 1}


def merge_parallel_edges(p1: float, p2: float) -> float:
    return merge_probability(p1, p2)


# --- geometry --------------------------------------------------------------


def _offset(L: int, a, b) -> tuple[int, int]:
    return abs(displacement(L, a[0], b[0])), abs(displacement(L, a[1], b[1]))


def _local(L: int, a, b, allow_same: bool = False) -> bool:
    dr, dc = _offset(L, a, b)
    if dr == dc == 0:
        return allow_same
    return dr + dc == 1 or (dr == 1 and dc == 1)


def _allowed_cross(L: int, allowed: Mapping[int, frozenset], lo: Node, hi: Node) -> bool:
    if hi.t != lo.t + 1:
        return False
    pos = allowed.get(lo.t, frozenset())
    if len(pos) == L * L:
        return _local(L, lo.pos(), hi.pos(), allow_same=True)
    return lo.r == hi.r and lo.pos() in pos and hi.pos() in pos and _offset(L, lo.pos(), hi.pos())[1] <= 1


def _sub_mask(L: int, a: Node, b: Node) -> int:
    return chain_mask(L, a.pos(), b.pos())


# --- decomposition ----------------------------------------------------------


def _aligned_pairs(nodes: Sequence[Node]):
    """Greedy pairing of detectors sharing a position on adjacent layers."""
    used = set()
    pairs = []
    s = set(nodes)
    for n in sorted(nodes):
        if n in used:
            continue
        up = Node(n.t + 1, n.r, n.c)
        if up in s and up not in used:
            pairs.append((n, up))
            used.update((n, up))
    rest = [n for n in sorted(nodes) if n not in used]
    return pairs, rest


def decompose_time_edge_first(L: int, nodes: Sequence[Node]) -> list[tuple[Node, Node | None]]:
    """Time edges for aligned pairs, then at most one direct edge."""
    pairs, rest = _aligned_pairs(nodes)
    out: list[tuple[Node, Node | None]] = list(pairs)
    if len(rest) > 2:
        raise UnsupportedHyperedge(f"{len(rest)} detectors left after pairing")
    if len(rest) == 2:
        a, b = rest
        if abs(a.t - b.t) > 1 or not _local(L, a.pos(), b.pos()):
            raise UnsupportedHyperedge("residual detectors are not local")
        out.append((a, b))
    elif len(rest) == 1:
        out.append((rest[0], None))
    return out


_COST_SPACE, _COST_TIME, _COST_ST, _COST_AUX = 1.0, 1.25, 1.5, 0.6
# auxiliary vertices that are not projections of a hyperedge detector cost a
# little more, which settles ties on small tori where two routes exist
_COST_AUX_FAR = 0.7


def _edge_cost(L: int, allowed, a: Node, b: Node, near=frozenset()) -> float | None:
    if a.t == b.t:
        if not _local(L, a.pos(), b.pos()):
            return None
        cost = _COST_SPACE
    else:
        lo, hi = (a, b) if a.t < b.t else (b, a)
        if not _allowed_cross(L, allowed, lo, hi):
            return None
        cost = _COST_TIME if lo.pos() == hi.pos() else _COST_ST
    for n in (a, b):
        if n.aux:
            cost += _COST_AUX if n.pos() in near else _COST_AUX_FAR
    return cost


def _tjoin(L: int, allowed, nodes: Sequence[Node], target: int | None = None) -> list[tuple[Node, Node]]:
    """Cheapest allowed edge set with odd degree exactly on ``nodes``.

    Intermediate vertices are auxiliary copies of nearby positions, so the
    result flips exactly the hyperedge's detectors.  With ``target`` set, the
    chain masks of the chosen edges must also XOR to ``target``; on small
    tori this can force a path the long way round.
    """
    s = set(nodes)
    tmin = min(n.t for n in nodes)
    tmax = max(n.t for n in nodes)
    cand = set(s)
    for n in nodes:
        for t in range(max(tmin, n.t - 1), min(tmax, n.t + 1) + 1):
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    a = Node(t, (n.r + dr) % L, (n.c + dc) % L, True)
                    if Node(a.t, a.r, a.c) not in s:
                        cand.add(a)
    cand = sorted(cand)
    idx = {n: i for i, n in enumerate(cand)}
    near = frozenset(n.pos() for n in nodes)
    adj: list[list[tuple[int, float, int]]] = [[] for _ in cand]
    for i, a in enumerate(cand):
        for j in range(i + 1, len(cand)):
            w = _edge_cost(L, allowed, a, cand[j], near)
            if w is not None:
                m = _sub_mask(L, a, cand[j]) if target is not None else 0
                adj[i].append((j, w, m))
                adj[j].append((i, w, m))
    terms = sorted(s)
    paths: dict = {}  # (a, b) -> {mask: (cost, chain)}
    for a in terms:
        dist, prev = _dijkstra(adj, idx[a])
        for b in terms:
            if b == a:
                continue
            for (x, m), d in dist.items():
                if x != idx[b]:
                    continue
                chain, state = [x], (x, m)
                while state != (idx[a], 0):
                    state = prev[state]
                    chain.append(state[0])
                paths.setdefault((a, b), {})[m] = (d, chain)
    best, best_cost = None, math.inf
    for pairing in _pairings(terms):
        options = [paths.get(pair, {}) for pair in pairing]
        if not all(options):
            continue
        for choice in itertools.product(*(sorted(o.items()) for o in options)):
            total = 0
            for m, _ in choice:
                total ^= m
            if target is not None and total != target:
                continue
            cost = sum(c for _, (c, _) in choice)
            if cost < best_cost - 1e-9:
                best, best_cost = [ch for _, (_, ch) in choice], cost
    if best is None:
        raise UnsupportedHyperedge("no allowed decomposition")
    used: dict[tuple[int, int], int] = {}
    for chain in best:
        for x, y in zip(chain, chain[1:]):
            k = (min(x, y), max(x, y))
            used[k] = used.get(k, 0) ^ 1
    return [(cand[x], cand[y]) for (x, y), on in sorted(used.items()) if on]


def _dijkstra(adj, src):
    """Shortest paths over (vertex, accumulated mask) states."""
    start = (src, 0)
    dist = {start: 0.0}
    prev = {}
    heap = [(0.0, start)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, w, m in adj[u[0]]:
            nv = (v, u[1] ^ m)
            nd = d + w
            old = dist.get(nv, math.inf)
            if nd < old - 1e-12 or (abs(nd - old) <= 1e-12 and u < prev.get(nv, (math.inf,))):
                dist[nv] = nd
                prev[nv] = u
                heapq.heappush(heap, (nd, nv))
    return dist, prev


def _pairings(items):
    if not items:
        yield []
        return
    a = items[0]
    for i in range(1, len(items)):
        b = items[i]
        rest = items[1:i] + items[i + 1 :]
        for p in _pairings(rest):
            yield [(a, b)] + p


def decompose_space_edge_first(
    L: int, nodes: Sequence[Node], allowed: Mapping[int, frozenset], mask: int | None = None
) -> list[tuple[Node, Node | None]]:
    """Prefer space edges; cross layers only at allowed positions.

    When ``mask`` is given and the chain masks of the cheapest split miss
    it, the split is recomputed with the logical class as a constraint.
    """
    subs = _space_first(L, nodes, allowed)
    if mask is None or len(nodes) < 2 or _chain_total(L, subs) == mask:
        return subs
    try:
        return _tjoin(L, allowed, sorted(nodes), target=mask)
    except UnsupportedHyperedge:
        return subs


def _chain_total(L: int, subs) -> int:
    total = 0
    for a, b in subs:
        if b is not None:
            total ^= _sub_mask(L, a, b)
    return total


def _space_first(L: int, nodes: Sequence[Node], allowed) -> list[tuple[Node, Node | None]]:
    nodes = sorted(nodes)
    k = len(nodes)
    if k == 1:
        return [(nodes[0], None)]
    pairs, rest = _aligned_pairs(nodes)
    same = lambda a, b: a.t == b.t and _local(L, a.pos(), b.pos())
    ok_time = lambda lo, hi: _allowed_cross(L, allowed, lo, hi)
    if k == 2:
        a, b = nodes
        if same(a, b) or (a.t + 1 == b.t and ok_time(a, b)):
            return [(a, b)]
    elif k == 4 and len(pairs) == 2:
        (a0, a1), (b0, b1) = pairs
        if a0.t == b0.t and same(a0, b0) and same(a1, b1):
            return [(a0, b0), (a1, b1)]
    elif k == 4 and len(pairs) == 1:
        (p0, p1), (x, y) = pairs[0], rest
        if x.t == y.t and same(x, y) and ok_time(p0, p1):
            return [(p0, p1), (x, y)]
        if x.t != y.t:
            lo, hi = (x, y) if x.t < y.t else (y, x)
            if lo.t == p0.t and hi.t == p1.t and same(p0, lo) and same(p1, hi):
                return [(p0, lo), (p1, hi)]
    elif k == 6 and len(pairs) == 2 and len(rest) == 2:
        (a0, a1), (b0, b1) = pairs
        x, y = rest
        if same(x, y):
            if ok_time(a0, a1) and ok_time(b0, b1):
                return [(a0, a1), (b0, b1), (x, y)]
            if a0.t == b0.t and same(a0, b0) and same(a1, b1):
                return [(a0, b0), (a1, b1), (x, y)]
    if k % 2:
        raise UnsupportedHyperedge(f"odd degree {k}")
    return _tjoin(L, allowed, nodes)


def _apply_mechanism(g: DecodingGraph, coords, mech: ErrorMechanism, kind: str) -> None:
    nodes = [g.nodes[i] for i in mech.detectors]
    if not nodes:
        if mech.logical_mask:
            g.diagnostics.append(Diagnostic("undetectable-logical", (), mech.origin))
        return
    g.hyperedges.append(mech)
    try:
        if kind == "time-first":
            subs = decompose_time_edge_first(g.L, nodes)
        elif kind == "space-first":
            subs = decompose_space_edge_first(g.L, nodes, g.allowed, mech.logical_mask)
        else:
            raise ValueError(f"unknown decomposition {kind!r}")
    except UnsupportedHyperedge as exc:
        g.diagnostics.append(Diagnostic("unsupported-hyperedge", tuple(nodes), mech.origin, str(exc)))
        return
    masks = [0 if b is None else _sub_mask(g.L, a, b) for a, b in subs]
    total = 0
    for m in masks:
        total ^= m
    if total != mech.logical_mask:
        g.diagnostics.append(Diagnostic("mask-mismatch", tuple(nodes), mech.origin, f"{total} != {mech.logical_mask}"))
        # keep the graph sound: the first sub-edge absorbs the difference
        masks[0] ^= total ^ mech.logical_mask
    for (a, b), m in zip(subs, masks):
        u = g.node(a)
        v = None if b is None else g.node(b)
        g.add_edge(u, v, mech.probability, m)


def signature_xor(g: DecodingGraph, subs: Sequence[tuple[Node, Node | None]]) -> set[Node]:
    """Vertices of odd degree, auxiliary vertices included."""
    out: set[Node] = set()
    for a, b in subs:
        out ^= {a}
        if b is not None:
            out ^= {b}
    return out


def allowed_table(schedule: Schedule, n_layers: int) -> dict[int, frozenset]:
    """Allowed positions for edges leaving each layer, one round per layer."""
    return {t: schedule.allowed_positions(t) for t in range(min(n_layers, schedule.R))}


def compile_circuit_graph(
    circuit, schedule: Schedule, decomposition: str = "space-first", mechanisms=None
) -> DecodingGraph:
    from .noise import enumerate_error_mechanisms

    coords = circuit.detector_coords()
    L = schedule.L
    if mechanisms is None:
        mechanisms = enumerate_error_mechanisms(circuit)
    n_layers = 1 + max(int(c[2]) for c in coords)
    if schedule.R < n_layers - 1:
        schedule = schedule.extend(n_layers - 1)
    g = DecodingGraph.with_detectors(L, coords, decomposition=decomposition)
    g.allowed = allowed_table(schedule, n_layers - 1)
    for mech in mechanisms:
        _apply_mechanism(g, coords, mech, decomposition)
    return g


def compile_phenomenological_graph(
    L: int, l: int, family, scheme, R: int, p: float = 0.01, q: float | None = None
) -> DecodingGraph:
    """Analytic graph for ``R`` noisy rounds and a perfect readout layer.

    Data flips give space edges in their round's layer; a measurement error
    whose conversion column has weight one is a time edge, weight two a pair
    of parallel space edges in consecutive layers.
    """
    q = p if q is None else q
    sched = make_schedule(L, l, family, scheme, R)
    coords = [(r, c, t) for t in range(R + 1) for r in range(L) for c in range(L)]
    g = DecodingGraph.with_detectors(L, coords, decomposition="phenomenological")
    g.allowed = allowed_table(sched, R)
    lat_cells = _qubit_cells(L)
    logical = logical_operators(L)
    qmask = np.zeros(2 * L * L, dtype=np.int64)
    for k, sup in enumerate(logical.z):
        qmask[list(sup)] ^= 1 << k
    at = lambda t, cell: t * L * L + cell
    for t in range(R):
        for qb, (a, b) in enumerate(lat_cells):
            g.add_edge(at(t, a), at(t, b), p, int(qmask[qb]))
        cs = sched.check_set(t, "Z")
        U = cs.conversion
        for k, ch in enumerate(cs.checks):
            col = np.flatnonzero(U[:, k])
            if col.size == 1:
                g.add_edge(at(t, int(col[0])), at(t + 1, int(col[0])), q, 0)
            else:
                a, b = int(col[0]), int(col[1])
                m = int(qmask[ch.mapped_qubit])
                g.add_edge(at(t, a), at(t, b), q, m)
                g.add_edge(at(t + 1, a), at(t + 1, b), q, m)
    return g


def _qubit_cells(L: int) -> list[tuple[int, int]]:
    """The two plaquettes holding each data qubit."""
    out = []
    for q in range(2 * L * L):
        r, c = divmod(q % (L * L), L)
        if q < L * L:
            out.append((((r - 1) % L) * L + c, r * L + c))
        else:
            out.append((r * L + (c - 1) % L, r * L + c))
    return out


def detectors_from_records(
    rounds: Sequence[np.ndarray], final: np.ndarray, schedule: Schedule, L: int | None = None
) -> np.ndarray:
    """Detector bits from raw check outcomes.

    ``rounds[t]`` has shape ``(shots, n_checks_t)`` and holds the Z-check
    outcomes of round ``t``; ``final`` has shape ``(shots, 2 L^2)`` and holds
    the transversal Z readout.  Returns ``(shots, (len(rounds)+1) L^2)``.
    """
    L = schedule.L if L is None else L
    if len(rounds) > schedule.R:
        raise ValueError(f"{len(rounds)} rounds recorded but the schedule has {schedule.R}")
    final = np.asarray(final, dtype=np.uint8)
    if final.ndim != 2 or final.shape[1] != 2 * L * L:
        raise ValueError("final readout must have one column per data qubit")
    shots = final.shape[0]
    layers = []
    prev = None
    for t, m in enumerate(rounds):
        m = np.asarray(m, dtype=np.uint8)
        cs = schedule.check_set(t, "Z")
        if m.shape != (shots, len(cs)):
            raise ValueError(f"round {t}: expected shape {(shots, len(cs))}, got {m.shape}")
        M = gf2.matmul(m, cs.conversion[:, : len(cs)].T)
        layers.append(M if prev is None else M ^ prev)
        prev = M
    P = TorusLattice(L).cell_matrix("Z")
    readout = gf2.matmul(final, P.T)
    layers.append(readout if prev is None else readout ^ prev)
    return np.concatenate(layers, axis=1).astype(bool)


def graph_time_distance(g: DecodingGraph, W: int, t_i: int | None = None) -> float:
    """Minimum BFS time distance over the window starts that fit in ``g``."""
    starts = [t_i] if t_i is not None else range(0, g.n_layers - W)
    return min(time_distance_bfs(g, s, W) for s in starts)
