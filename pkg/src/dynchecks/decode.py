"""Minimum-weight perfect matching, full-history and sliding-window decoding.

Two interchangeable backends share one edge model: a reference decoder
(Dijkstra plus exact blossom matching from networkx) and a batch decoder on
top of pymatching.  Each edge carries a set of fault ids; a decoder returns
the XOR of the fault ids of the edges in the correction.  Logical
observables use ids ``0`` and ``1``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import networkx as nx
import numpy as np

from .graph import DecodingGraph


class UnmatchableSyndrome(ValueError):
    pass


@dataclass(frozen=True)
class Correction:
    edges: tuple[tuple[int, int | None], ...]
    flips: int
    weight: float = 0.0


@dataclass
class EdgeModel:
    """Edges over ``n`` vertices; ``v == -1`` is the boundary."""

    n: int
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    faults: list[int]  # bitmask of fault ids per edge
    boundary_nodes: frozenset = frozenset()

    @classmethod
    def from_graph(cls, g: DecodingGraph) -> "EdgeModel":
        es = list(g.edges.values())
        return cls(
            len(g.nodes),
            np.array([e.u for e in es], dtype=np.int64),
            np.array([-1 if e.v is None else e.v for e in es], dtype=np.int64),
            np.array([e.weight for e in es], dtype=float),
            [e.mask for e in es],
        )

    def adjacency(self):
        adj: list[list[tuple[int, float, int]]] = [[] for _ in range(self.n + 1)]
        b = self.n  # virtual boundary vertex
        for k in range(len(self.u)):
            a = int(self.u[k])
            c = b if self.v[k] < 0 or self.v[k] in self.boundary_nodes else int(self.v[k])
            if a in self.boundary_nodes:
                a, c = c, b
            adj[a].append((c, float(self.w[k]), k))
            adj[c].append((a, float(self.w[k]), k))
        return adj

    def to_pymatching(self):
        import pymatching

        m = pymatching.Matching()
        for k in range(len(self.u)):
            fid = {i for i in range(self.faults[k].bit_length()) if self.faults[k] >> i & 1}
            if self.v[k] < 0:
                m.add_boundary_edge(int(self.u[k]), fault_ids=fid, weight=float(self.w[k]), merge_strategy="smallest-weight")
            else:
                m.add_edge(int(self.u[k]), int(self.v[k]), fault_ids=fid, weight=float(self.w[k]), merge_strategy="smallest-weight")
        if self.boundary_nodes:
            m.set_boundary_nodes(set(int(x) for x in self.boundary_nodes))
        nf = max((f.bit_length() for f in self.faults), default=0)
        m.ensure_num_fault_ids(max(nf, 2))
        return m


def _dijkstra(adj, src: int):
    """Shortest paths with ties broken towards smaller predecessor ids."""
    dist = {src: 0.0}
    prev: dict[int, tuple[int, int]] = {}
    heap = [(0.0, src)]
    done = set()
    while heap:
        d, x = heapq.heappop(heap)
        if x in done:
            continue
        done.add(x)
        for y, w, k in adj[x]:
            nd = d + w
            old = dist.get(y, math.inf)
            if nd < old - 1e-12 or (abs(nd - old) <= 1e-12 and y not in done and x < prev.get(y, (math.inf,))[0]):
                dist[y] = nd
                prev[y] = (x, k)
                heapq.heappush(heap, (nd, y))
    return dist, prev


def _path_edges(prev, src: int, dst: int) -> list[int]:
    out = []
    x = dst
    while x != src:
        x, k = prev[x]
        out.append(k)
    return out


def match_defects(model: EdgeModel, defects: Sequence[int], adj=None) -> tuple[list[int], float]:
    """Exact minimum-weight correction; returns (edge indices, total weight)."""
    defects = sorted(set(int(d) for d in defects))
    if not defects:
        return [], 0.0
    adj = adj if adj is not None else model.adjacency()
    b = model.n
    runs = {d: _dijkstra(adj, d) for d in defects}
    G = nx.Graph()
    big = 0.0
    pairs = {}
    for i, a in enumerate(defects):
        dist, _ = runs[a]
        for c in defects[i + 1 :]:
            if c in dist:
                pairs[(a, c)] = dist[c]
        if b in dist:
            pairs[(a, ("B", a))] = dist[b]
    for v in pairs.values():
        big = max(big, v)
    big = 2 * big + 1.0
    for (a, c), d in pairs.items():
        G.add_edge(a, c, weight=big - d)
    bnodes = [("B", a) for a in defects if (a, ("B", a)) in pairs]
    for i, x in enumerate(bnodes):
        for y in bnodes[i + 1 :]:
            G.add_edge(x, y, weight=big)
    G.add_nodes_from(defects)
    mate = nx.max_weight_matching(G, maxcardinality=True)
    matched = set()
    for x, y in mate:
        matched.add(x)
        matched.add(y)
    if any(d not in matched for d in defects):
        raise UnmatchableSyndrome(f"no perfect matching for {len(defects)} defects")
    edges: dict[int, int] = {}
    total = 0.0
    for x, y in mate:
        if isinstance(x, tuple) and isinstance(y, tuple):
            continue
        if isinstance(x, tuple):
            x, y = y, x
        dist, prev = runs[x]
        dst = b if isinstance(y, tuple) else y
        total += dist[dst]
        for k in _path_edges(prev, x, dst):
            edges[k] = edges.get(k, 0) ^ 1
    return sorted(k for k, on in edges.items() if on), total


def mwpm_decode(graph: DecodingGraph, syndrome) -> Correction:
    """Reference decoder on a compiled graph.

    ``syndrome`` is either a collection of flipped vertex ids or a boolean
    vector over detectors.
    """
    s = np.asarray(list(syndrome) if not isinstance(syndrome, np.ndarray) else syndrome)
    if s.dtype == bool:
        defects = [int(i) for i in np.flatnonzero(s)]
    else:
        defects = [int(i) for i in s]
    model = EdgeModel.from_graph(graph)
    ks, total = match_defects(model, defects)
    flips = 0
    out = []
    for k in ks:
        flips ^= model.faults[k]
        out.append((int(model.u[k]), None if model.v[k] < 0 else int(model.v[k])))
    return Correction(tuple(out), flips, total)


# --- batch decoding ----------------------------------------------------------


def _pad(graph: DecodingGraph, dets: np.ndarray) -> np.ndarray:
    dets = np.asarray(dets, dtype=bool)
    if dets.ndim == 1:
        dets = dets[None, :]
    n = len(graph.nodes)
    if dets.shape[1] == n:
        return dets
    out = np.zeros((dets.shape[0], n), dtype=bool)
    out[:, : dets.shape[1]] = dets
    return out


def _bits_to_int(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    if bits.ndim == 1:
        bits = bits[:, None]
    return bits @ (1 << np.arange(bits.shape[1], dtype=np.int64))


def _have_pymatching() -> bool:
    try:
        import pymatching  # noqa: F401
    except ImportError:
        return False
    return True


@dataclass
class _Window:
    model: EdgeModel
    local: np.ndarray  # global vertex id of each local vertex
    n_window: int  # local ids below this are in the window
    seam: np.ndarray  # global ids receiving flips from committed edges
    matcher: object = None


class Decoder:
    """Batch decoder for one compiled graph.

    ``backend`` is ``"pymatching"`` (default when installed) or
    ``"reference"``.
    """

    def __init__(self, graph: DecodingGraph, backend: str | None = None):
        self.graph = graph
        if backend is None:
            backend = "pymatching" if _have_pymatching() else "reference"
        self.backend = backend
        self.layer = np.array([n.t for n in graph.nodes], dtype=np.int64)
        self.n_layers = int(self.layer.max()) + 1 if len(self.layer) else 0
        self._windows: dict = {}
        self._full = None

    # one matching problem -------------------------------------------------

    def _solve(self, win: _Window, synd: np.ndarray) -> np.ndarray:
        """XOR of fault bitmasks per shot (python ints packed in an object array)."""
        shots = synd.shape[0]
        if self.backend == "pymatching":
            if win.matcher is None:
                win.matcher = win.model.to_pymatching()
            m = win.matcher
            n = m.num_detectors
            if synd.shape[1] > n and synd[:, n:].any():
                raise UnmatchableSyndrome("defect on a vertex with no incident edge")
            s = np.zeros((shots, n), dtype=np.uint8)
            k = min(n, synd.shape[1])
            s[:, :k] = synd[:, :k]
            return m.decode_batch(s).astype(np.uint8)
        adj = win.model.adjacency()
        nf = max((f.bit_length() for f in win.model.faults), default=0)
        out = np.zeros((shots, max(nf, 1)), dtype=np.uint8)
        for i in range(shots):
            ks, _ = match_defects(win.model, np.flatnonzero(synd[i]), adj)
            f = 0
            for k in ks:
                f ^= win.model.faults[k]
            for j in range(nf):
                out[i, j] = f >> j & 1
        return out

    def _window(self, s: int, W: int, F: int) -> _Window:
        key = (s, W, F)
        if key in self._windows:
            return self._windows[key]
        g, lay = self.graph, self.layer
        final = s + W >= self.n_layers - 1
        hi = self.n_layers if final else s + W
        inside = np.flatnonzero((lay >= s) & (lay < hi))
        local = {int(x): i for i, x in enumerate(inside)}
        extra: list[int] = []
        seam: dict[int, int] = {}
        us, vs, ws, fs = [], [], [], []
        cut = self.n_layers if final else s + F
        for e in g.edges.values():
            tu = lay[e.u]
            tv = tu if e.v is None else lay[e.v]
            if min(tu, tv) < s or min(tu, tv) >= hi:
                continue  # past edges are settled; edges beyond the window ignored
            ends = [e.u] if e.v is None else [e.u, e.v]
            ids = []
            for x in ends:
                if x not in local:
                    local[x] = len(inside) + len(extra)
                    extra.append(x)
                ids.append(local[x])
            committed = min(tu, tv) < cut
            f = e.mask if committed else 0
            if committed and not final:
                for x in ends:
                    if lay[x] >= cut:
                        j = seam.setdefault(int(x), len(seam))
                        f |= 1 << (2 + j)
            us.append(ids[0])
            vs.append(-1 if len(ids) == 1 else ids[1])
            ws.append(e.weight)
            fs.append(f)
        n = len(inside) + len(extra)
        bnodes = frozenset(range(len(inside), n))
        model = EdgeModel(n, np.array(us, dtype=np.int64), np.array(vs, dtype=np.int64), np.array(ws), fs, bnodes)
        gl = np.concatenate([inside, np.array(extra, dtype=np.int64)]).astype(np.int64)
        sm = np.zeros(len(seam), dtype=np.int64)
        for x, j in seam.items():
            sm[j] = x
        win = _Window(model, gl, len(inside), sm)
        self._windows[key] = win
        return win

    # public API ------------------------------------------------------------

    def decode_full(self, dets: np.ndarray) -> np.ndarray:
        """Predicted logical masks for whole-history decoding."""
        return self.decode_windows(dets, self.n_layers)

    def decode_windows(self, dets: np.ndarray, W: int, stride: int | None = None) -> np.ndarray:
        """Sliding-window decoding; returns one predicted logical mask per shot.

        Windows cover ``W`` layers and advance by ``stride`` (default
        ``max(1, W // 2)``).  An edge is committed when its lower endpoint
        lies in the first ``stride`` layers of the window; committed edges
        that reach past the commit region flip the corresponding vertices of
        the next window.  The last window covers everything that remains,
        always including the final readout layer, which has no edges of its
        own.
        """
        if W < 1:
            raise ValueError("window must cover at least one layer")
        F = stride if stride is not None else max(1, W // 2)
        dets = _pad(self.graph, dets)
        shots = dets.shape[0]
        carry = np.zeros_like(dets)
        pred = np.zeros(shots, dtype=np.int64)
        s = 0
        while True:
            win = self._window(s, W, F)
            synd = (dets ^ carry)[:, win.local[: win.n_window]]
            synd = np.concatenate([synd, np.zeros((shots, len(win.local) - win.n_window), dtype=bool)], axis=1)
            out = self._solve(win, synd.astype(np.uint8))
            if out.shape[1] < 2 + len(win.seam):
                out = np.concatenate([out, np.zeros((shots, 2 + len(win.seam) - out.shape[1]), dtype=np.uint8)], axis=1)
            pred ^= _bits_to_int(out[:, :2])
            if len(win.seam):
                carry[:, win.seam] ^= out[:, 2 : 2 + len(win.seam)].astype(bool)
            if s + W >= self.n_layers - 1:
                break
            s += F
        return pred


def full_history_decode(graph: DecodingGraph, dets: np.ndarray, observables: np.ndarray, backend=None) -> np.ndarray:
    """Per-shot success bits."""
    pred = Decoder(graph, backend).decode_full(dets)
    return pred == _bits_to_int(np.asarray(observables))


def sliding_window_decode(graph: DecodingGraph, dets: np.ndarray, observables: np.ndarray, W: int, backend=None) -> np.ndarray:
    pred = Decoder(graph, backend).decode_windows(dets, W)
    return pred == _bits_to_int(np.asarray(observables))
