import math

import numpy as np
import pytest

from dynchecks.circuit import build_memory_experiment, build_phenomenological_experiment
from dynchecks.code import TorusLattice
from dynchecks.graph import (
    DecodingGraph,
    Node,
    UnsupportedHyperedge,
    allowed_table,
    compile_circuit_graph,
    compile_phenomenological_graph,
    decompose_space_edge_first,
    decompose_time_edge_first,
    detectors_from_records,
    edge_weight,
    graph_time_distance,
    merge_parallel_edges,
    signature_xor,
)
from dynchecks.noise import NoiseModel, attach_noise, enumerate_error_mechanisms
from dynchecks.schedule import make_schedule, predicted_time_distance


def circuit_graph(L, l, R=4, p=0.001, decomposition="space-first", family="fw"):
    s = make_schedule(L, l, family, "offset", R + 1)
    c = attach_noise(build_memory_experiment(L, s, R), NoiseModel.circuit(p))
    mechs = enumerate_error_mechanisms(c)
    return compile_circuit_graph(c, s, decomposition, mechanisms=mechs), mechs


def test_edge_weight():
    assert edge_weight(0.1) == pytest.approx(math.log(9))
    assert edge_weight(0.5) > 0
    assert math.isfinite(edge_weight(0.0))


def test_parallel_edges_merge():
    assert merge_parallel_edges(0.1, 0.2) == pytest.approx(0.26)
    g = DecodingGraph.with_detectors(3, [(0, 0, 0), (0, 1, 0)])
    g.add_edge(0, 1, 0.1, 1)
    g.add_edge(1, 0, 0.2, 1)
    assert len(g.edges) == 1
    assert g.edges[(0, 1)].p == pytest.approx(0.26)


@pytest.mark.parametrize("fam,l,L,scheme", [
    ("local", 1, 4, "offset"),
    ("fw", 2, 4, "offset"),
    ("vw", 2, 4, "offset"),
    ("ss", 4, 4, "aligned"),
    ("fw", 4, 8, "aligned"),
    ("vw", 4, 8, "offset"),
])
def test_analytic_graph_matches_enumerated(fam, l, L, scheme):
    R = 4
    s = make_schedule(L, l, fam, scheme, R)
    c = attach_noise(build_phenomenological_experiment(L, s, R), NoiseModel.phenomenological(0.01))
    enumerated = compile_circuit_graph(c, s, "space-first")
    analytic = compile_phenomenological_graph(L, l, fam, scheme, R, 0.01)
    a = {k: (round(e.p, 12), e.mask) for k, e in analytic.edges.items()}
    b = {k: (round(e.p, 12), e.mask) for k, e in enumerated.edges.items()}
    assert a == b
    assert enumerated.stats()["aux"] == 0
    assert not enumerated.diagnostics


def test_local_phenomenological_structure():
    L, R = 4, 3
    g = compile_phenomenological_graph(L, 1, "local", "offset", R)
    st = g.stats()
    assert st["time_edges"] == R * L * L
    assert st["space_edges"] == R * 2 * L * L  # data noise in each noisy round
    assert st["spacetime_edges"] == 0


def test_offset_rows_alternate():
    g = compile_phenomenological_graph(8, 2, "fw", "offset", 4)
    rows = [frozenset(r for r, _ in g.allowed[t]) for t in range(4)]
    assert rows[0] != rows[1]
    assert rows[0] == rows[2]
    assert rows[0].isdisjoint(rows[1])


def test_time_first_cases():
    L = 6
    a, b = Node(0, 1, 1), Node(1, 1, 1)
    c, d = Node(0, 1, 2), Node(1, 1, 2)
    subs = decompose_time_edge_first(L, [a, b, c, d])
    assert sorted(subs) == sorted([(a, b), (c, d)])
    x, y = Node(1, 2, 1), Node(1, 2, 2)
    subs = decompose_time_edge_first(L, [a, b, c, d, x, y])
    assert sorted(subs) == sorted([(a, b), (c, d), (x, y)])
    assert decompose_time_edge_first(L, [a, c]) == [(a, c)]
    assert decompose_time_edge_first(L, [a]) == [(a, None)]
    with pytest.raises(UnsupportedHyperedge):
        decompose_time_edge_first(L, [a, Node(0, 3, 3)])
    with pytest.raises(UnsupportedHyperedge):
        decompose_time_edge_first(L, [a, c, Node(0, 3, 3), Node(1, 4, 4)])


def test_space_first_routes_through_allowed_positions():
    L = 4
    s = make_schedule(L, 2, "fw", "offset", 3)
    allowed = allowed_table(s, 3)
    (r0, c0) = min(allowed[0])
    # a time edge at a forbidden position must be routed around
    bad = next((r, c) for r in range(L) for c in range(L) if (r, c) not in allowed[0])
    a, b = Node(0, *bad), Node(1, *bad)
    subs = decompose_space_edge_first(L, [a, b], allowed)
    assert signature_xor(None, subs) == {a, b}
    g = DecodingGraph(L, allowed=allowed)
    for u, v in subs:
        g.add_edge(g.node(u), g.node(v), 0.01, 0)
    assert not g.check_allowed()
    # an allowed time edge is used directly
    a, b = Node(0, r0, c0), Node(1, r0, c0)
    assert decompose_space_edge_first(L, [a, b], allowed) == [(a, b)]


@pytest.mark.parametrize("l,L", [(2, 4), (3, 6)])
@pytest.mark.parametrize("decomposition", ["space-first", "time-first"])
def test_decomposition_soundness(l, L, decomposition):
    g, mechs = circuit_graph(L, l, decomposition=decomposition)
    assert not [d for d in g.diagnostics if d.kind in ("unsupported-hyperedge", "mask-mismatch")]
    decompose = (
        (lambda ns: decompose_space_edge_first(L, ns, g.allowed))
        if decomposition == "space-first"
        else (lambda ns: decompose_time_edge_first(L, ns))
    )
    for m in mechs:
        if not m.detectors:
            continue
        nodes = [g.nodes[i] for i in m.detectors]
        assert signature_xor(g, decompose(nodes)) == set(nodes)
    assert not g.check_locality()
    if decomposition == "space-first":
        assert not g.check_allowed()


@pytest.mark.parametrize("l,L", [(2, 4), (3, 6), (4, 8)])
def test_space_first_time_distance_matches_prediction(l, L):
    g, _ = circuit_graph(L, l, R=6)
    for W in (2, 3):
        assert graph_time_distance(g, W) == predicted_time_distance(W, l, "fw")


def test_time_first_keeps_time_distance_w():
    g, _ = circuit_graph(4, 2, R=6, decomposition="time-first")
    assert graph_time_distance(g, 3) <= 3


def test_dem_roundtrip():
    g, _ = circuit_graph(4, 2, R=2)
    h = DecodingGraph.from_dem(g.to_dem(), 4)
    assert h.nodes == g.nodes
    assert h.n_detectors == g.n_detectors
    assert {k: (round(e.p, 10), e.mask) for k, e in h.edges.items()} == {
        k: (round(e.p, 10), e.mask) for k, e in g.edges.items()
    }
    with pytest.raises(UnsupportedHyperedge):
        DecodingGraph.from_dem("error(0.1) D0 D1 D2\n", 4)


def test_detectors_from_zero_records():
    L, R = 4, 3
    s = make_schedule(L, 2, "fw", "offset", R)
    rounds = [np.zeros((5, len(s.check_set(t))), dtype=np.uint8) for t in range(R)]
    out = detectors_from_records(rounds, np.zeros((5, 2 * L * L), dtype=np.uint8), s)
    assert out.shape == (5, (R + 1) * L * L)
    assert not out.any()


def _true_cells(rng, shots, L):
    p = rng.integers(0, 2, size=(shots, L * L), dtype=np.uint8)
    p[:, -1] = p[:, :-1].sum(axis=1) % 2  # product of all plaquettes is +1
    return p


@pytest.mark.parametrize("fam,l,L", [("local", 1, 4), ("fw", 2, 4), ("vw", 2, 8), ("fw", 3, 6)])
def test_detectors_from_records_dense_oracle(fam, l, L):
    rng = np.random.default_rng(7)
    shots, R = 40, 4
    s = make_schedule(L, l, fam, "offset", R)
    cells = [_true_cells(rng, shots, L) for _ in range(R)]
    rounds = []
    for t in range(R):
        cs = s.check_set(t)
        m = np.zeros((shots, len(cs)), dtype=np.uint8)
        for k, ch in enumerate(cs.checks):
            m[:, k] = cells[t][:, list(ch.cells)].sum(axis=1) % 2
        rounds.append(m)
    data = rng.integers(0, 2, size=(shots, 2 * L * L), dtype=np.uint8)
    readout = np.zeros((shots, L * L), dtype=np.uint8)
    lat = TorusLattice(L)
    for i in range(L * L):
        readout[:, i] = data[:, list(lat.plaquette(*lat.cell_coords(i)))].sum(axis=1) % 2
    want = [cells[0]] + [cells[t] ^ cells[t - 1] for t in range(1, R)] + [readout ^ cells[-1]]
    got = detectors_from_records(rounds, data, s)
    assert np.array_equal(got, np.concatenate(want, axis=1).astype(bool))


def test_single_flip_of_a_converted_check():
    L, R = 4, 3
    s = make_schedule(L, 2, "fw", "offset", R)
    cs = s.check_set(1)
    U = cs.conversion
    k = next(k for k in range(len(cs)) if U[:, k].sum() == 2)
    rounds = [np.zeros((1, len(s.check_set(t))), dtype=np.uint8) for t in range(R)]
    rounds[1][0, k] = 1
    out = detectors_from_records(rounds, np.zeros((1, 2 * L * L), dtype=np.uint8), s)[0]
    flipped = {divmod(int(i), L * L) for i in np.flatnonzero(out)}
    cols = {int(i) for i in np.flatnonzero(U[:, k])}
    assert flipped == {(1, c) for c in cols} | {(2, c) for c in cols}


def test_records_shape_errors():
    s = make_schedule(4, 1, "local", "offset", 2)
    with pytest.raises(ValueError):
        detectors_from_records([np.zeros((1, 3))], np.zeros((1, 32)), s)
    with pytest.raises(ValueError):
        detectors_from_records([], np.zeros((1, 5)), s)
