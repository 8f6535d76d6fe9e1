"""
From a noisy circuit to a matching graph
========================================

Build the FW(2) memory experiment, enumerate every elementary fault and
compile the space-edge-first decoding graph.
"""

from collections import Counter

from dynchecks.circuit import build_memory_experiment, round_layout
from dynchecks.graph import compile_circuit_graph, graph_time_distance
from dynchecks.noise import NoiseModel, attach_noise, enumerate_error_mechanisms
from dynchecks.schedule import make_schedule, predicted_time_distance

L, l, R = 4, 2, 6
sched = make_schedule(L, l, "fw", "offset", R + 1)
print("CNOT depth per round:", round_layout(sched, 0).depth)

circ = attach_noise(build_memory_experiment(L, sched, R), NoiseModel.circuit(0.001))
print(circ.n_qubits, "qubits,", circ.num_measurements, "measurements,", circ.num_detectors, "detectors")
print("\n".join(circ.to_text().splitlines()[:6]))

mechs = enumerate_error_mechanisms(circ)
print("fault classes by number of detectors:", sorted(Counter(len(m.detectors) for m in mechs).items()))

for dec in ("time-first", "space-first"):
    g = compile_circuit_graph(circ, sched, dec, mechanisms=mechs)
    st = g.stats()
    print(dec, {k: st[k] for k in ("edges", "time_edges", "spacetime_edges", "aux", "unsupported")})
    print("  time distance W=3:", graph_time_distance(g, 3), "predicted", predicted_time_distance(3, l, "fw"))

# the same graph as detector-error-model text
print(g.to_dem().splitlines()[0])
