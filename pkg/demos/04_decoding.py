"""
Whole-history and sliding-window decoding
=========================================

Sample a long VW(2) phenomenological run and compare the two decoders.
"""

from dynchecks.circuit import build_phenomenological_experiment
from dynchecks.decode import Decoder, _bits_to_int
from dynchecks.graph import compile_phenomenological_graph
from dynchecks.noise import NoiseModel, attach_noise, pauli_frame_sample
from dynchecks.schedule import make_schedule

d, p = 4, 0.008
R = 20 * d
sched = make_schedule(d, 2, "vw", "offset", R)
circ = attach_noise(build_phenomenological_experiment(d, sched, R), NoiseModel.phenomenological(p))
batch = pauli_frame_sample(circ, seed=1, shots=2000)
dets = batch.unpack("detectors")
obs = _bits_to_int(batch.unpack("observables"))

graph = compile_phenomenological_graph(d, 2, "vw", "offset", R, p)
dec = Decoder(graph)
print("full history  ", (dec.decode_full(dets) != obs).mean())
for W in (d // 2 + 1, 2, 1):
    print(f"window W={W:2d}  ", (dec.decode_windows(dets, W) != obs).mean())

# the reference backend is pure python; fine for small graphs
small = compile_phenomenological_graph(d, 2, "vw", "offset", 4, p)
ref, fast = Decoder(small, backend="reference"), Decoder(small)
s_circ = attach_noise(build_phenomenological_experiment(d, sched, 4), NoiseModel.phenomenological(p))
s_batch = pauli_frame_sample(s_circ, seed=2, shots=200)
s_dets = s_batch.unpack("detectors")
print("backends agree on", (ref.decode_full(s_dets) == fast.decode_full(s_dets)).mean(), "of shots")
