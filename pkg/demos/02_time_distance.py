"""
Time distance of a decoding window
==================================

Breadth-first search on the phenomenological decoding graph against the
closed forms, for aligned and offset schedules.
"""

from dynchecks.graph import compile_phenomenological_graph, graph_time_distance
from dynchecks.schedule import min_window, predicted_time_distance

L = 8
print("family  l  scheme   W: measured/predicted")
for family, l in [("local", 1), ("fw", 2), ("fw", 4), ("vw", 2), ("vw", 4)]:
    for scheme in ("aligned", "offset"):
        g = compile_phenomenological_graph(L, l, family, scheme, 10)
        row = []
        for W in (2, 3, 4, 5):
            pred = W if scheme == "aligned" else predicted_time_distance(W, l, family)
            row.append(f"{graph_time_distance(g, W)}/{pred}")
        print(f"{family:6s} {l:2d}  {scheme:7s}  " + "  ".join(row))

# the smallest window whose time distance reaches d
for d in (4, 8, 12):
    print(d, [min_window(d, l, "fw") for l in (1, 2, 3, 4)], [min_window(d, l, "vw") for l in (1, 2, 4)])
