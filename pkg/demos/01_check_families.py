"""
Check families on a torus
=========================

Local plaquettes, the single-shot set, and the two patch families, with
the conversion matrix that maps their outcomes back to plaquettes.
"""

import numpy as np

from dynchecks import gf2
from dynchecks.code import (
    TorusLattice,
    build_fixed_width_checks,
    build_local_checks,
    build_single_shot_checks,
    build_variable_width_checks,
)

L = 4
lat = TorusLattice(L)
z_local, x_local = build_local_checks(L)
print(len(z_local), "plaquettes, weights", {c.weight for c in z_local})

ss = build_single_shot_checks(L)
print(len(ss), "single-shot checks (one identity product removed)")

# patch families: l x l squares (VW) and l x 1 strips (FW)
vw = build_variable_width_checks(L, 2)
fw = build_fixed_width_checks(L, 2)
print("VW(2) weights", sorted({c.weight for c in vw}))
print("FW(2) weights", sorted({c.weight for c in fw}))

# l = 1 gives the plaquettes back; VW with l = L gives the single-shot set
print(build_variable_width_checks(L, 1).supports() == z_local.supports())
print(build_variable_width_checks(L, L).supports() == ss.supports())

# U undoes the construction: plaquettes = U @ (new checks)
U = fw.conversion
print(np.array_equal(gf2.matmul(U, fw.padded_matrix()), lat.cell_matrix("Z")))

# a column of weight one is a check whose measurement error stays a time edge,
# weight two means it looks like a data error
print("column weights", np.bincount(U.sum(axis=0)))
print(fw.to_text().splitlines()[0])
