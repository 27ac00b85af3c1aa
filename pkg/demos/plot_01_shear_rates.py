"""
Raw and deformed-frame rates of a shear
=======================================

A non-diagonal shear P = [[a, s], [s, 1]] on the flat plane.  The two rate
tensors differ here because L̄ does not commute with P.
"""

import numpy as np

from deformgeo.deformation import commutator_defect
from deformgeo.scenarios import nondiagonal_shear

np.set_printoptions(precision=6, suppress=True)

# a(x) = 1 + x and s = 1/2, so the origin has a = 1 and a' = 1
sc = nondiagonal_shear("1 + x", 0.5)
pg = sc.geometry().at([0.0, 0.0])

print("g at the origin\n", pg.g.matrix)
print("raw rate L̄_x (expect [[4/3, 0], [-2/3, 0]])\n", pg.Lbar.matrices[0])
print("deformed-frame rate L_x (expect [[20/9, 10/9], [-16/9, -8/9]])\n", pg.L.matrices[0])

# the rates coincide exactly when [L̄, P] = 0; here they do not
print("[L̄_x, P]\n", commutator_defect(pg.Lbar.matrices[0], pg.P))

# Λ is the g-self-adjoint part of L, and it also differs from L̄
print("compensation Λ_x\n", pg.Lambda.matrices[0])
print("torsion is nonzero:", bool(np.abs(pg.torsion).max() > 0))
