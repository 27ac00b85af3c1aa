"""
Curvature of a conformally rescaled sphere
==========================================

For g = e^{2φ} ḡ on the unit sphere, K[g] = e^{-2φ}(1 - Δ̄φ).  We compare the
curvature computed from g directly with the right-hand side, where Δ̄ is the
Laplace-Beltrami operator of the round metric.
"""

import math

import numpy as np

from deformgeo.chart_fields import DifferentiationScheme, ScalarField
from deformgeo.deformation import deformed_metric_field
from deformgeo.metric_geometry import laplace_beltrami, riemann
from deformgeo.scenarios import conformal_sphere

scheme = DifferentiationScheme()
sc = conformal_sphere(1.0, "0.1*cos(theta)")
g = deformed_metric_field(sc.P)
phi = ScalarField.from_expr("0.1*cos(theta)", sc.chart)

print(" theta      K[g]        e^{-2φ}(1 - Δ̄φ)")
for theta in np.linspace(0.5, math.pi - 0.5, 6):
    p = [theta, 0.0]
    K = riemann(g, p, scheme).gaussian
    law = math.exp(-2 * phi(p)) * (1 - laplace_beltrami(sc.gbar, phi, p, scheme))
    print(f"{theta:6.3f}  {K:.12f}  {law:.12f}")

# pure conformal deformations have L = L̄ = Λ = (∂φ) I
pg = sc.geometry().at([1.2, 0.0])
print("Λ_θ at θ = 1.2\n", pg.Lambda.matrices[0])
