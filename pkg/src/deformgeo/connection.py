"""Induced connection: Λ = Sym_g(L), Γ = Γ°[g] + Λ, and its diagnostics."""
from __future__ import annotations

import numpy as np

from .chart_fields import DifferentiationScheme, MatrixField
from .deformation import RateTensor
from .metric_geometry import (
    AffineConnection, MetricAtPoint, christoffel, metric_at, metric_derivatives,
)

__all__ = [
    "sym_g", "total_connection", "deviation", "covariant_derivative_metric",
    "nonmetricity", "torsion",
]


def _metric(g) -> MetricAtPoint:
    return g if isinstance(g, MetricAtPoint) else MetricAtPoint.from_matrix(g)


def sym_g(L: RateTensor, g) -> RateTensor:
    """g-self-adjoint part per direction: Λ_μ = ½(L_μ + g⁻¹ L_μᵀ g)."""
    g = _metric(g)
    mats = np.asarray(L.matrices, dtype=float)
    adj = np.einsum("ab,mcb,cd->mad", g.inverse, mats, g.matrix)
    return RateTensor(0.5 * (mats + adj), "compensation")


def total_connection(g: MatrixField, Lam: RateTensor, p,
                     scheme: DifferentiationScheme) -> AffineConnection:
    """Γ^ρ_{μν} = Γ°^ρ_{μν}[g] + Λ^ρ_{μν}."""
    lc = christoffel(g, p, scheme)
    return AffineConnection(lc.values + Lam.components, "total")


def deviation(Gamma: AffineConnection, g: MatrixField, p,
              scheme: DifferentiationScheme) -> AffineConnection:
    """C = Γ − Γ°[g]."""
    lc = christoffel(g, p, scheme)
    return AffineConnection(Gamma.values - lc.values, "deviation")


def covariant_derivative_metric(Gamma: AffineConnection, g: MatrixField, p,
                                scheme: DifferentiationScheme) -> np.ndarray:
    """out[mu, nu, rho] = ∂_μ g_{νρ} − Γ^σ_{μν} g_{σρ} − Γ^σ_{μρ} g_{νσ}."""
    gm = metric_at(g, p).matrix
    dg = metric_derivatives(g, p, scheme)
    G = Gamma.values
    term = np.einsum("smn,sr->mnr", G, gm)
    return dg - term - np.swapaxes(term, 1, 2)


def nonmetricity(Gamma: AffineConnection, g: MatrixField, p,
                 scheme: DifferentiationScheme) -> np.ndarray:
    """Q_{μνρ} := −∇_μ g_{νρ}."""
    return -covariant_derivative_metric(Gamma, g, p, scheme)


def torsion(Gamma: AffineConnection) -> np.ndarray:
    """T^ρ_{μν} = Γ^ρ_{μν} − Γ^ρ_{νμ}."""
    G = np.asarray(Gamma.values if isinstance(Gamma, AffineConnection) else Gamma)
    return G - np.swapaxes(G, 1, 2)
