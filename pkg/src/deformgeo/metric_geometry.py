"""Metric-determined objects: Christoffel symbols, curvature, Laplace-Beltrami.

Index convention, used everywhere in the package: connection coefficients
are stored as ``values[rho, mu, nu]`` for Γ^ρ_{μν}, where μ is the
differentiation direction.  Metric derivatives are stored as
``dg[k, i, j] = ∂_k g_ij``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chart_fields import (
    ANALYTIC, DifferentiationScheme, MatrixField, ScalarField, derivative,
    partial_matrix, partial_scalar,
)

__all__ = [
    "MetricError", "MetricAtPoint", "ConnectionCoefficients", "CurvatureReport",
    "metric_at", "metric_derivatives", "christoffel_from_derivatives", "christoffel",
    "christoffel_partials", "riemann", "curvature_from_connection", "laplace_beltrami",
]

SYMMETRY_TOL = 1e-12
INVERSE_TOL = 1e-10
SINGULAR_TOL = 1e-12


class MetricError(ValueError):
    """Metric is not symmetric positive-definite (or is numerically singular)."""


@dataclass(frozen=True)
class MetricAtPoint:
    matrix: np.ndarray
    inverse: np.ndarray
    det: float

    @classmethod
    def from_matrix(cls, m) -> "MetricAtPoint":
        m = np.array(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise MetricError(f"metric must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise MetricError("metric has non-finite entries")
        scale = np.max(np.abs(m))
        if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * max(scale, 1e-300):
            raise MetricError("metric is not symmetric")
        m = 0.5 * (m + m.T)
        n = m.shape[0]
        det = float(np.linalg.det(m))
        if det < SINGULAR_TOL * scale ** n:
            raise MetricError(f"metric is singular or not positive-definite (det={det:.3e})")
        try:
            np.linalg.cholesky(m)
        except np.linalg.LinAlgError:
            raise MetricError("metric is not positive-definite") from None
        inv = np.linalg.inv(m)
        inv = 0.5 * (inv + inv.T)
        if np.max(np.abs(m @ inv - np.eye(n))) > INVERSE_TOL * np.linalg.cond(m):
            raise MetricError("metric inverse is inaccurate")
        m.setflags(write=False)
        inv.setflags(write=False)
        return cls(m, inv, det)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class ConnectionCoefficients:
    """Γ^ρ_{μν} at one point, ``values[rho, mu, nu]``."""
    values: np.ndarray
    provenance: str = "custom"

    LEVI_CIVITA_KINDS = ("levi_civita", "reference", "levi_civita_deformed")

    @property
    def is_levi_civita(self) -> bool:
        return self.provenance in self.LEVI_CIVITA_KINDS

    @property
    def dim(self) -> int:
        return self.values.shape[0]


# kept as the name used by the connection module
AffineConnection = ConnectionCoefficients


@dataclass(frozen=True)
class CurvatureReport:
    riemann: np.ndarray          # R^ρ_{σμν} as [rho, sigma, mu, nu]
    ricci: np.ndarray            # R_{σν}
    scalar: float                # S
    gaussian: Optional[float]    # K = S/2, only for n = 2


def metric_at(metric: MatrixField, p) -> MetricAtPoint:
    return MetricAtPoint.from_matrix(metric(metric.chart.point(p)))


def metric_derivatives(metric: MatrixField, p, scheme: DifferentiationScheme) -> np.ndarray:
    n = metric.chart.dim
    return np.stack([partial_matrix(metric, p, k, scheme) for k in range(n)])


def christoffel_from_derivatives(ginv: np.ndarray, dg: np.ndarray) -> np.ndarray:
    """½ g^{ρℓ}(∂_μ g_{ℓν} + ∂_ν g_{ℓμ} − ∂_ℓ g_{μν}) from g⁻¹ and dg[k,i,j]."""
    # first-kind symbols [l, mu, nu]
    first = 0.5 * (np.einsum("mln->lmn", dg) + np.einsum("nlm->lmn", dg) - dg)
    return np.einsum("rl,lmn->rmn", ginv, first)


def christoffel(metric: MatrixField, p, scheme: DifferentiationScheme,
                provenance: str = "levi_civita") -> ConnectionCoefficients:
    """Levi-Civita connection of `metric` at p."""
    g = metric_at(metric, p)
    dg = metric_derivatives(metric, p, scheme)
    values = christoffel_from_derivatives(g.inverse, dg)
    # exactly symmetric in (mu, nu) up to rounding; remove the rounding part
    values = 0.5 * (values + np.swapaxes(values, 1, 2))
    return ConnectionCoefficients(values, provenance)


def christoffel_partials(metric: MatrixField, p, scheme: DifferentiationScheme) -> np.ndarray:
    """dGamma[s, rho, mu, nu] = ∂_s Γ^ρ_{μν}.

    Analytic mode differentiates the closed formula using second partials of
    the metric; numerical modes differentiate Γ again with the outer step.
    """
    chart = metric.chart
    n = chart.dim
    p = chart.point(p)
    if scheme.mode == ANALYTIC:
        g = metric_at(metric, p)
        ginv = g.inverse
        dg = metric_derivatives(metric, p, scheme)
        ddg = np.stack([np.stack([metric.partial(k).partial(s)(p) for k in range(n)])
                        for s in range(n)])  # ddg[s, k, i, j] = ∂_s ∂_k g_ij
        first = 0.5 * (np.einsum("mln->lmn", dg) + np.einsum("nlm->lmn", dg) - dg)
        dfirst = 0.5 * (np.einsum("smln->slmn", ddg) + np.einsum("snlm->slmn", ddg) - ddg)
        dginv = -np.einsum("ra,sab,bl->srl", ginv, dg, ginv)
        return (np.einsum("srl,lmn->srmn", dginv, first)
                + np.einsum("rl,slmn->srmn", ginv, dfirst))
    outer = scheme.outer()

    def gamma(q):
        return christoffel(metric, q, scheme).values

    return np.stack([derivative(gamma, p, s, outer, chart) for s in range(n)])


def curvature_from_connection(gamma: np.ndarray, dgamma: np.ndarray,
                              ginv: np.ndarray) -> CurvatureReport:
    """Riemann, Ricci, scalar (and Gaussian in 2D) from Γ and ∂Γ."""
    # R^ρ_{σμν} = ∂_μΓ^ρ_{νσ} − ∂_νΓ^ρ_{μσ} + Γ^ρ_{μλ}Γ^λ_{νσ} − Γ^ρ_{νλ}Γ^λ_{μσ}
    d_term = np.einsum("mrns->rsmn", dgamma)
    quad = np.einsum("rml,lns->rsmn", gamma, gamma)
    riem = d_term - np.swapaxes(d_term, 2, 3) + quad - np.swapaxes(quad, 2, 3)
    ricci = np.einsum("rsrn->sn", riem)
    scalar = float(np.einsum("sn,sn->", ginv, ricci))
    gaussian = scalar / 2.0 if gamma.shape[0] == 2 else None
    return CurvatureReport(riem, ricci, scalar, gaussian)


def riemann(metric: MatrixField, p, scheme: DifferentiationScheme) -> CurvatureReport:
    """Curvature of the Levi-Civita connection of `metric` at p."""
    g = metric_at(metric, p)
    gamma = christoffel(metric, p, scheme).values
    dgamma = christoffel_partials(metric, p, scheme)
    return curvature_from_connection(gamma, dgamma, g.inverse)


def laplace_beltrami(metric: MatrixField, f: ScalarField, p,
                     scheme: DifferentiationScheme) -> float:
    """(1/√|g|) ∂_μ(√|g| g^{μν} ∂_ν f) at p."""
    chart = metric.chart
    n = chart.dim
    p = chart.point(p)
    g = metric_at(metric, p)
    if scheme.mode == ANALYTIC:
        grad = np.array([f.partial(k)(p) for k in range(n)])
        hess = np.array([[f.partial(k).partial(s)(p) for k in range(n)] for s in range(n)])
        dg = metric_derivatives(metric, p, scheme)
        ginv = g.inverse
        dginv = -np.einsum("ra,mab,bl->mrl", ginv, dg, ginv)   # ∂_m g^{rl}
        half_dlogdet = 0.5 * np.einsum("ab,mba->m", ginv, dg)  # ∂_m log √|g|
        return float(np.einsum("mn,mn->", ginv, hess)
                     + np.einsum("mmn,n->", dginv, grad)
                     + np.einsum("m,mn,n->", half_dlogdet, ginv, grad))
    outer = scheme.outer()

    def flux(q):
        gq = metric_at(metric, q)
        grad = np.array([partial_scalar(f, q, k, scheme) for k in range(n)])
        return np.sqrt(gq.det) * (gq.inverse @ grad)

    div = sum(derivative(flux, p, mu, outer, chart)[mu] for mu in range(n))
    return float(div / np.sqrt(g.det))
