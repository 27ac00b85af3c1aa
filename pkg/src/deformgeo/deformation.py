"""Pure deformation fields, the law g = PᵀḡP, recovery of P, and the rate tensors.

Rate tensors are stored per direction: ``matrices[mu]`` is the n x n matrix
with row index ρ and column index ν holding X^ρ_{μν}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .chart_fields import (
    AnalyticPartialUnavailable, Chart, DifferentiationScheme, MatrixField, partial_matrix,
)
from .metric_geometry import MetricAtPoint, MetricError, christoffel

__all__ = [
    "DeformationError", "RecoveryError", "DeformationField", "RateTensor",
    "validate_deformation", "deformed_metric", "deformed_metric_field",
    "recover_deformation", "recovered_deformation_field", "raw_rate",
    "deformed_frame_rate", "commutator_defect",
]

GBAR_SYMMETRY_TOL = 1e-10
RECOVERY_TOL = 1e-9


class DeformationError(ValueError):
    """P is not ḡ-symmetric positive-definite somewhere."""

    def __init__(self, message, point=None, defect=None):
        super().__init__(message)
        self.point = point
        self.defect = defect


class RecoveryError(ArithmeticError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class RateTensor:
    matrices: np.ndarray   # [mu, rho, nu]
    kind: str              # "raw" | "deformed_frame" | "compensation"

    @property
    def components(self) -> np.ndarray:
        """Same data in connection order ``[rho, mu, nu]``."""
        return np.transpose(self.matrices, (1, 0, 2))

    def __getitem__(self, mu) -> np.ndarray:
        return self.matrices[mu]

    def __len__(self):
        return self.matrices.shape[0]


def _upper_factor(gbar: np.ndarray) -> np.ndarray:
    """E with ḡ = EᵀE (upper triangular)."""
    try:
        return scipy.linalg.cholesky(gbar, lower=False)
    except np.linalg.LinAlgError:
        raise MetricError("reference metric is not positive-definite") from None


def pure_deformation_defect(P: np.ndarray, gbar: np.ndarray) -> tuple:
    """(symmetry defect of ḡP relative to ‖ḡP‖, min eigenvalue of E P E⁻¹)."""
    lowered = gbar @ P
    scale = max(np.max(np.abs(lowered)), 1e-300)
    sym_defect = float(np.max(np.abs(lowered - lowered.T)) / scale)
    E = _upper_factor(gbar)
    Einv = scipy.linalg.solve_triangular(E, np.eye(E.shape[0]), lower=False)
    S = E @ P @ Einv
    S = 0.5 * (S + S.T)
    return sym_defect, float(np.min(np.linalg.eigvalsh(S)))


def validate_deformation(P: np.ndarray, gbar: np.ndarray, point=None):
    sym_defect, min_eig = pure_deformation_defect(P, gbar)
    where = "" if point is None else f" at {np.asarray(point).tolist()}"
    if not sym_defect <= GBAR_SYMMETRY_TOL:
        raise DeformationError(
            f"P is not gbar-symmetric{where} (relative defect {sym_defect:.3e})", point, sym_defect)
    if not min_eig > 0:
        raise DeformationError(
            f"P is not positive-definite{where} (smallest eigenvalue {min_eig:.3e})", point, min_eig)


class DeformationField:
    """P^μ_ν as a matrix field, tied to its reference metric."""

    def __init__(self, P: MatrixField, gbar: MatrixField):
        if P.chart != gbar.chart:
            raise ValueError("P and the reference metric live on different charts")
        self.field = P
        self.gbar = gbar
        self.chart: Chart = P.chart

    def __call__(self, p) -> np.ndarray:
        return self.field(p)

    def validate(self, resolution: int = 11, points=None) -> None:
        """Check the pure-deformation conditions on a grid (default 11ⁿ points)."""
        pts = self.chart.grid(resolution) if points is None else points
        worst = None
        for q in pts:
            try:
                validate_deformation(self.field(q), self.gbar(q), q)
            except DeformationError as exc:
                if worst is None or (exc.defect is not None and worst.defect is not None
                                     and abs(exc.defect) > abs(worst.defect)):
                    worst = exc
        if worst is not None:
            raise worst


def deformed_metric(P, gbar, p) -> MetricAtPoint:
    """g = PᵀḡP at p, for fields or plain matrices."""
    if callable(P):
        P_val = P(p)
    else:
        P_val = np.asarray(P, dtype=float)
    gbar_val = gbar(p) if callable(gbar) else np.asarray(gbar, dtype=float)
    validate_deformation(P_val, gbar_val, p)
    g = P_val.T @ gbar_val @ P_val
    return MetricAtPoint.from_matrix(0.5 * (g + g.T))


def deformed_metric_field(P: DeformationField) -> MatrixField:
    """g = PᵀḡP as a field; analytic partials follow from the product rule."""
    product = P.field.T @ P.gbar @ P.field

    def func(p):
        g = product(p)
        return 0.5 * (g + g.T)

    partial = None
    if product.has_analytic_partials:
        partial = product.partial
    return MatrixField(P.chart, func, partial)


def recover_deformation(gbar, g) -> np.ndarray:
    """Unique ḡ-symmetric positive-definite P with PᵀḡP = g.

    With ḡ = EᵀE, S = E(ḡ⁻¹g)E⁻¹ = E⁻ᵀgE⁻¹ is symmetric positive-definite
    and P = E⁻¹ S^{1/2} E.
    """
    gbar = gbar.matrix if isinstance(gbar, MetricAtPoint) else MetricAtPoint.from_matrix(gbar).matrix
    g = g.matrix if isinstance(g, MetricAtPoint) else MetricAtPoint.from_matrix(g).matrix
    if gbar.shape != g.shape:
        raise ValueError("metrics have different dimensions")
    E = _upper_factor(gbar)
    Einv = scipy.linalg.solve_triangular(E, np.eye(E.shape[0]), lower=False)
    S = Einv.T @ g @ Einv
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    if w[0] <= 0:
        raise MetricError("deformed metric is not positive-definite relative to the reference")
    root = (V * np.sqrt(w)) @ V.T
    P = Einv @ root @ E
    condition = float(w[-1] / w[0]) * float(np.linalg.cond(gbar))
    residual = np.max(np.abs(P.T @ gbar @ P - g))
    if residual > RECOVERY_TOL * np.max(np.abs(g)):
        raise RecoveryError(
            f"reconstruction residual {residual:.3e} too large (condition number {condition:.3e})",
            condition)
    lowered = gbar @ P
    if np.max(np.abs(lowered - lowered.T)) > RECOVERY_TOL * np.max(np.abs(lowered)):
        raise RecoveryError(f"recovered P is not gbar-symmetric (condition number {condition:.3e})",
                            condition)
    return P


def recovered_deformation_field(gbar: MatrixField, g: MatrixField) -> DeformationField:
    """P recovered pointwise from a metric pair.

    First partials are exact when both metrics have analytic partials: with
    A = ḡ⁻¹g = P², ∂P solves the Sylvester equation P X + X P = ∂A.
    """
    chart = gbar.chart

    def func(p):
        return recover_deformation(gbar(p), g(p))

    def first_partial(mu):
        def dP(p):
            P = func(p)
            gb = gbar(p)
            dA = np.linalg.solve(gb, g.partial(mu)(p) - gbar.partial(mu)(p) @ np.linalg.solve(gb, g(p)))
            return scipy.linalg.solve_sylvester(P, P, dA)
        return MatrixField(chart, dP)

    analytic = gbar.has_analytic_partials and g.has_analytic_partials
    return DeformationField(MatrixField(chart, func, first_partial if analytic else None), gbar)


def raw_rate(P: DeformationField, gbar: MatrixField, p,
             scheme: DifferentiationScheme) -> RateTensor:
    """L̄_μ = P⁻¹(∂_μP + Γ̄_μ P − P Γ̄_μ), where (Γ̄_μ)^α_β = Γ̄^α_{μβ}."""
    chart = P.chart
    p = chart.point(p)
    P_val = P(p)
    gamma_bar = christoffel(gbar, p, scheme, provenance="reference").values
    n = chart.dim
    out = np.empty((n, n, n))
    for mu in range(n):
        try:
            dP = partial_matrix(P.field, p, mu, scheme)
        except AnalyticPartialUnavailable:
            raise AnalyticPartialUnavailable(
                "deformation field has no analytic partials; use a finite-difference scheme") from None
        G = gamma_bar[:, mu, :]
        out[mu] = np.linalg.solve(P_val, dP + G @ P_val - P_val @ G)
    return RateTensor(out, "raw")


def deformed_frame_rate(P_at_p, Lbar: RateTensor) -> RateTensor:
    """L_μ = P⁻¹ L̄_μ P for every direction."""
    P_val = np.asarray(P_at_p, dtype=float)
    out = np.stack([np.linalg.solve(P_val, Lm @ P_val) for Lm in Lbar.matrices])
    return RateTensor(out, "deformed_frame")


def commutator_defect(Lbar_mu, P_at_p) -> np.ndarray:
    """[L̄_μ, P] = L̄_μP − PL̄_μ."""
    A = np.asarray(Lbar_mu, dtype=float)
    P_val = np.asarray(P_at_p, dtype=float)
    return A @ P_val - P_val @ A
