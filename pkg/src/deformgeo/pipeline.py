"""End-to-end evaluation of the deformed geometry at a point.

    ḡ, P  ->  g = PᵀḡP,  Γ̄,  Γ°[g],  L̄,  L,  Λ,  Γ = Γ°[g] + Λ,  C,  T,  ∇g,  K
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chart_fields import DifferentiationScheme, MatrixField
from .connection import covariant_derivative_metric, deviation, sym_g, torsion, total_connection
from .deformation import (
    DeformationField, RateTensor, deformed_frame_rate, deformed_metric, deformed_metric_field,
    raw_rate,
)
from .metric_geometry import (
    AffineConnection, CurvatureReport, MetricAtPoint, christoffel, riemann,
)

__all__ = ["DeformedGeometry", "PointGeometry", "QUANTITIES"]

QUANTITIES = ("g", "gammabar", "gamma0", "Lbar", "L", "Lambda", "Gamma", "C",
              "torsion", "nonmetricity", "K")


@dataclass(frozen=True)
class PointGeometry:
    point: np.ndarray
    P: np.ndarray
    g: MetricAtPoint
    gammabar: AffineConnection
    gamma0: AffineConnection
    Lbar: RateTensor
    L: RateTensor
    Lambda: RateTensor
    Gamma: AffineConnection
    C: AffineConnection
    torsion: np.ndarray
    nabla_g: np.ndarray
    curvature: Optional[CurvatureReport] = None

    @property
    def nonmetricity(self) -> np.ndarray:
        return -self.nabla_g

    def quantity(self, name: str):
        """Array value of one of QUANTITIES, in its documented index order."""
        if name == "g":
            return self.g.matrix
        if name in ("gammabar", "gamma0", "Gamma", "C"):
            return getattr(self, name).values
        if name in ("Lbar", "L", "Lambda"):
            return getattr(self, name).components
        if name == "torsion":
            return self.torsion
        if name == "nonmetricity":
            return self.nonmetricity
        if name == "K":
            if self.curvature is None or self.curvature.gaussian is None:
                raise ValueError("Gaussian curvature is only available for 2-dimensional charts")
            return np.array(self.curvature.gaussian)
        raise KeyError(f"unknown quantity {name!r}")


class DeformedGeometry:
    """Reference metric plus deformation field, evaluated under one scheme.

    `g` may be supplied explicitly (e.g. when P was recovered from it);
    otherwise it is the product field PᵀḡP.
    """

    def __init__(self, gbar: MatrixField, P: DeformationField,
                 scheme: Optional[DifferentiationScheme] = None, g: Optional[MatrixField] = None):
        self.gbar = gbar
        self.P = P
        self.scheme = scheme or DifferentiationScheme()
        self.g_field = g if g is not None else deformed_metric_field(P)
        self.chart = P.chart

    def at(self, p, curvature: bool = False) -> PointGeometry:
        scheme = self.scheme
        p = self.chart.point(p)
        P_val = self.P(p)
        g = deformed_metric(P_val, self.gbar(p), p)
        gammabar = christoffel(self.gbar, p, scheme, provenance="reference")
        gamma0 = christoffel(self.g_field, p, scheme, provenance="levi_civita_deformed")
        Lbar = raw_rate(self.P, self.gbar, p, scheme)
        L = deformed_frame_rate(P_val, Lbar)
        Lam = sym_g(L, g)
        Gamma = total_connection(self.g_field, Lam, p, scheme)
        C = deviation(Gamma, self.g_field, p, scheme)
        nabla_g = covariant_derivative_metric(Gamma, self.g_field, p, scheme)
        report = riemann(self.g_field, p, scheme) if curvature else None
        return PointGeometry(p, P_val, g, gammabar, gamma0, Lbar, L, Lam, Gamma, C,
                             torsion(Gamma), nabla_g, report)
