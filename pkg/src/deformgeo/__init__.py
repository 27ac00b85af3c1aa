"""Deformation-induced metric geometry: g = PᵀḡP and the connection it induces."""
from .chart_fields import Chart, DifferentiationScheme, MatrixField, ScalarField
from .deformation import DeformationField, recover_deformation
from .pipeline import DeformedGeometry

__version__ = "0.1.0"

__all__ = ["Chart", "DifferentiationScheme", "MatrixField", "ScalarField",
           "DeformationField", "recover_deformation", "DeformedGeometry", "__version__"]
