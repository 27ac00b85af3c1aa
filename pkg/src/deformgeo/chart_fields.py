"""Single-chart fields and the differentiation engine.

A field is a pure function of a chart point.  Fields may carry an analytic
partial provider (``field.partial(mu)`` returns another field), which is
what ``mode="analytic"`` uses; otherwise derivatives come from central
differences, optionally Richardson-extrapolated.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import exprlang
from .exprlang import Expr

__all__ = [
    "Chart", "DifferentiationScheme", "ScalarField", "MatrixField",
    "StencilError", "AnalyticPartialUnavailable", "partial_scalar",
    "partial_matrix", "derivative", "ANALYTIC", "CENTRAL", "RICHARDSON",
]


class StencilError(ValueError):
    """A point or one of its finite-difference neighbours left the valid region."""


class AnalyticPartialUnavailable(LookupError):
    """Analytic mode was requested for a field without a partial provider."""


@dataclass(frozen=True)
class Chart:
    names: tuple
    lower: tuple
    upper: tuple
    excluded: tuple = ()  # sub-boxes ((lo...), (hi...)) of singular loci

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "excluded", tuple(
            (tuple(map(float, lo)), tuple(map(float, hi))) for lo, hi in self.excluded))
        n = len(self.names)
        if n < 1:
            raise ValueError("chart needs at least one coordinate")
        if len(set(self.names)) != n:
            raise ValueError(f"duplicate coordinate names {self.names}")
        if len(self.lower) != n or len(self.upper) != n:
            raise ValueError("box must have one interval per coordinate")
        for name, lo, hi in zip(self.names, self.lower, self.upper):
            if not lo < hi:
                raise ValueError(f"degenerate interval [{lo}, {hi}] for {name}")
        for lo, hi in self.excluded:
            if len(lo) != n or len(hi) != n:
                raise ValueError("excluded box has wrong dimension")

    @classmethod
    def from_box(cls, box: dict, excluded=()) -> "Chart":
        """Build from ``{"x": (lo, hi), ...}`` in coordinate order."""
        names = tuple(box)
        return cls(names, [box[k][0] for k in names], [box[k][1] for k in names], excluded)

    @property
    def dim(self) -> int:
        return len(self.names)

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        if np.any(p < np.asarray(self.lower)) or np.any(p > np.asarray(self.upper)):
            return False
        for lo, hi in self.excluded:
            if np.all(p >= lo) and np.all(p <= hi):
                return False
        return True

    def point(self, coords) -> np.ndarray:
        p = np.asarray(coords, dtype=float).reshape(-1)
        if p.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} coordinates, got {p.shape[0]}")
        if not self.contains(p):
            raise StencilError(f"point {p.tolist()} outside the valid region of the chart")
        return p

    def grid(self, resolution: int, margin: float = 0.0) -> np.ndarray:
        """Tensor-product grid, ``resolution**n`` points in row-major order.

        Each interval is shrunk by `margin` on both sides.  Points falling
        inside excluded loci are dropped.
        """
        if resolution < 1:
            raise ValueError("grid resolution must be positive")
        axes = []
        for lo, hi in zip(self.lower, self.upper):
            pad = margin
            if not 2 * pad < hi - lo:
                raise ValueError(f"margin {margin} leaves nothing of [{lo}, {hi}]")
            if resolution == 1:
                axes.append(np.array([0.5 * (lo + hi)]))
            else:
                axes.append(np.linspace(lo + pad, hi - pad, resolution))
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
        keep = [self.contains(p) for p in pts]
        return pts[np.asarray(keep, dtype=bool)]

    def random_points(self, count: int, rng: np.random.Generator, inset: float = 0.05) -> np.ndarray:
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        pad = inset * (hi - lo)
        out = []
        while len(out) < count:
            p = rng.uniform(lo + pad, hi - pad)
            if self.contains(p):
                out.append(p)
        return np.array(out)


ANALYTIC = "analytic"
CENTRAL = "central_difference"
RICHARDSON = "richardson"
_MODES = (ANALYTIC, CENTRAL, RICHARDSON)
_ALIASES = {"central": CENTRAL, "central_difference": CENTRAL,
            "richardson": RICHARDSON, "analytic": ANALYTIC}


@dataclass(frozen=True)
class DifferentiationScheme:
    mode: str = ANALYTIC
    step: float = 1e-5
    levels: int = 2

    def __post_init__(self):
        mode = _ALIASES.get(self.mode)
        if mode is None:
            raise ValueError(f"unknown differentiation mode {self.mode!r}; expected one of {_MODES}")
        object.__setattr__(self, "mode", mode)
        if not self.step > 0:
            raise ValueError("step must be positive")
        if self.levels < 1:
            raise ValueError("richardson levels must be >= 1")

    def stencil_margin(self, chart: "Chart", nested: bool = True) -> float:
        """Distance from the box edges that keeps every stencil inside (10x the reach)."""
        if self.mode == ANALYTIC:
            return 0.0
        scale = max(1.0, *(abs(v) for v in chart.lower + chart.upper))
        reach = self.step * scale
        if nested:
            reach += self.outer().step * scale
        return 10.0 * reach

    def outer(self) -> "DifferentiationScheme":
        """Scheme for the second of two nested numerical differentiations."""
        if self.mode == ANALYTIC:
            return self
        return DifferentiationScheme(self.mode, self.step ** 0.5, self.levels)


def _central(func, p, mu, h, chart):
    lo = p.copy()
    hi = p.copy()
    lo[mu] -= h
    hi[mu] += h
    if chart is not None and not (chart.contains(lo) and chart.contains(hi)):
        raise StencilError(
            f"stencil of half-width {h:g} in direction {mu} at {p.tolist()} leaves the valid region")
    return (np.asarray(func(hi), dtype=float) - np.asarray(func(lo), dtype=float)) / (2.0 * h)


def derivative(func: Callable, p, mu: int, scheme: DifferentiationScheme,
               chart: Optional[Chart] = None):
    """Finite-difference ∂_mu of an array-valued function of the point.

    Step is ``scheme.step * max(1, |p_mu|)``.  Richardson mode builds a
    tableau over steps h, h/2, h/4, ... with factors 4**k.
    """
    p = np.asarray(p, dtype=float)
    if not 0 <= mu < p.shape[0]:
        raise IndexError(f"direction {mu} out of range for dimension {p.shape[0]}")
    h = scheme.step * max(1.0, abs(p[mu]))
    if scheme.mode == CENTRAL:
        return _central(func, p, mu, h, chart)
    if scheme.mode != RICHARDSON:
        raise ValueError(f"derivative() is numerical only, got mode {scheme.mode}")
    row = [_central(func, p, mu, h / 2 ** k, chart) for k in range(scheme.levels)]
    for k in range(1, scheme.levels):
        factor = 4.0 ** k
        row = [(factor * row[i + 1] - row[i]) / (factor - 1.0) for i in range(len(row) - 1)]
    return row[0]


class ScalarField:
    """Real-valued field on a chart."""

    def __init__(self, chart: Chart, func: Callable, partial: Optional[Callable] = None,
                 expr: Optional[Expr] = None):
        self.chart = chart
        self._func = func
        self._partial = partial
        self.expr = expr
        self._partials = {}

    @classmethod
    def from_expr(cls, source, chart: Chart) -> "ScalarField":
        expr = exprlang.parse(source, chart.names) if isinstance(source, str) else source
        run = exprlang.compile_expr([expr], chart.names)
        names = chart.names

        def partial(mu):
            return cls.from_expr(exprlang.symbolic_partial(expr, names[mu]), chart)

        return cls(chart, lambda p: run(p)[0], partial, expr)

    @classmethod
    def constant(cls, value: float, chart: Chart) -> "ScalarField":
        return cls.from_expr(exprlang.Num(float(value)), chart)

    def __call__(self, p) -> float:
        return float(self._func(np.asarray(p, dtype=float)))

    def partial(self, mu: int) -> "ScalarField":
        if self._partial is None:
            raise AnalyticPartialUnavailable("field has no analytic partial provider")
        if mu not in self._partials:
            self._partials[mu] = self._partial(mu)
        return self._partials[mu]

    @property
    def has_analytic_partials(self) -> bool:
        return self._partial is not None


class MatrixField:
    """n x m matrix-valued field on a chart (n = m = chart dimension for tensors)."""

    def __init__(self, chart: Chart, func: Callable, partial: Optional[Callable] = None,
                 shape: Optional[tuple] = None, exprs=None):
        self.chart = chart
        self._func = func
        self._partial = partial
        self.shape = shape or (chart.dim, chart.dim)
        self.exprs = exprs
        self._partials = {}

    @classmethod
    def from_exprs(cls, sources: Sequence[Sequence], chart: Chart) -> "MatrixField":
        rows = [[exprlang.parse(s, chart.names) if isinstance(s, str)
                 else (exprlang.Num(float(s)) if isinstance(s, (int, float)) else s)
                 for s in row] for row in sources]
        shape = (len(rows), len(rows[0]))
        if any(len(r) != shape[1] for r in rows):
            raise ValueError("expression matrix rows have unequal length")
        flat = [e for row in rows for e in row]
        run = exprlang.compile_expr(flat, chart.names)
        names = chart.names

        def partial(mu):
            return cls.from_exprs(
                [[exprlang.symbolic_partial(e, names[mu]) for e in row] for row in rows], chart)

        return cls(chart, lambda p: np.array(run(p), dtype=float).reshape(shape),
                   partial, shape, tuple(tuple(r) for r in rows))

    @classmethod
    def constant(cls, matrix, chart: Chart) -> "MatrixField":
        m = np.array(matrix, dtype=float)
        return cls.from_exprs([[exprlang.Num(float(v)) for v in row] for row in m], chart)

    @classmethod
    def identity(cls, chart: Chart) -> "MatrixField":
        return cls.constant(np.eye(chart.dim), chart)

    def __call__(self, p) -> np.ndarray:
        return np.asarray(self._func(np.asarray(p, dtype=float)), dtype=float)

    def partial(self, mu: int) -> "MatrixField":
        if self._partial is None:
            raise AnalyticPartialUnavailable("field has no analytic partial provider")
        if mu not in self._partials:
            self._partials[mu] = self._partial(mu)
        return self._partials[mu]

    @property
    def has_analytic_partials(self) -> bool:
        return self._partial is not None

    @property
    def T(self) -> "MatrixField":
        return _product([(self, True)])

    def __matmul__(self, other: "MatrixField") -> "MatrixField":
        return _product([(self, False), (other, False)])

    def __add__(self, other: "MatrixField") -> "MatrixField":
        return _sum([self, other])


def _product(factors) -> MatrixField:
    """Lazy product of matrix fields with product-rule partials.

    `factors` is a list of (field, transposed) pairs; nested products are flattened.
    """
    flat = []
    for f, t in factors:
        if isinstance(f, _Product):
            inner = f.factors if not t else [(g, not tg) for g, tg in reversed(f.factors)]
            flat.extend(inner)
        else:
            flat.append((f, t))
    return _Product(flat)


class _Product(MatrixField):
    def __init__(self, factors):
        self.factors = list(factors)
        chart = factors[0][0].chart
        analytic = all(f.has_analytic_partials for f, _ in factors)

        def func(p):
            out = None
            for f, t in self.factors:
                m = f(p)
                m = m.T if t else m
                out = m if out is None else out @ m
            return out

        def partial(mu):
            terms = []
            for i, (f, t) in enumerate(self.factors):
                dfac = list(self.factors)
                dfac[i] = (f.partial(mu), t)
                terms.append(_Product(dfac))
            return _sum(terms)

        first, t0 = factors[0]
        last, t1 = factors[-1]
        shape = (first.shape[1] if t0 else first.shape[0], last.shape[0] if t1 else last.shape[1])
        super().__init__(chart, func, partial if analytic else None, shape)


def _sum(terms) -> MatrixField:
    terms = list(terms)
    chart = terms[0].chart
    analytic = all(t.has_analytic_partials for t in terms)

    def func(p):
        out = terms[0](p)
        for t in terms[1:]:
            out = out + t(p)
        return out

    def partial(mu):
        return _sum([t.partial(mu) for t in terms])

    return MatrixField(chart, func, partial if analytic else None, terms[0].shape)


def _check_direction(chart: Chart, mu: int):
    if not 0 <= mu < chart.dim:
        raise IndexError(f"direction {mu} out of range for dimension {chart.dim}")


def partial_scalar(f: ScalarField, p, mu: int, scheme: DifferentiationScheme) -> float:
    """∂_mu f at p under `scheme`."""
    _check_direction(f.chart, mu)
    p = f.chart.point(p)
    if scheme.mode == ANALYTIC:
        return f.partial(mu)(p)
    return float(derivative(f, p, mu, scheme, f.chart))


def partial_matrix(F: MatrixField, p, mu: int, scheme: DifferentiationScheme) -> np.ndarray:
    """Entrywise ∂_mu F at p under `scheme`."""
    _check_direction(F.chart, mu)
    p = F.chart.point(p)
    if scheme.mode == ANALYTIC:
        return F.partial(mu)(p)
    return derivative(F, p, mu, scheme, F.chart)
