"""The five example families with hand-derived closed forms.

Closed forms below are written out from the family formulas and only use the
scalar input fields and their symbolic derivatives; they never touch the
generic pipeline, so comparing the two is a real check.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Union

import numpy as np

from . import exprlang as ex
from .chart_fields import Chart, DifferentiationScheme, MatrixField, ScalarField
from .connection import covariant_derivative_metric
from .deformation import DeformationField, commutator_defect
from .pipeline import DeformedGeometry

__all__ = [
    "Scenario", "CheckResult", "planar_dilation_shear", "pure_dilation", "sphere_from_flat",
    "nondiagonal_shear", "shear_baseline", "conformal_sphere", "identity", "by_name",
    "SCENARIO_NAMES", "verify_scenario", "structural_checks", "CheckTracker", "TOL_ALGEBRAIC", "TOL_FIRST", "TOL_CURVATURE",
]

TOL_ALGEBRAIC = 1e-10
TOL_FIRST = 1e-8
TOL_CURVATURE = 1e-6

# closed-form name -> (pipeline quantity, tolerance)
_LADDER = {
    "g": TOL_ALGEBRAIC, "Pinv": TOL_ALGEBRAIC,
    "gamma0": TOL_FIRST, "Lbar": TOL_FIRST, "Lbar_dil": TOL_FIRST, "L": TOL_FIRST,
    "Lambda": TOL_FIRST, "Gamma": TOL_FIRST, "K": TOL_CURVATURE,
}

Scalar = Union[str, float, ScalarField, ex.Expr]


@dataclass
class Scenario:
    name: str
    chart: Chart
    gbar: MatrixField
    P: DeformationField
    closed_forms: Dict[str, Callable] = field(default_factory=dict)
    coincidence_expected: bool = True   # Λ_μ = L_μ = L̄_μ expected on this family
    description: str = ""

    def geometry(self, scheme: Optional[DifferentiationScheme] = None) -> DeformedGeometry:
        return DeformedGeometry(self.gbar, self.P, scheme)

    def closed_form(self, name: str, p) -> np.ndarray:
        return np.asarray(self.closed_forms[name](np.asarray(p, dtype=float)), dtype=float)


def _expr(value: Scalar, chart: Chart) -> ex.Expr:
    if isinstance(value, ScalarField):
        if value.expr is None:
            raise TypeError("scenario scalar fields must be expression-backed")
        return value.expr
    if isinstance(value, ex.Expr):
        return value
    if isinstance(value, (int, float)):
        return ex.Num(float(value))
    return ex.parse(value, chart.names)


class _Scalar:
    """Value and symbolic first/second partials of one input scalar."""

    def __init__(self, expr: ex.Expr, chart: Chart):
        names = chart.names
        n = chart.dim
        d1 = [ex.symbolic_partial(expr, v) for v in names]
        d2 = [[ex.symbolic_partial(d, v) for v in names] for d in d1]
        self._f = ex.compile_expr([expr], names)
        self._d1 = ex.compile_expr(d1, names)
        self._d2 = ex.compile_expr([e for row in d2 for e in row], names)
        self._n = n

    def __call__(self, p) -> float:
        return self._f(p)[0]

    def grad(self, p) -> np.ndarray:
        return np.array(self._d1(p))

    def hess(self, p) -> np.ndarray:
        return np.array(self._d2(p)).reshape(self._n, self._n)


# --------------------------------------------------------------------------
# planar family
# --------------------------------------------------------------------------

PLANAR_BOX = {"x": (-1.0, 1.0), "y": (-1.0, 1.0)}


def planar_dilation_shear(phi: Scalar = "0.3*x + 0.1*y^2", sigma: Scalar = "0.2*x*y",
                          box=None, name: str = "planar") -> Scenario:
    """Flat plane deformed by P = e^φ diag(e^σ, e^{-σ})."""
    chart = Chart.from_box(box or PLANAR_BOX)
    f_phi = _expr(phi, chart)
    f_sig = _expr(sigma, chart)
    gbar = MatrixField.identity(chart)
    P = MatrixField.from_exprs(
        [[ex.Call("exp", ex.Add(f_phi, f_sig)), ex.Num(0.0)],
         [ex.Num(0.0), ex.Call("exp", ex.Sub(f_phi, f_sig))]], chart)
    ph = _Scalar(f_phi, chart)
    sg = _Scalar(f_sig, chart)

    def g(p):
        return np.diag([math.exp(2 * (ph(p) + sg(p))), math.exp(2 * (ph(p) - sg(p)))])

    def lbar(p):
        dp, ds = ph.grad(p), sg.grad(p)
        return np.stack([np.diag([dp[i] + ds[i], dp[i] - ds[i]]) for i in range(2)])

    def lbar_dil(p):
        dp = ph.grad(p)
        return np.stack([dp[i] * np.eye(2) for i in range(2)])

    def lbar_shear(p):
        ds = sg.grad(p)
        return np.stack([np.diag([ds[i], -ds[i]]) for i in range(2)])

    def gamma0(p):
        # values[k-1, i-1, j-1] = Γ°^k_{ij}
        dp, ds = ph.grad(p), sg.grad(p)
        s = sg(p)
        out = np.zeros((2, 2, 2))
        out[0, 0, 0] = dp[0] + ds[0]
        out[0, 0, 1] = out[0, 1, 0] = dp[1] + ds[1]
        out[1, 1, 1] = dp[1] - ds[1]
        out[1, 0, 1] = out[1, 1, 0] = dp[0] - ds[0]
        out[0, 1, 1] = -math.exp(-4 * s) * (dp[0] - ds[0])
        out[1, 0, 0] = -math.exp(4 * s) * (dp[1] + ds[1])
        return out

    def gamma(p):
        return gamma0(p) + np.transpose(lbar(p), (1, 0, 2))

    forms = {"g": g, "Lbar": lbar, "Lbar_dil": lbar_dil, "Lbar_shear": lbar_shear,
             "L": lbar, "Lambda": lbar, "gamma0": gamma0, "Gamma": gamma}
    return Scenario(name, chart, gbar, DeformationField(P, gbar), forms, True,
                    "planar dilation-shear family")


def pure_dilation(phi: Scalar = "0.3*x + 0.1*y^2", box=None) -> Scenario:
    """Planar family with σ = 0, P = e^φ I."""
    sc = planar_dilation_shear(phi, 0.0, box, name="dilation")
    chart = sc.chart
    ph = _Scalar(_expr(phi, chart), chart)
    gamma0 = sc.closed_forms["gamma0"]

    def lam(p):
        d = ph.grad(p)
        return np.stack([d[i] * np.eye(2) for i in range(2)])

    def gamma(p):
        out = gamma0(p).copy()
        d = ph.grad(p)
        for k in range(2):
            for i in range(2):
                out[k, i, k] += d[i]   # δ^k_j ∂_i φ
        return out

    sc.closed_forms.update({"Lbar": lam, "L": lam, "Lambda": lam, "Gamma": gamma})
    sc.description = "pure dilation"
    return sc


def identity(box=None) -> Scenario:
    """P = I on the flat plane: nothing is deformed."""
    chart = Chart.from_box(box or PLANAR_BOX)
    gbar = MatrixField.identity(chart)
    P = MatrixField.identity(chart)
    zero3 = lambda p: np.zeros((2, 2, 2))  # noqa: E731
    forms = {"g": lambda p: np.eye(2), "Lbar": zero3, "L": zero3, "Lambda": zero3,
             "gamma0": zero3, "Gamma": zero3, "K": lambda p: 0.0}
    return Scenario("identity", chart, gbar, DeformationField(P, gbar), forms, True,
                    "trivial deformation")


# --------------------------------------------------------------------------
# spheres
# --------------------------------------------------------------------------

SPHERE_MARGIN = 0.3


def _sphere_chart(margin=SPHERE_MARGIN):
    # poles (sin θ = 0) are excluded by the box; the loci are declared anyway
    return Chart.from_box({"theta": (margin, math.pi - margin), "phi": (0.0, 2 * math.pi)},
                          excluded=[((-0.1, -1.0), (0.1, 7.0)),
                                    ((math.pi - 0.1, -1.0), (math.pi + 0.1, 7.0))])


def sphere_from_flat(R: float = 1.0) -> Scenario:
    """Flat (θ, φ) patch deformed by P = diag(R, R sin θ) into a round sphere."""
    if not (isinstance(R, (int, float)) and R > 0 and math.isfinite(R)):
        raise ValueError(f"sphere radius must be positive, got {R!r}")
    chart = _sphere_chart()
    gbar = MatrixField.identity(chart)
    P = MatrixField.from_exprs([[repr(float(R)), "0"], ["0", f"{float(R)!r}*sin(theta)"]], chart)

    def g(p):
        return np.diag([R * R, (R * math.sin(p[0])) ** 2])

    def lbar(p):
        out = np.zeros((2, 2, 2))
        out[0, 1, 1] = math.cos(p[0]) / math.sin(p[0])
        return out

    forms = {"g": g, "Lbar": lbar, "L": lbar, "K": lambda p: 1.0 / (R * R)}
    return Scenario("sphere", chart, gbar, DeformationField(P, gbar), forms, True,
                    f"round sphere of radius {R} from a flat patch")


def conformal_sphere(R: float = 1.0, phi: Scalar = "0.1*cos(theta)") -> Scenario:
    """Round sphere of radius R rescaled by P = e^φ I."""
    if not (isinstance(R, (int, float)) and R > 0 and math.isfinite(R)):
        raise ValueError(f"sphere radius must be positive, got {R!r}")
    chart = _sphere_chart()
    R2 = repr(float(R) ** 2)
    gbar = MatrixField.from_exprs([[R2, "0"], ["0", f"{R2}*sin(theta)^2"]], chart)
    f_phi = _expr(phi, chart)
    e = ex.Call("exp", f_phi)
    P = MatrixField.from_exprs([[e, ex.Num(0.0)], [ex.Num(0.0), e]], chart)
    ph = _Scalar(f_phi, chart)

    def g(p):
        s = math.sin(p[0])
        return math.exp(2 * ph(p)) * np.diag([R * R, R * R * s * s])

    def rates(p):
        d = ph.grad(p)
        return np.stack([d[i] * np.eye(2) for i in range(2)])

    def laplacian_phi(p):
        # round-sphere Laplacian: (φ_θθ + cot θ φ_θ + φ_φφ / sin²θ) / R²
        d = ph.grad(p)
        h = ph.hess(p)
        s, c = math.sin(p[0]), math.cos(p[0])
        return (h[0, 0] + c / s * d[0] + h[1, 1] / (s * s)) / (R * R)

    def K(p):
        return math.exp(-2 * ph(p)) * (1.0 / (R * R) - laplacian_phi(p))

    forms = {"g": g, "Lbar": rates, "L": rates, "Lambda": rates, "K": K,
             "laplacian_phi": laplacian_phi}
    return Scenario("conformal_sphere", chart, gbar, DeformationField(P, gbar), forms, True,
                    f"conformally rescaled sphere of radius {R}")


# --------------------------------------------------------------------------
# non-diagonal shear
# --------------------------------------------------------------------------

SHEAR_BOX = {"x": (-0.5, 1.0), "y": (-1.0, 1.0)}


def nondiagonal_shear(a: Scalar = "1 + x", s: float = 0.5, box=None) -> Scenario:
    """Flat plane deformed by P = [[a(x), s], [s, 1]] with 0 < |s| < 1 and a > s²."""
    if not 0 < abs(s) < 1:
        raise ValueError(f"shear parameter must satisfy 0 < |s| < 1, got {s}")
    chart = Chart.from_box(box or SHEAR_BOX)
    f_a = _expr(a, chart)
    if ex.variables(f_a) - {chart.names[0]}:
        raise ValueError("a must depend on the first coordinate only")
    av = _Scalar(f_a, chart)
    margin = min(av(q) for q in chart.grid(41)) - s * s
    if not margin > 0:
        raise ValueError(f"a(x) > s^2 violated on the box (min a - s^2 = {margin:.3g})")
    gbar = MatrixField.identity(chart)
    S = ex.Num(float(s))
    P = MatrixField.from_exprs([[f_a, S], [S, ex.Num(1.0)]], chart)

    def g(p):
        A = av(p)
        return np.array([[A * A + s * s, s * (A + 1)], [s * (A + 1), 1 + s * s]])

    def pinv(p):
        A = av(p)
        return np.array([[1.0, -s], [-s, A]]) / (A - s * s)

    def lbar(p):
        A, dA = av(p), av.grad(p)[0]
        out = np.zeros((2, 2, 2))
        out[0] = dA / (A - s * s) * np.array([[1.0, 0.0], [-s, 0.0]])
        return out

    def lform(p):
        A, dA = av(p), av.grad(p)[0]
        out = np.zeros((2, 2, 2))
        out[0] = dA / (A - s * s) ** 2 * np.array(
            [[A * (1 + s * s), s * (1 + s * s)], [-A * s * (A + 1), -s * s * (A + 1)]])
        return out

    forms = {"g": g, "Pinv": pinv, "Lbar": lbar, "L": lform}
    return Scenario("shear", chart, gbar, DeformationField(P, gbar), forms, False,
                    f"non-diagonal shear, s = {s}")


def shear_baseline(box=None) -> Scenario:
    """The s -> 0, a = 1 limit of the shear family: P = I on the shear chart."""
    sc = identity(box or SHEAR_BOX)
    sc.name = "shear_baseline"
    return sc


_BUILDERS = {
    "planar": planar_dilation_shear,
    "dilation": pure_dilation,
    "sphere": sphere_from_flat,
    "shear": nondiagonal_shear,
    "conformal_sphere": conformal_sphere,
}
SCENARIO_NAMES = tuple(_BUILDERS)


def by_name(name: str, **params) -> Scenario:
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(SCENARIO_NAMES)}") from None
    return builder(**params)


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    tolerance: float
    max_residual: float
    passed: bool
    expectation: str = "holds"   # "holds" or "violated"
    worst_point: Optional[list] = None

    def as_dict(self) -> dict:
        return {"name": self.name, "tolerance": self.tolerance,
                "max_residual": self.max_residual, "expectation": self.expectation,
                "passed": self.passed, "worst_point": self.worst_point}


class CheckTracker:
    """Running maximum of one residual over a grid."""

    def __init__(self, name, tol, expectation="holds"):
        self.name, self.tol, self.expectation = name, tol, expectation
        self.worst = 0.0
        self.where = None
        self.ok = True

    def add(self, value, p, ok=None):
        value = float(value)
        if self.where is None or value > self.worst:
            self.worst, self.where = value, [float(c) for c in p]
        if ok is None:
            ok = value <= self.tol
        self.ok = self.ok and bool(ok)

    def result(self) -> CheckResult:
        return CheckResult(self.name, self.tol, self.worst, self.ok, self.expectation, self.where)


def _scale(x) -> float:
    return max(1.0, float(np.max(np.abs(x))))


def structural_checks(pg, geo: DeformedGeometry, track: Callable) -> None:
    """Identities every deformed geometry must satisfy, accumulated per point.

    `track(name, tol)` returns the accumulator for a named check.
    """
    p = pg.point
    g = pg.g.matrix
    track("deviation_equals_Lambda", TOL_ALGEBRAIC).add(
        np.max(np.abs(pg.C.values - pg.Lambda.components)) / _scale(pg.Lambda.matrices), p)
    lowered = np.einsum("ab,mbc->mac", g, pg.Lambda.matrices)
    track("Lambda_g_self_adjoint", TOL_ALGEBRAIC).add(
        np.max(np.abs(lowered - np.swapaxes(lowered, 1, 2))) / _scale(lowered), p)
    term = np.einsum("smn,sr->mnr", pg.Lambda.components, g)
    ident = pg.nabla_g + term + np.swapaxes(term, 1, 2)
    track("nonmetricity_identity", TOL_FIRST).add(np.max(np.abs(ident)) / _scale(g), p)
    lc_nabla = covariant_derivative_metric(pg.gamma0, geo.g_field, p, geo.scheme)
    track("levi_civita_metric_compatible", TOL_FIRST).add(np.max(np.abs(lc_nabla)) / _scale(g), p)
    g0 = pg.gamma0.values
    track("levi_civita_torsion_free", TOL_ALGEBRAIC).add(
        np.max(np.abs(g0 - np.swapaxes(g0, 1, 2))), p)

    # both directions of L_μ = L̄_μ <=> [L̄_μ, P] = 0
    crit = track("commutator_criterion", TOL_FIRST)
    for mu, Lb in enumerate(pg.Lbar.matrices):
        comm = np.max(np.abs(commutator_defect(Lb, pg.P)))
        diff = np.max(np.abs(pg.L.matrices[mu] - Lb))
        same = diff <= TOL_FIRST * _scale(Lb)
        commutes = comm <= TOL_FIRST * max(np.max(np.abs(Lb)) * np.max(np.abs(pg.P)), 1.0)
        crit.add(diff if commutes else 0.0, p, ok=(same == commutes))


def verify_scenario(sc: Scenario, resolution: int = 21,
                    scheme: Optional[DifferentiationScheme] = None,
                    margin: Optional[float] = None) -> List[CheckResult]:
    """Compare pipeline against closed forms and structural identities on a grid.

    For numerical schemes the grid is pulled in from the box edges so that
    all stencils, nested ones included, stay inside.
    """
    geo = sc.geometry(scheme)
    if margin is None:
        margin = geo.scheme.stencil_margin(sc.chart)
    pts = sc.chart.grid(resolution, margin)
    need_curv = "K" in sc.closed_forms
    trackers: Dict[str, CheckTracker] = {}

    def track(name, tol, expectation="holds"):
        if name not in trackers:
            trackers[name] = CheckTracker(name, tol, expectation)
        return trackers[name]

    for p in pts:
        pg = geo.at(p, curvature=need_curv)
        computed = {"g": pg.g.matrix, "Pinv": np.linalg.inv(pg.P), "gamma0": pg.gamma0.values,
                    "Lbar": pg.Lbar.matrices, "L": pg.L.matrices, "Lambda": pg.Lambda.matrices,
                    "Gamma": pg.Gamma.values}
        if need_curv:
            computed["K"] = pg.curvature.gaussian
        for key, tol in _LADDER.items():
            if key in sc.closed_forms and key in computed:
                want = sc.closed_form(key, p)
                res = np.max(np.abs(np.asarray(computed[key]) - want)) / _scale(want)
                track(f"closed_form:{key}", tol).add(res, p)
        if "Lbar_dil" in sc.closed_forms:
            split = sc.closed_form("Lbar_dil", p) + sc.closed_form("Lbar_shear", p)
            track("closed_form:Lbar_split", TOL_FIRST).add(
                np.max(np.abs(pg.Lbar.matrices - split)) / _scale(split), p)

        structural_checks(pg, geo, track)

        coincidence = np.max(np.abs(pg.Lambda.matrices - pg.Lbar.matrices)) / _scale(pg.Lbar.matrices)
        if sc.coincidence_expected:
            track("coincidence_Lambda_L_Lbar", TOL_FIRST).add(
                max(coincidence, np.max(np.abs(pg.L.matrices - pg.Lbar.matrices))), p)
        else:
            comm = max(np.max(np.abs(commutator_defect(Lb, pg.P))) for Lb in pg.Lbar.matrices)
            t = track("coincidence_Lambda_Lbar", TOL_FIRST, "violated")
            if comm > 1e-6:
                t.add(coincidence, p, ok=coincidence > TOL_FIRST)

    return [t.result() for t in trackers.values()]
