import math
import re
from fractions import Fraction as F

import numpy as np
import pytest

from deformgeo.chart_fields import Chart, DifferentiationScheme, MatrixField, partial_matrix
from deformgeo.deformation import (
    DeformationError, DeformationField, RateTensor, commutator_defect,
    deformed_frame_rate, deformed_metric, deformed_metric_field, recover_deformation,
    recovered_deformation_field, raw_rate, validate_deformation,
)
from deformgeo.metric_geometry import MetricError
from deformgeo.scenarios import (
    conformal_sphere, nondiagonal_shear, planar_dilation_shear, sphere_from_flat,
)

ANALYTIC = DifferentiationScheme()
RICH = DifferentiationScheme("richardson")
PLANE = Chart.from_box({"x": (-1.0, 1.0), "y": (-1.0, 1.0)})

LBAR1 = np.array([[4 / 3, 0.0], [-2 / 3, 0.0]])
L1 = np.array([[20 / 9, 10 / 9], [-16 / 9, -8 / 9]])


def random_spd(rng, n, spread=1.0):
    A = rng.normal(size=(n, n))
    Q, _ = np.linalg.qr(A)
    return (Q * np.exp(rng.uniform(-spread, spread, n))) @ Q.T


class TestDeformedMetric:
    def test_identity(self):
        gbar = np.array([[2.0, 0.3], [0.3, 1.0]])
        assert np.allclose(deformed_metric(np.eye(2), gbar, None).matrix, gbar, atol=0)

    def test_planar(self):
        sc = planar_dilation_shear()
        p = [0.5, -0.3]
        phi, sig = 0.3 * 0.5 + 0.1 * 0.09, 0.2 * 0.5 * -0.3
        want = np.diag([math.exp(2 * (phi + sig)), math.exp(2 * (phi - sig))])
        assert np.allclose(deformed_metric(sc.P, sc.gbar, p).matrix, want, rtol=1e-14, atol=0)

    def test_shear(self):
        P = np.array([[1.0, 0.5], [0.5, 1.0]])
        assert np.array_equal(deformed_metric(P, np.eye(2), None).matrix, [[1.25, 1.0], [1.0, 1.25]])

    def test_sphere(self):
        R, t = 2.0, 0.9
        g = deformed_metric(sphere_from_flat(R).P, MatrixField.identity(sphere_from_flat(R).chart), [t, 1.0])
        assert np.allclose(g.matrix, np.diag([R * R, (R * math.sin(t)) ** 2]), rtol=1e-15, atol=0)

    @pytest.mark.parametrize("P", [
        [[1.0, 0.2], [0.0, 1.0]],       # not gbar-symmetric
        [[-1.0, 0.0], [0.0, 1.0]],      # not positive
        [[0.0, 0.0], [0.0, 1.0]],       # singular
    ])
    def test_invalid_deformations(self, P):
        with pytest.raises(DeformationError):
            deformed_metric(np.array(P), np.eye(2), [0.1, 0.2])

    def test_gbar_symmetry_uses_reference(self):
        gbar = np.diag([4.0, 1.0])
        # P = [[1, 1], [4, 1]] has gbar P = [[4, 4], [4, 1]], symmetric but P is not
        with pytest.raises(DeformationError):
            validate_deformation(np.array([[1.0, 1.0], [4.0, 1.0]]), gbar)  # indefinite
        P = np.array([[2.0, 0.25], [1.0, 1.0]])
        validate_deformation(P, gbar)

    def test_field_validation_reports_point(self):
        bad = MatrixField.from_exprs([["x", 0], [0, 1]], PLANE)
        with pytest.raises(DeformationError) as info:
            DeformationField(bad, MatrixField.identity(PLANE)).validate(5)
        assert info.value.point is not None


class TestRecovery:
    def test_identity(self):
        gbar = random_spd(np.random.default_rng(1), 3)
        assert np.allclose(recover_deformation(gbar, gbar), np.eye(3), atol=1e-13)

    def test_homothety_on_round_sphere(self):
        t = 1.1
        gbar = np.diag([1.0, math.sin(t) ** 2])
        P = recover_deformation(gbar, math.exp(0.8) * gbar)
        assert np.allclose(P, math.exp(0.4) * np.eye(2), rtol=1e-14, atol=1e-14)

    def test_shear_metric(self):
        P = recover_deformation(np.eye(2), [[1.25, 1.0], [1.0, 1.25]])
        assert np.allclose(P, [[1.0, 0.5], [0.5, 1.0]], atol=1e-15)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_random_roundtrips(self, n):
        rng = np.random.default_rng(100 + n)
        worst = 0.0
        for _ in range(100):
            gbar = random_spd(rng, n)
            E = np.linalg.cholesky(gbar).T
            P = np.linalg.solve(E, random_spd(rng, n) @ E)
            back = recover_deformation(gbar, P.T @ gbar @ P)
            worst = max(worst, np.linalg.norm(back - P) / np.linalg.norm(P))
        assert worst <= 1e-8

    def test_rejects_non_metric(self):
        with pytest.raises(MetricError):
            recover_deformation(np.eye(2), [[1.0, 2.0], [2.0, 1.0]])

    def test_near_singular_metric_is_rejected(self):
        g = np.array([[1.0, 1.0 - 1e-14], [1.0 - 1e-14, 1.0]])
        with pytest.raises(MetricError):
            recover_deformation(np.eye(2), g)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            recover_deformation(np.eye(2), np.eye(3))

    def test_recovered_field_partials_are_exact(self):
        sc = nondiagonal_shear()
        g = deformed_metric_field(sc.P)
        rec = recovered_deformation_field(sc.gbar, g)
        p = [0.3, 0.2]
        assert np.allclose(rec(p), sc.P(p), atol=1e-13)
        for mu in range(2):
            assert np.allclose(partial_matrix(rec.field, p, mu, ANALYTIC),
                               partial_matrix(sc.P.field, p, mu, ANALYTIC), atol=1e-12)
            assert np.allclose(partial_matrix(rec.field, p, mu, ANALYTIC),
                               partial_matrix(rec.field, p, mu, RICH), atol=1e-9)


class TestRawRate:
    def test_constant_P_on_flat_reference(self):
        P = MatrixField.constant([[2.0, 0.5], [0.5, 1.0]], PLANE)
        L = raw_rate(DeformationField(P, MatrixField.identity(PLANE)), MatrixField.identity(PLANE),
                     [0.2, 0.1], ANALYTIC)
        assert not np.asarray(L.matrices).any()

    @pytest.mark.parametrize("scheme, tol", [(ANALYTIC, 1e-14), (RICH, 1e-9)])
    def test_planar(self, scheme, tol):
        sc = planar_dilation_shear()
        p = [0.4, 0.6]
        L = raw_rate(sc.P, sc.gbar, p, scheme)
        dphi, dsig = np.array([0.3, 0.2 * 0.6]), np.array([0.2 * 0.6, 0.2 * 0.4])
        for i in range(2):
            want = np.diag([dphi[i] + dsig[i], dphi[i] - dsig[i]])
            assert np.allclose(L[i], want, atol=tol, rtol=0)

    def test_sphere(self):
        sc = sphere_from_flat(3.0)
        t = 0.8
        L = raw_rate(sc.P, sc.gbar, [t, 2.0], ANALYTIC)
        assert np.allclose(L[0], [[0, 0], [0, 1 / math.tan(t)]], atol=1e-15)
        assert not L[1].any()

    @pytest.mark.parametrize("scheme, tol", [(ANALYTIC, 1e-14), (RICH, 1e-9)])
    def test_shear_golden(self, scheme, tol):
        sc = nondiagonal_shear()
        L = raw_rate(sc.P, sc.gbar, [0.0, 0.0], scheme)
        assert np.allclose(L[0], LBAR1, atol=tol, rtol=0)
        assert np.allclose(L[1], 0.0, atol=tol)

    def test_non_flat_reference_uses_connection(self):
        # constant P on a round sphere is not covariantly constant in general
        sc = conformal_sphere(1.0, "0")
        P = MatrixField.constant([[2.0, 0.0], [0.0, 1.0]], sc.chart)
        L = raw_rate(DeformationField(P, sc.gbar), sc.gbar, [1.0, 0.5], ANALYTIC)
        assert np.asarray(L.matrices).any()
        # P = 3I is covariantly constant for any metric
        P3 = MatrixField.constant(3 * np.eye(2), sc.chart)
        L3 = raw_rate(DeformationField(P3, sc.gbar), sc.gbar, [1.0, 0.5], ANALYTIC)
        assert np.allclose(L3.matrices, 0.0, atol=1e-15)


class TestDeformedFrameRate:
    def test_shear_golden(self):
        P = np.array([[1.0, 0.5], [0.5, 1.0]])
        L = deformed_frame_rate(P, RateTensor(np.stack([LBAR1, np.zeros((2, 2))]), "raw"))
        assert np.allclose(L[0], L1, atol=1e-15)
        assert not L[1].any()

    def test_conformal(self):
        sc = conformal_sphere(1.0, "0.1*cos(theta)")
        p = [1.0, 0.2]
        Lb = raw_rate(sc.P, sc.gbar, p, ANALYTIC)
        L = deformed_frame_rate(sc.P(p), Lb)
        want = -0.1 * math.sin(1.0) * np.eye(2)
        assert np.allclose(Lb[0], want, atol=1e-15) and np.allclose(L[0], want, atol=1e-15)
        assert np.allclose(L[1], 0.0, atol=1e-15)


class TestCommutator:
    def test_conformal_and_diagonal(self):
        Lb = np.array([[0.3, -1.0], [2.0, 0.7]])
        assert not commutator_defect(Lb, 1.7 * np.eye(2)).any()
        assert not commutator_defect(np.diag([1.0, -2.0]), np.diag([3.0, 0.5])).any()

    def test_shear_against_fraction_oracle(self):
        Lb = [[F(4, 3), F(0)], [F(-2, 3), F(0)]]
        P = [[F(1), F(1, 2)], [F(1, 2), F(1)]]

        def mul(A, B):
            return [[sum(A[i][k] * B[k][j] for k in range(2)) for j in range(2)] for i in range(2)]

        LP, PL = mul(Lb, P), mul(P, Lb)
        oracle = np.array([[float(LP[i][j] - PL[i][j]) for j in range(2)] for i in range(2)])
        assert np.allclose(oracle, [[1 / 3, 2 / 3], [-2 / 3, -1 / 3]], atol=1e-16)
        got = commutator_defect(LBAR1, np.array([[1.0, 0.5], [0.5, 1.0]]))
        assert np.allclose(got, oracle, atol=1e-15)


class TestTensoriality:
    """x' = 2x + 1 on the plane: J = diag(2, 1), gbar' = diag(1/4, 1), P' = J P J⁻¹."""

    J = np.diag([2.0, 1.0])
    Jinv = np.diag([0.5, 1.0])

    def _transformed(self, entries, box):
        lo, hi = box
        chart = Chart.from_box({"x": (2 * lo + 1, 2 * hi + 1), "y": (-1.0, 1.0)})
        sub = [[re.sub(r"\bx\b", "((x - 1)/2)", e) for e in row] for row in entries]
        P = MatrixField.from_exprs(sub, chart)
        P = MatrixField.constant(self.J, chart) @ P @ MatrixField.constant(self.Jinv, chart)
        gbar = MatrixField.constant(np.diag([0.25, 1.0]), chart)
        return DeformationField(P, gbar), gbar

    @pytest.mark.parametrize("entries, box", [
        ([["exp(0.3*x + 0.1*y^2 + 0.2*x*y)", "0"], ["0", "exp(0.3*x + 0.1*y^2 - 0.2*x*y)"]], (-1.0, 1.0)),
        ([["1 + x", "0.5"], ["0.5", "1"]], (-0.5, 1.0)),
    ])
    @pytest.mark.parametrize("scheme, tol", [(ANALYTIC, 1e-12), (RICH, 1e-7)])
    def test_transforms_as_1_2_tensor(self, entries, box, scheme, tol):
        chart = Chart.from_box({"x": box, "y": (-1.0, 1.0)})
        P = DeformationField(MatrixField.from_exprs(entries, chart), MatrixField.identity(chart))
        P2, gbar2 = self._transformed(entries, box)
        for p in ([0.1, 0.3], [0.6, -0.7]):
            L = np.asarray(raw_rate(P, P.gbar, p, scheme).components)
            q = [2 * p[0] + 1, p[1]]
            L2 = np.asarray(raw_rate(P2, gbar2, q, scheme).components)
            want = np.einsum("ar,mb,nc,rbc->amn", self.J, self.Jinv, self.Jinv,
                             np.einsum("rmn->rmn", L))
            assert np.max(np.abs(L2 - want)) <= tol


def test_identity_collapse():
    P = DeformationField(MatrixField.identity(PLANE), MatrixField.identity(PLANE))
    Lb = raw_rate(P, P.gbar, [0.0, 0.5], ANALYTIC)
    assert not np.asarray(Lb.matrices).any()
    assert not np.asarray(deformed_frame_rate(np.eye(2), Lb).matrices).any()
