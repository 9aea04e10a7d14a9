import math

import numpy as np
import pytest
from scipy import integrate, special, stats

from isacdet.errors import DegenerateCubic, NegativeEigenvalue, NotPositiveDefinite
from isacdet.numerics import (
    CubicCoefficients,
    cardano_real_root,
    cubic_real_roots,
    cubic_real_roots_array,
    hermitian_sqrt,
    marcum_q1,
    solve_hermitian,
    steering_vector,
)


def random_hpd(rng, n, cond=1e3):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    q, _ = np.linalg.qr(A)
    ev = np.logspace(0, math.log10(cond), n)
    return (q * ev) @ q.conj().T


def bisect_root(c: CubicCoefficients, lo, hi, iters=200):
    flo = c(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        fm = c(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestHermitian:
    def test_solve_matches_dense_inverse(self, rng):
        A = random_hpd(rng, 12)
        v = rng.standard_normal(12) + 1j * rng.standard_normal(12)
        np.testing.assert_allclose(solve_hermitian(A, v), np.linalg.inv(A) @ v, rtol=1e-9)

    def test_solve_multiple_rhs(self, rng):
        A = random_hpd(rng, 6)
        V = rng.standard_normal((6, 3)) + 0j
        np.testing.assert_allclose(A @ solve_hermitian(A, V), V, atol=1e-10)

    def test_indefinite_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            solve_hermitian(np.diag([1.0, -1.0]), np.ones(2))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            solve_hermitian(np.eye(3), np.ones(2))

    def test_sqrt_reconstructs(self, rng):
        A = random_hpd(rng, 10)
        S = hermitian_sqrt(A)
        np.testing.assert_allclose(S @ S.conj().T, A, atol=1e-9 * np.abs(A).max())
        np.testing.assert_allclose(S, S.conj().T, atol=1e-12 * np.abs(S).max())

    def test_sqrt_of_singular_psd(self):
        v = np.array([1.0, 1j, 0.0])
        A = np.outer(v, v.conj())
        S = hermitian_sqrt(A)
        np.testing.assert_allclose(S @ S, A, atol=1e-12)

    def test_sqrt_rejects_negative(self):
        with pytest.raises(NegativeEigenvalue):
            hermitian_sqrt(np.diag([1.0, -0.5]))


class TestCubic:
    def test_positive_root_against_bisection(self, rng):
        # one sign change, so exactly one positive root and it is the largest
        for _ in range(200):
            a, b = rng.uniform(0.1, 5, 2)
            c = rng.uniform(0.5, 5)
            d = -rng.uniform(0.1, 5)
            coeffs = CubicCoefficients(a, b, c, d)
            q = cardano_real_root(coeffs)
            ref = bisect_root(coeffs, 0.0, 10.0)
            assert abs(q - ref) <= 1e-10 * max(1, abs(ref))

    def test_three_roots(self):
        # (x-1)(x-2)(x-3)
        c = CubicCoefficients(1.0, -6.0, 11.0, -6.0)
        assert c.discriminant < 0
        np.testing.assert_allclose(np.sort(cubic_real_roots(c)), [1, 2, 3], atol=1e-12)
        assert cardano_real_root(c) == pytest.approx(3.0)

    def test_double_root(self):
        # (x-1)^2 (x+2)
        roots = cubic_real_roots(CubicCoefficients(1.0, 0.0, -3.0, 2.0))
        for r in roots:
            assert min(abs(r - 1), abs(r + 2)) < 1e-6

    def test_array_matches_scalar(self, rng):
        a, b, c, d = rng.uniform(0.1, 2, (4, 50))
        d = -d
        out = cubic_real_roots_array(a, b, c, d)
        for i in range(50):
            assert out[i, 0] == cardano_real_root(CubicCoefficients(a[i], b[i], c[i], d[i]))

    def test_cancellation_regime(self):
        # tiny a, b: root close to -d/c; naive Cardano loses digits here
        c = CubicCoefficients(1e-12, 1e-6, 1.0, -1.0)
        q = cardano_real_root(c)
        assert c.residual(q) < 1e-12
        assert q == pytest.approx(bisect_root(c, 0.0, 2.0), rel=1e-12)

    def test_zero_leading_coefficient(self):
        with pytest.raises(DegenerateCubic):
            cardano_real_root(CubicCoefficients(0.0, 1.0, 1.0, 1.0))

    def test_auxiliaries(self):
        c = CubicCoefficients(2.0, 3.0, 4.0, 5.0)
        t = cardano_real_root(c) + 3.0 / 6.0
        assert t**3 + 3 * c.delta2 * t - 2 * c.delta1 == pytest.approx(0.0, abs=1e-12)


def marcum_quadrature(a, b):
    # exp(-(t^2+a^2)/2) I0(at) written with the scaled Bessel to avoid overflow
    f = lambda t: t * math.exp(-0.5 * (t - a) ** 2) * special.i0e(a * t)
    val, _ = integrate.quad(f, b, max(b, a) + 50, epsabs=1e-14, limit=400)
    return val


class TestMarcum:
    @pytest.mark.parametrize("a,b", [(0.5, 0.5), (1, 2), (2, 1), (3, 3), (5, 7), (10, 8), (0.1, 4), (25, 24)])
    def test_against_quadrature(self, a, b):
        assert marcum_q1(a, b) == pytest.approx(marcum_quadrature(a, b), abs=1e-10)

    @pytest.mark.parametrize("a,b", [(1, 1), (4, 2), (2, 6), (30, 31), (100, 98)])
    def test_against_noncentral_chi2(self, a, b):
        ref = stats.ncx2.sf(b * b, 2, a * a)
        assert marcum_q1(a, b) == pytest.approx(ref, rel=1e-8, abs=1e-14)

    def test_edges(self):
        assert marcum_q1(3.0, 0.0) == 1.0
        assert marcum_q1(0.0, 2.0) == pytest.approx(math.exp(-2.0))
        assert marcum_q1(2.0, math.inf) == 0.0
        with pytest.raises(ValueError):
            marcum_q1(-1.0, 1.0)

    def test_large_arguments_use_quadrature(self):
        a, b = 2e4, 2e4 + 1.0
        ref = stats.norm.sf(1.0)  # Gaussian limit of the Rice tail
        assert marcum_q1(a, b) == pytest.approx(ref, abs=1e-3)

    def test_monotone(self):
        bs = np.linspace(0, 10, 50)
        qs = [marcum_q1(3.0, b) for b in bs]
        assert np.all(np.diff(qs) <= 1e-15)


def test_steering_vector():
    v = steering_vector(30.0, 8)
    assert v[0] == 1
    np.testing.assert_allclose(np.abs(v), 1.0)
    np.testing.assert_allclose(v[1], np.exp(1j * np.pi * 0.5))
    with pytest.raises(ValueError):
        steering_vector(0.0, 0)
