"""Small numerical kernels: Hermitian solves, matrix square roots, cubic
roots, the first-order Marcum Q function and ULA steering vectors.

Every kernel here is pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg
import scipy.special

from .errors import DegenerateCubic, NegativeEigenvalue, NotPositiveDefinite

__all__ = [
    "CubicCoefficients",
    "cardano_real_root",
    "cubic_real_roots",
    "cubic_real_roots_array",
    "hermitian_sqrt",
    "marcum_q1",
    "solve_hermitian",
    "steering_vector",
]


# --------------------------------------------------------------------------
# Hermitian linear algebra
# --------------------------------------------------------------------------

def solve_hermitian(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Solve ``A x = v`` for Hermitian positive-definite ``A`` via Cholesky.

    ``v`` may be a vector or a matrix of right-hand sides.
    """
    A = np.asarray(A, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if v.shape[0] != A.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} vs {v.shape}")
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    return scipy.linalg.cho_solve(factor, v)


def hermitian_sqrt(A: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Hermitian PSD square root ``S`` with ``S @ S.conj().T == A``.

    Eigenvalues in ``[-tol * max(1, |lambda|_max), 0)`` are treated as
    round-off and clipped to zero; anything more negative raises
    :class:`NegativeEigenvalue`.
    """
    A = np.asarray(A, dtype=complex)
    H = 0.5 * (A + A.conj().T)
    w, V = np.linalg.eigh(H)
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    if w.size and w.min() < -tol * scale:
        raise NegativeEigenvalue(f"min eigenvalue {w.min():.3e} < 0")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.conj().T


# --------------------------------------------------------------------------
# Cubic equations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CubicCoefficients:
    """Real cubic ``a Q^3 + b Q^2 + c Q + d = 0``.

    ``delta1`` and ``delta2`` are the Cardano auxiliaries; the depressed
    cubic in ``t = Q + b/(3a)`` reads ``t^3 + 3 delta2 t - 2 delta1 = 0``.
    """

    a: float
    b: float
    c: float
    d: float

    @property
    def delta1(self) -> float:
        a, b, c, d = self.a, self.b, self.c, self.d
        return b * c / (6 * a**2) - b**3 / (27 * a**3) - d / (2 * a)

    @property
    def delta2(self) -> float:
        a, b, c = self.a, self.b, self.c
        return c / (3 * a) - b**2 / (9 * a**2)

    @property
    def discriminant(self) -> float:
        """``delta1**2 + delta2**3``; negative means three real roots."""
        return self.delta1**2 + self.delta2**3

    def __call__(self, q):
        return ((self.a * q + self.b) * q + self.c) * q + self.d

    def residual(self, q: float) -> float:
        return abs(self(q))


def _newton_polish(p, x, iterations=3):
    """Newton steps on the monic cubic ``p = (A, B, C)``; keeps improvements only."""
    A, B, C = p
    for _ in range(iterations):
        f = ((x + A) * x + B) * x + C
        fp = (3 * x + 2 * A) * x + B
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(fp != 0, f / fp, 0.0)
        cand = x - step
        fc = ((cand + A) * cand + B) * cand + C
        better = np.isfinite(cand) & (np.abs(fc) <= np.abs(f))
        x = np.where(better, cand, x)
    return x


def cubic_real_roots_array(a, b, c, d) -> np.ndarray:
    """Vectorised real roots of ``a x^3 + b x^2 + c x + d``.

    Returns an array of shape ``(..., 3)``. Column 0 is always the root the
    Cardano expression yields with principal cube roots (the single real
    root when the discriminant is non-negative, the largest of three
    otherwise). Columns 1 and 2 hold the remaining real roots when there
    are three, and NaN otherwise. All roots are Newton-polished.
    """
    a, b, c, d = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a, b, c, d)))
    if np.any(a == 0):
        raise DegenerateCubic("leading coefficient is zero")
    A, B, C = b / a, c / a, d / a
    delta2 = B / 3 - A**2 / 9
    delta1 = A * B / 6 - A**3 / 27 - C / 2
    disc = delta1**2 + delta2**3
    shift = -A / 3

    out = np.full(a.shape + (3,), np.nan)

    one = disc >= 0
    if np.any(one):
        d1, d2, s = delta1[one], delta2[one], np.sqrt(disc[one])
        # larger-magnitude branch first, then u*v = -delta2 avoids cancellation
        u = np.cbrt(d1 + np.copysign(s, d1))
        with np.errstate(divide="ignore", invalid="ignore"):
            v = np.where(u != 0, -d2 / u, 0.0)
        out[one, 0] = u + v + shift[one]

    three = ~one
    if np.any(three):
        d1, d2 = delta1[three], delta2[three]
        r = np.sqrt(-d2)
        theta = np.arccos(np.clip(d1 / r**3, -1.0, 1.0))
        for k in range(3):
            out[three, k] = 2 * r * np.cos((theta - 2 * np.pi * k) / 3) + shift[three]

    coeffs = (A[..., None], B[..., None], C[..., None])
    return _newton_polish(coeffs, out)


def cubic_real_roots(coeffs: CubicCoefficients) -> np.ndarray:
    """All real roots of the cubic, principal Cardano root first."""
    roots = cubic_real_roots_array(coeffs.a, coeffs.b, coeffs.c, coeffs.d)
    return roots[~np.isnan(roots)]


def cardano_real_root(coeffs: CubicCoefficients) -> float:
    """The Cardano root ``-b/3a + cbrt(D1 + sqrt(D1^2 + D2^3)) + cbrt(D1 - ...)``.

    With three real roots this is the trigonometric form of the same
    expression under principal cube roots, i.e. the largest real root.
    Raises :class:`DegenerateCubic` when ``a == 0``.
    """
    if coeffs.a == 0:
        raise DegenerateCubic("leading coefficient is zero")
    return float(cubic_real_roots_array(coeffs.a, coeffs.b, coeffs.c, coeffs.d)[0])


# --------------------------------------------------------------------------
# Marcum Q
# --------------------------------------------------------------------------

_SERIES_TOL = 1e-14
_SERIES_CHUNK = 64
_QUAD_SWITCH = 1e8  # a*b beyond which the Bessel series gets too long


def _marcum_series(a: float, b: float) -> float:
    x = a * b
    lead = math.exp(-0.5 * (a - b) ** 2)
    if a < b:
        ratio, start, sign, base = a / b, 0, 1.0, 0.0
    else:
        ratio, start, sign, base = b / a, 1, -1.0, 1.0
    total = 0.0
    k0 = start
    log_ratio = math.log(ratio) if ratio > 0 else -math.inf
    while True:
        k = np.arange(k0, k0 + _SERIES_CHUNK, dtype=float)
        with np.errstate(under="ignore"):
            terms = np.exp(k * log_ratio) * scipy.special.ive(k, x) * lead
        total += float(terms.sum())
        last = float(terms[-1])
        prev = float(terms[-2])
        k0 += _SERIES_CHUNK
        # terms decrease monotonically; bound the tail geometrically
        rho = last / prev if prev > 0 else 0.0
        tail = last * rho / (1.0 - rho) if rho < 1.0 else math.inf
        if last < _SERIES_TOL and tail < _SERIES_TOL:
            break
        if k0 > 200_000:  # pragma: no cover - guarded by _QUAD_SWITCH
            break
    return base + sign * total


def _marcum_quad(a: float, b: float) -> float:
    def integrand(t):
        return t * math.exp(-0.5 * (t - a) ** 2) * scipy.special.i0e(a * t)

    lo = max(0.0, a - 40.0)
    hi = a + 40.0
    if b <= lo:
        return 1.0
    if b >= hi:
        return 0.0
    # integrate the shorter side for accuracy
    if b >= a:
        val, _ = scipy.integrate.quad(integrand, b, hi, epsabs=1e-13, limit=200)
        return val
    val, _ = scipy.integrate.quad(integrand, lo, b, epsabs=1e-13, limit=200)
    return 1.0 - val


def marcum_q1(a: float, b: float) -> float:
    """First-order Marcum Q function ``Q_1(a, b)``.

    Uses the modified-Bessel series (terms truncated once below 1e-14),
    with a quadrature fallback for very large ``a * b``. The result is
    clamped to ``[0, 1]``.
    """
    a = float(a)
    b = float(b)
    if a < 0 or b < 0 or math.isnan(a) or math.isnan(b):
        raise ValueError(f"Marcum Q needs non-negative arguments, got ({a}, {b})")
    if b == 0.0:
        return 1.0
    if math.isinf(b):
        return 0.0
    if a == 0.0:
        return math.exp(-0.5 * b * b)
    if math.isinf(a):
        return 1.0
    if a * b > _QUAD_SWITCH:
        q = _marcum_quad(a, b)
    else:
        q = _marcum_series(a, b)
    return min(1.0, max(0.0, q))


# --------------------------------------------------------------------------
# Array response
# --------------------------------------------------------------------------

def steering_vector(angle_deg: float, n: int) -> np.ndarray:
    """Half-wavelength ULA response ``exp(j pi k sin(angle))``, ``k = 0..n-1``."""
    if n < 1:
        raise ValueError("element count must be >= 1")
    k = np.arange(n)
    return np.exp(1j * np.pi * k * np.sin(np.deg2rad(angle_deg)))
