"""Hybrid-signal GLRT, the pilot-only and data-only detectors, and the
affine large-``L`` surrogates of the GLRT statistic.

Two evaluation routes exist for the GLRT. :func:`glrt_statistic` works on
raw (dimensional) quantities through :func:`cubic_for_alpha`. The batch
route :func:`glrt_normalized` uses the dimensionless variables

    r = |lam_d_bar|^2 / |lam_p_bar|^2,
    g = |gamma|^2 / (|lam_p_bar|^2 beta),
    m = ||mu||^2 / beta,

in which the amplitude cubic becomes
``r^2 g x^3 + r g x^2 + (1 + r - r m) x - 1 = 0`` with
``Q = x / (|lam_p_bar|^2 beta)``, and the statistic becomes

    tau(x) = (r g m x^2 + 2 g x - g x^2) / (1 + r g x^2) - log(1 + r g x^2).

The asymptotic amplitude corresponds to ``x = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGamma, PilotFree
from .numerics import CubicCoefficients, cubic_real_roots_array
from .statistics import NullModel, SufficientStats
from .waveform import H1, ReceivedFrame, TransmitPlan

GAMMA_FLOOR = 1e-300
# below this leakage ratio the cubic is solved from its linear part; its other
# roots lie near -1/r, where the likelihood is hugely negative
NEAR_LINEAR = 1e-20


def _polish_linear(a, b, c, d, steps: int = 3):
    """Root near ``-d / c`` of a cubic whose quadratic and cubic terms are tiny."""
    x = -d / c
    for _ in range(steps):
        x = x - (((a * x + b) * x + c) * x + d) / ((3 * a * x + 2 * b) * x + c)
    return x


# --------------------------------------------------------------------------
# likelihood along alpha
# --------------------------------------------------------------------------

def log_likelihood_ratio(alpha, st: SufficientStats, m: NullModel):
    """``log Lambda`` as a function of a trial amplitude (vectorised in ``alpha``).

    ``[|a|^2 D ||mu||^2 + 2 Re(a gamma^*) - |a|^2 P beta] / (1 + |a|^2 D beta)
    - log(1 + |a|^2 D beta)`` with ``P, D`` the normalised pilot/data gains.
    """
    alpha = np.asarray(alpha)
    a2 = np.abs(alpha) ** 2
    P, D, beta = m.lambda_p_bar_sq, m.lambda_d_bar_sq, m.beta
    s = 1.0 + a2 * D * beta
    num = a2 * D * st.mu_norm_sq + 2.0 * np.real(alpha * np.conj(st.gamma)) - a2 * P * beta
    return num / s - np.log1p(a2 * D * beta)


def likelihood_gradient(alpha: complex, st: SufficientStats, m: NullModel) -> complex:
    """Wirtinger derivative ``d log Lambda / d alpha^*``."""
    a2 = abs(alpha) ** 2
    P, D, beta = m.lambda_p_bar_sq, m.lambda_d_bar_sq, m.beta
    s = 1.0 + a2 * D * beta
    # ||mu - alpha^* lambda_p^* beta J_p^T s_p^*||^2 expanded with |s_p| = 1
    resid = st.mu_norm_sq - 2.0 * beta * (np.conj(alpha) * st.gamma).real + a2 * beta**2 * P
    return complex(alpha * D * resid / s**2 + st.gamma / s - alpha * (P + D) * beta / s)


# --------------------------------------------------------------------------
# amplitude estimate
# --------------------------------------------------------------------------

def cubic_for_alpha(st: SufficientStats, m: NullModel) -> CubicCoefficients:
    """Coefficients of the real cubic whose root ``Q`` gives ``alpha_hat = Q gamma``."""
    G = st.gamma_abs_sq
    if G < GAMMA_FLOOR:
        raise DegenerateGamma(f"|gamma|^2 = {G:.3e}")
    P, D, beta = m.lambda_p_bar_sq, m.lambda_d_bar_sq, m.beta
    return CubicCoefficients(
        a=D**2 * G * beta**2,
        b=D * G * beta,
        c=(P + D) * beta - st.mu_norm_sq * D,
        d=-1.0,
    )


def _ray_likelihood(coeffs: CubicCoefficients, q):
    """``log Lambda(Q gamma)`` recovered from the cubic coefficients alone.

    With ``b = D G beta`` and ``a = b D beta``: ``G = b^2 / a`` and
    ``D ||mu||^2 - P beta = D beta - c``.
    """
    a, b, c = coeffs.a, coeffs.b, coeffs.c
    q = np.asarray(q, dtype=float)
    qb = q * q * b
    return (b * b / a) * (q * q * (a / b - c) + 2.0 * q) / (1.0 + qb) - np.log1p(qb)


def q_dagger(coeffs: CubicCoefficients) -> float:
    """Real root of the amplitude cubic that maximises the likelihood.

    When the data leakage vanishes (``a = b = 0``) the cubic is linear and
    ``Q = -d / c``.
    """
    if coeffs.a == 0:
        if coeffs.b != 0:
            raise ValueError("quadratic amplitude equation is not expected")
        return -coeffs.d / coeffs.c
    if coeffs.c > 0 and coeffs.a < NEAR_LINEAR * coeffs.b * coeffs.c:
        # a / (b c) is the leakage ratio in normalised units
        return float(_polish_linear(coeffs.a, coeffs.b, coeffs.c, coeffs.d))
    roots = cubic_real_roots_array(coeffs.a, coeffs.b, coeffs.c, coeffs.d)
    vals = np.where(np.isnan(roots), -np.inf, _ray_likelihood(coeffs, np.nan_to_num(roots)))
    return float(roots[int(np.argmax(vals))])


def q_dagger_asymptotic(m: NullModel, L: int | None = None) -> float:
    """Large-``L`` limit ``L / (|lam_p_bar|^2 beta_bar)``."""
    L = m.L if L is None else L
    if m.lambda_p_bar_sq == 0:
        raise PilotFree("no pilot energy toward the target")
    return L / (m.lambda_p_bar_sq * m.beta_bar)


@dataclass(frozen=True)
class GlrtOutput:
    statistic: float
    q_dagger: float
    alpha_hat: complex
    cubic_residual: float


def glrt_statistic(st: SufficientStats, m: NullModel, L: int | None = None) -> GlrtOutput:
    """GLRT statistic with the ML amplitude ``alpha_hat = Q gamma`` plugged in."""
    try:
        coeffs = cubic_for_alpha(st, m)
    except DegenerateGamma:
        return GlrtOutput(0.0, 0.0, 0j, 0.0)
    q = q_dagger(coeffs)
    alpha_hat = q * st.gamma
    tau = float(log_likelihood_ratio(alpha_hat, st, m))
    return GlrtOutput(tau, q, complex(alpha_hat), coeffs.residual(q))


def glrt_statistic_closed(st: SufficientStats, m: NullModel, q: float) -> float:
    """The same statistic written directly in ``Q`` and ``|gamma|^2``
    (pilot term carried as ``|lam_p_bar|^2 = L_p |lambda_p|^2``)."""
    G = st.gamma_abs_sq
    P, D, beta = m.lambda_p_bar_sq, m.lambda_d_bar_sq, m.beta
    s = 1.0 + q * q * D * G * beta
    return (q * q * D * G * st.mu_norm_sq + 2.0 * q * G - q * q * P * G * beta) / s - math.log(s)


# --------------------------------------------------------------------------
# batch route in normalised variables
# --------------------------------------------------------------------------

def tau_normalized(x, r, g, m):
    rgx2 = r * g * x * x
    return (rgx2 * m + 2.0 * g * x - g * x * x) / (1.0 + rgx2) - np.log1p(rgx2)


def glrt_normalized(r, g, m):
    """Vectorised GLRT. Returns ``(tau, x)`` where ``x = Q |lam_p_bar|^2 beta``.

    ``r`` may be a scalar or broadcast against ``g`` and ``m``.
    """
    r, g, m = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r, g, m)))
    x = np.ones(g.shape)
    tau = np.zeros(g.shape)
    c = 1.0 + r - r * m

    linear = (r == 0) & (g > 0)
    x[linear] = 1.0 / c[linear]

    tiny = (r > 0) & (r < NEAR_LINEAR) & (c > 0) & (g > GAMMA_FLOOR)
    if np.any(tiny):
        rt, gt = r[tiny], g[tiny]
        x[tiny] = _polish_linear(rt * rt * gt, rt * gt, c[tiny], -1.0)
    linear |= tiny

    cubic = (r > 0) & (g > GAMMA_FLOOR) & ~tiny
    if np.any(cubic):
        rr, gg, mm, cc = r[cubic], g[cubic], m[cubic], c[cubic]
        roots = cubic_real_roots_array(rr * rr * gg, rr * gg, cc, -np.ones_like(cc))
        vals = tau_normalized(np.nan_to_num(roots), rr[:, None], gg[:, None], mm[:, None])
        vals = np.where(np.isnan(roots), -np.inf, vals)
        x[cubic] = roots[np.arange(len(roots)), np.argmax(vals, axis=1)]

    live = linear | cubic
    tau[live] = tau_normalized(x[live], r[live], g[live], m[live])
    x[~live] = 0.0
    return tau, x


# --------------------------------------------------------------------------
# asymptotic surrogates
# --------------------------------------------------------------------------

def zeta_h0(ratio: float, L: int) -> float:
    y = ratio / L
    return y - math.log1p(y)


def zeta_h1(ratio: float, L: int, pilot_snr: float) -> float:
    """Offset of the H1 surrogate; ``pilot_snr = |alpha|^2 |lam_p_bar|^2 beta_bar``."""
    y = (1.0 + pilot_snr) * ratio / L
    return y - math.log1p(y)


def asymptotic_statistic(st: SufficientStats, m: NullModel, L: int | None = None,
                         hypothesis: str = "H0", alpha: complex | None = None) -> float:
    """Affine surrogate ``rho |gamma|^2 + zeta`` of the GLRT statistic."""
    L = m.L if L is None else L
    rho = L / (m.lambda_p_bar_sq * m.beta_bar)
    ratio = m.lambda_d_bar_sq / m.lambda_p_bar_sq
    if hypothesis == H1:
        if alpha is None:
            raise ValueError("H1 surrogate needs alpha")
        zeta = zeta_h1(ratio, L, abs(alpha) ** 2 * m.lambda_p_bar_sq * m.beta_bar)
    else:
        zeta = zeta_h0(ratio, L)
    return rho * st.gamma_abs_sq + zeta


# --------------------------------------------------------------------------
# reference detectors
# --------------------------------------------------------------------------

def _frame(y) -> np.ndarray:
    return y.y if isinstance(y, ReceivedFrame) else np.asarray(y)


def pilot_only_statistic(y, m: NullModel, plan: TransmitPlan) -> float:
    """``|a^H Sigma_p^{-1} (Y - U) J_p^T s_p^*|^2 / (L a^H Sigma_p^{-1} a)``.

    ``m`` should be the pilot-only model (``Sigma_p = L sigma^2 I``).
    """
    Y = _frame(y)
    proj = np.vdot(m.w, (Y - m.u) @ plan.pilot_filter)
    return float(abs(proj) ** 2 / (m.L * m.beta))


def data_only_ratio(y, m: NullModel) -> float:
    Y = _frame(y)
    v = Y.conj().T @ m.w
    return float(np.vdot(v, v).real / m.beta)


def data_only_statistic(y, m: NullModel) -> float:
    """``r - 1 - log r`` with ``r = ||Y^H Sigma_d^{-1} a||^2 / (a^H Sigma_d^{-1} a)``.

    ``m`` should be the data-only model (``Sigma_d = L H_e F_d F_d^H H_e^H + L sigma^2 I``).
    """
    r = data_only_ratio(y, m)
    return float(r - 1.0 - math.log(r))


@dataclass(frozen=True)
class Decision:
    statistic: float
    log_threshold: float

    @property
    def detected(self) -> bool:
        return self.statistic > self.log_threshold


def decide(statistic: float, log_threshold: float) -> Decision:
    return Decision(float(statistic), float(log_threshold))
