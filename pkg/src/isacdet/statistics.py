"""Null-hypothesis model and per-frame sufficient statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .numerics import solve_hermitian
from .scenario import Scenario
from .waveform import ReceivedFrame, TransmitPlan


@dataclass(frozen=True)
class NullModel:
    """Mean ``U`` and covariance ``Sigma`` of a frame under H0 plus the
    target-direction scalars every detector and formula uses.

    ``w = Sigma^{-1} a_t`` is cached so sufficient statistics need no
    further solves.
    """

    u: np.ndarray
    sigma: np.ndarray
    sigma_bar: np.ndarray
    beta: float
    beta_bar: float
    lambda_p: complex
    lambda_p_bar_sq: float
    lambda_d_bar_sq: float
    w: np.ndarray
    a_t: np.ndarray
    plan: TransmitPlan

    @property
    def L(self) -> int:
        return self.u.shape[1]

    @property
    def power_ratio(self) -> float:
        """``|lam_d_bar|^2 / |lam_p_bar|^2``, the data-to-pilot leakage ratio."""
        return self.lambda_d_bar_sq / self.lambda_p_bar_sq

    def as_row(self) -> dict[str, float]:
        return {
            "beta": self.beta,
            "beta_bar": self.beta_bar,
            "lambda_p_abs": abs(self.lambda_p),
            "lambda_p_bar_sq": self.lambda_p_bar_sq,
            "lambda_d_bar_sq": self.lambda_d_bar_sq,
            "power_ratio": self.power_ratio,
        }


def _model_from_sigma(s: Scenario, plan: TransmitPlan, sigma: np.ndarray,
                      u: np.ndarray) -> NullModel:
    L = plan.frame.length
    w = solve_hermitian(sigma, s.a_t)
    beta = float(np.vdot(s.a_t, w).real)
    lam_p = complex(np.vdot(s.b_t, plan.f_p))
    fd_b = plan.f_d.conj().T @ s.b_t
    return NullModel(
        u=u,
        sigma=sigma,
        sigma_bar=sigma / L,
        beta=beta,
        beta_bar=L * beta,
        lambda_p=lam_p,
        lambda_p_bar_sq=plan.frame.n_pilot * abs(lam_p) ** 2,
        lambda_d_bar_sq=plan.frame.n_data * float(np.vdot(fd_b, fd_b).real),
        w=w,
        a_t=s.a_t,
        plan=plan,
    )


def mean_under_h0(s: Scenario, plan: TransmitPlan) -> np.ndarray:
    """``U = H_e f_p s_p^T J_p``."""
    row = plan.frame.assemble(plan.s_p, np.zeros(plan.frame.n_data, dtype=complex))
    return np.outer(s.h_e @ plan.f_p, row)


def build_null_model(s: Scenario, plan: TransmitPlan, cfg: SystemConfig) -> NullModel:
    """``Sigma = L_d H_e F_d F_d^H H_e^H + L sigma^2 I`` and derived scalars."""
    L, L_d = plan.frame.length, plan.frame.n_data
    hf = s.h_e @ plan.f_d
    sigma = L_d * (hf @ hf.conj().T) + L * cfg.noise_power * np.eye(s.h_e.shape[0])
    return _model_from_sigma(s, plan, sigma, mean_under_h0(s, plan))


def pilot_only_model(s: Scenario, plan: TransmitPlan, cfg: SystemConfig) -> NullModel:
    """Model a pilot-only receiver assumes: ``Sigma_p = L sigma^2 I``."""
    L = plan.frame.length
    sigma = L * cfg.noise_power * np.eye(s.h_e.shape[0])
    return _model_from_sigma(s, plan, sigma, mean_under_h0(s, plan))


def data_only_model(s: Scenario, plan: TransmitPlan, cfg: SystemConfig) -> NullModel:
    """Model a data-only receiver assumes: ``Sigma_d = L H_e F_d F_d^H H_e^H + L sigma^2 I``."""
    L = plan.frame.length
    hf = s.h_e @ plan.f_d
    sigma = L * (hf @ hf.conj().T) + L * cfg.noise_power * np.eye(s.h_e.shape[0])
    return _model_from_sigma(s, plan, sigma, np.zeros_like(mean_under_h0(s, plan)))


@dataclass(frozen=True)
class SufficientStats:
    mu: np.ndarray
    mu_norm_sq: float
    gamma: complex

    @property
    def gamma_abs_sq(self) -> float:
        return abs(self.gamma) ** 2


def gamma_from_mu(mu: np.ndarray, m: NullModel, plan: TransmitPlan) -> complex:
    """``gamma = lambda_p^* mu^H J_p^T s_p^*``."""
    return complex(m.lambda_p.conjugate() * np.vdot(mu, plan.pilot_filter))


def sufficient_stats(y: ReceivedFrame | np.ndarray, m: NullModel,
                     plan: TransmitPlan) -> SufficientStats:
    Y = y.y if isinstance(y, ReceivedFrame) else np.asarray(y)
    mu = (Y - m.u).conj().T @ m.w
    return SufficientStats(mu=mu, mu_norm_sq=float(np.vdot(mu, mu).real),
                           gamma=gamma_from_mu(mu, m, plan))


def sherman_morrison_gain(m: NullModel, alpha: complex) -> np.ndarray:
    """``(Sigma + |alpha|^2 |lam_d_bar|^2 a_t a_t^H)^{-1} a_t`` via the rank-one update."""
    return m.w / (1.0 + abs(alpha) ** 2 * m.lambda_d_bar_sq * m.beta)


def alpha_for_snr(m: NullModel, snr_db: float, phase_deg: float = 0.0) -> complex:
    """Amplitude with ``|alpha|^2 |lam_p_bar|^2 beta_bar = 10^(snr_db/10)``."""
    mag = math.sqrt(10 ** (snr_db / 10) / (m.lambda_p_bar_sq * m.beta_bar))
    return mag * complex(math.cos(math.radians(phase_deg)), math.sin(math.radians(phase_deg)))


# --------------------------------------------------------------------------
# closed-form moments
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Moments:
    """Mean/variance of ``||mu||^2 / beta`` and of ``|gamma|^2``."""

    mu_mean: float
    mu_var: float
    gamma_mean: float
    gamma_var: float
    kappa: float = 1.0


def moments_h0(m: NullModel, L: int | None = None) -> Moments:
    L = m.L if L is None else L
    g = m.lambda_p_bar_sq * m.beta_bar / L**2
    return Moments(mu_mean=1.0, mu_var=1.0 / L, gamma_mean=g, gamma_var=g * g)


def moments_h1(m: NullModel, alpha: complex, L: int | None = None) -> Moments:
    L = m.L if L is None else L
    a2 = abs(alpha) ** 2
    P, D, bb = m.lambda_p_bar_sq, m.lambda_d_bar_sq, m.beta_bar
    kappa = 1.0 + a2 * D * bb / L
    return Moments(
        mu_mean=1.0 + a2 * (P + D) * bb / L,
        mu_var=(kappa**2 + 2.0 * kappa * a2 * P * bb / L) / L,
        gamma_mean=(kappa * P * bb + a2 * P**2 * bb**2) / L**2,
        gamma_var=(kappa**2 * P**2 * bb**2 + 2.0 * kappa * a2 * P**3 * bb**3) / L**4,
        kappa=kappa,
    )
