"""Batched, reproducible trial engine.

Trials are grouped into fixed-size blocks. A block's random stream is
derived from ``(master_seed, label, first trial index)`` and the block
size depends only on the frame dimensions, so results do not depend on
how many worker threads run the blocks or in what order they finish.

Within a block every trial gets its own clutter draw (unless a fixed
channel is supplied), its own null model and its own frame. Only the
projections ``(Y - U)^H w`` onto three whitening vectors are formed:

* ``w   = Sigma^{-1} a_t``   (hybrid GLRT)
* ``w_p = a_t / (L sigma^2)`` (pilot-only receiver)
* ``w_d = Sigma_d^{-1} a_t`` (data-only receiver)

In the Gaussian mode ``Y - U = dU + C Z`` with ``C C^H`` the frame
covariance, so ``(Y - U)^H w = dU^H w + Z^H (C^H w)``.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..config import SystemConfig
from ..detectors import glrt_normalized
from ..errors import ExperimentError
from ..scenario import draw_clutter, target_steering
from ..waveform import H0, H1, TransmitPlan, build_frame_plan, complex_normal, data_precoder

MODES = ("statistical", "physical")
_BLOCK_ELEMENTS = 2**21


def derive_trial_stream(master_seed: int, experiment_id: str, trial_index: int) -> np.random.Generator:
    """Stream seeded by a SHA-256 of the triple, so it depends only on the
    counter values and never on execution order."""
    blob = f"{int(master_seed)}\x1f{experiment_id}\x1f{int(trial_index)}".encode()
    key = int.from_bytes(hashlib.sha256(blob).digest()[:16], "little")
    return np.random.Generator(np.random.SFC64(key))


def block_size_for(cfg: SystemConfig) -> int:
    return int(max(1, min(4096, _BLOCK_ELEMENTS // (cfg.n_rx * cfg.L))))


def experiment_plan(cfg: SystemConfig, master_seed: int = 0) -> TransmitPlan:
    """Transmit plan shared by every trial of an experiment."""
    _, b_t = target_steering(cfg)
    frame = build_frame_plan(cfg.L, cfg.L_p, cfg.pilot_pattern)
    f_p = math.sqrt(cfg.pilot_power / (cfg.L_p * cfg.n_tx)) * b_t
    if cfg.pilot_symbols == "ones":
        s_p = np.ones(cfg.L_p, dtype=complex)
    else:
        rng = derive_trial_stream(master_seed, "pilot-symbols", 0)
        s_p = np.exp(2j * np.pi * rng.uniform(size=cfg.L_p))
    return TransmitPlan(f_p=f_p, s_p=s_p, f_d=data_precoder(cfg), frame=frame)


@dataclass(frozen=True)
class Ensemble:
    """Immutable description of one batch of trials."""

    cfg: SystemConfig
    hypothesis: str = H0
    mode: str = "statistical"
    label: str = "default"
    master_seed: int = 0
    fixed_clutter: np.ndarray | None = None


def _alpha(ens: Ensemble, P: float, beta_bar: np.ndarray) -> np.ndarray:
    cfg = ens.cfg
    if ens.hypothesis != H1:
        return np.zeros(beta_bar.shape, dtype=complex)
    phase = complex(math.cos(math.radians(cfg.alpha_phase_deg)),
                    math.sin(math.radians(cfg.alpha_phase_deg)))
    if cfg.target_snr_db is not None:
        return np.sqrt(10 ** (cfg.target_snr_db / 10) / (P * beta_bar)) * phase
    return np.full(beta_bar.shape, cfg.alpha, dtype=complex)


def run_block(ens: Ensemble, plan: TransmitPlan, rng: np.random.Generator, n: int) -> dict[str, np.ndarray]:
    cfg = ens.cfg
    M, N, L = cfg.n_rx, cfg.n_tx, cfg.L
    sigma2 = cfg.noise_power
    a_t, b_t = target_steering(cfg)
    frame = plan.frame
    prow = frame.assemble(plan.s_p, np.zeros(frame.n_data, dtype=complex))
    pfilt = plan.pilot_filter

    if ens.fixed_clutter is None:
        h = draw_clutter(cfg, rng, n).h_e
    else:
        h = np.broadcast_to(ens.fixed_clutter, (n, M, N))

    hf = h @ plan.f_d
    hfht = hf @ np.conj(np.swapaxes(hf, 1, 2))
    eye = np.eye(M)
    sigma = frame.n_data * hfht + L * sigma2 * eye
    sigma_d = L * hfht + L * sigma2 * eye
    rhs = np.broadcast_to(a_t[:, None], (n, M, 1))
    w = np.linalg.solve(sigma, rhs)[..., 0]
    w_d = np.linalg.solve(sigma_d, rhs)[..., 0]
    w_p = np.broadcast_to(a_t / (L * sigma2), (n, M))
    beta = np.einsum("m,nm->n", a_t.conj(), w).real
    beta_d = np.einsum("m,nm->n", a_t.conj(), w_d).real
    beta_p = M / (L * sigma2)

    lam_p = complex(np.vdot(b_t, plan.f_p))
    P = frame.n_pilot * abs(lam_p) ** 2
    fd_b = plan.f_d.conj().T @ b_t
    D = frame.n_data * float(np.vdot(fd_b, fd_b).real)
    alpha = _alpha(ens, P, L * beta)
    W = np.stack([w, w_p, w_d], axis=-1)  # (n, M, 3)

    if ens.mode == "statistical":
        cov = sigma / L + (np.abs(alpha) ** 2 * D / L)[:, None, None] * np.outer(a_t, a_t.conj())
        C = np.linalg.cholesky(cov)
        V = np.conj(np.swapaxes(C, 1, 2)) @ W
        Z = complex_normal(rng, (n, M, L))
        R = np.conj(np.swapaxes(Z, 1, 2)) @ V  # (n, L, 3)
        aw = np.einsum("m,nmk->nk", a_t.conj(), W)
        R = R + np.conj(alpha * lam_p)[:, None, None] * np.conj(prow)[None, :, None] * aw[:, None, :]
    elif ens.mode == "physical":
        s_d = complex_normal(rng, (n, N, frame.n_data))
        noise = complex_normal(rng, (n, M, L), sigma2)
        R = np.conj(np.swapaxes(noise, 1, 2)) @ W
        # clutter echo of the payload
        cd = np.conj(np.swapaxes(hf, 1, 2)) @ W  # (n, N, 3)
        R[:, frame.data_positions, :] += np.conj(np.swapaxes(s_d, 1, 2)) @ cd
        if ens.hypothesis == H1:
            # target echo alpha a_t b_t^H X
            aw = np.einsum("m,nmk->nk", a_t.conj(), W)
            xb = np.empty((n, L), dtype=complex)
            xb[:, frame.pilot_positions] = np.conj(plan.s_p) * np.vdot(plan.f_p, b_t)
            xb[:, frame.data_positions] = np.conj(np.swapaxes(s_d, 1, 2)) @ fd_b
            R += np.conj(alpha)[:, None, None] * xb[:, :, None] * aw[:, None, :]
    else:
        raise ExperimentError(f"unknown generation mode {ens.mode!r}")

    mu = R[..., 0]
    mu_norm_sq = np.sum(np.abs(mu) ** 2, axis=1)
    gamma = np.conj(lam_p) * (np.conj(mu) @ pfilt)
    G = np.abs(gamma) ** 2
    ratio = D / P
    g = G / (P * beta)
    m = mu_norm_sq / beta
    tau, x = glrt_normalized(ratio, g, m)

    pilot_proj = np.conj(R[..., 1]) @ pfilt
    tau_pilot = np.abs(pilot_proj) ** 2 / (L * beta_p)

    u_wd = np.einsum("nm,nm->n", np.conj(h @ plan.f_p), w_d)
    yw = R[..., 2] + np.conj(prow)[None, :] * u_wd[:, None]
    r_d = np.sum(np.abs(yw) ** 2, axis=1) / beta_d
    tau_data = r_d - 1.0 - np.log(r_d)

    return {
        "tau": tau,
        "x": x,
        "g": g,
        "m": m,
        "gamma_abs_sq": G,
        "mu_norm_sq": mu_norm_sq,
        "beta_bar": L * beta,
        "pilot_snr": np.abs(alpha) ** 2 * P * L * beta,
        "tau_pilot": tau_pilot,
        "tau_data": tau_data,
    }


@dataclass(frozen=True)
class Constants:
    """Per-experiment scalars that do not depend on the clutter draw."""

    L: int
    P: float
    D: float

    @property
    def ratio(self) -> float:
        return self.D / self.P


def constants(cfg: SystemConfig, plan: TransmitPlan) -> Constants:
    _, b_t = target_steering(cfg)
    lam_p = complex(np.vdot(b_t, plan.f_p))
    fd_b = plan.f_d.conj().T @ b_t
    return Constants(cfg.L, plan.frame.n_pilot * abs(lam_p) ** 2,
                     plan.frame.n_data * float(np.vdot(fd_b, fd_b).real))


def simulate(ens: Ensemble, trials: int, *, threads: int = 1,
             block_size: int | None = None) -> dict[str, np.ndarray]:
    """Run ``trials`` trials of an ensemble; output is ordered by trial index."""
    if trials < 1:
        raise ExperimentError("trials must be >= 1")
    if ens.mode not in MODES:
        raise ExperimentError(f"unknown generation mode {ens.mode!r}")
    plan = experiment_plan(ens.cfg, ens.master_seed)
    bs = block_size or block_size_for(ens.cfg)
    starts = list(range(0, trials, bs))

    def work(start: int) -> dict[str, np.ndarray]:
        rng = derive_trial_stream(ens.master_seed, ens.label, start)
        return run_block(ens, plan, rng, min(bs, trials - start))

    if threads <= 1 or len(starts) == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
