"""Channel realisations: clutter paths, the target steering pair and its gain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig, dbm_to_watts
from .numerics import steering_vector

__all__ = [
    "ClutterBatch",
    "Scenario",
    "dbm_to_watts",
    "draw_clutter",
    "generate_scenario",
    "path_loss_db",
    "snr_like_summary",
]


def path_loss_db(distance_m: float, cfg: SystemConfig, shadow: float = 0.0) -> float:
    """Log-distance path loss ``a + 10 b log10(d) + shadow`` in dB."""
    if np.any(np.asarray(distance_m) <= 0):
        raise ValueError("distance must be positive")
    return cfg.pathloss_a + 10.0 * cfg.pathloss_b * np.log10(distance_m) + shadow


def ula_matrix(angles_deg: np.ndarray, n: int) -> np.ndarray:
    """Steering vectors for an array of angles, stacked on the last axis."""
    k = np.arange(n)
    return np.exp(1j * np.pi * np.sin(np.deg2rad(angles_deg))[..., None] * k)


@dataclass(frozen=True)
class ClutterBatch:
    """``size`` independent clutter channels.

    ``gains``, ``aoa_deg`` and ``aod_deg`` have shape ``(size, n_paths)``;
    ``h_e`` has shape ``(size, M, N)``.
    """

    gains: np.ndarray
    aoa_deg: np.ndarray
    aod_deg: np.ndarray
    h_e: np.ndarray

    def __len__(self) -> int:
        return self.h_e.shape[0]


def draw_clutter(
    cfg: SystemConfig,
    rng: np.random.Generator,
    size: int,
    *,
    n_paths: int | None = None,
    shadowing: bool = True,
) -> ClutterBatch:
    """Draw ``size`` clutter channels ``H_e = sum_n eps_n a_n b_n^H``.

    Each path gets its own AoD/AoA (uniform over the configured ranges)
    and its own log-normal shadowing draw; ``eps_n`` is circular complex
    Gaussian with variance ``10^(-0.1 * pathloss)``.
    """
    P = cfg.n_paths if n_paths is None else n_paths
    M, N = cfg.n_rx, cfg.n_tx
    if P == 0:
        empty = np.zeros((size, 0))
        return ClutterBatch(empty, empty, empty, np.zeros((size, M, N), dtype=complex))
    aod = rng.uniform(*cfg.clutter_aod_range_deg, size=(size, P))
    aoa = rng.uniform(*cfg.clutter_aoa_range_deg, size=(size, P))
    shadow = rng.normal(0.0, cfg.shadow_sigma_db, size=(size, P))
    if not shadowing:
        shadow = np.zeros_like(shadow)
    var = 10.0 ** (-0.1 * path_loss_db(cfg.tx_rx_distance_m, cfg, shadow))
    z = rng.standard_normal((size, P, 2))
    gains = np.sqrt(var / 2) * (z[..., 0] + 1j * z[..., 1])
    a = ula_matrix(aoa, M)  # (size, P, M)
    b = ula_matrix(aod, N)  # (size, P, N)
    h_e = np.einsum("sp,spm,spn->smn", gains, a, b.conj())
    return ClutterBatch(gains, aoa, aod, h_e)


@dataclass(frozen=True)
class Scenario:
    """One channel realisation."""

    h_e: np.ndarray
    a_t: np.ndarray
    b_t: np.ndarray
    alpha: complex
    path_gains: np.ndarray
    path_aoa_deg: np.ndarray
    path_aod_deg: np.ndarray

    @property
    def clutter_paths(self) -> list[tuple[complex, float, float]]:
        return list(zip(self.path_gains.tolist(), self.path_aoa_deg.tolist(),
                        self.path_aod_deg.tolist()))

    def rebuild_clutter(self) -> np.ndarray:
        M, N = self.h_e.shape
        if len(self.path_gains) == 0:
            return np.zeros((M, N), dtype=complex)
        a = ula_matrix(self.path_aoa_deg, M)
        b = ula_matrix(self.path_aod_deg, N)
        return np.einsum("p,pm,pn->mn", self.path_gains, a, b.conj())

    def with_alpha(self, alpha: complex) -> "Scenario":
        return Scenario(self.h_e, self.a_t, self.b_t, complex(alpha), self.path_gains,
                        self.path_aoa_deg, self.path_aod_deg)


def target_steering(cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """Receive (``a_t``, length M) and transmit (``b_t``, length N) responses of the target."""
    return (steering_vector(cfg.target_aoa_deg, cfg.n_rx),
            steering_vector(cfg.target_aod_deg, cfg.n_tx))


def scenario_from_clutter(cfg: SystemConfig, batch: ClutterBatch, index: int = 0) -> Scenario:
    a_t, b_t = target_steering(cfg)
    return Scenario(
        h_e=batch.h_e[index].copy(),
        a_t=a_t,
        b_t=b_t,
        alpha=cfg.alpha,
        path_gains=batch.gains[index].copy(),
        path_aoa_deg=batch.aoa_deg[index].copy(),
        path_aod_deg=batch.aod_deg[index].copy(),
    )


def generate_scenario(cfg: SystemConfig, rng: np.random.Generator, *,
                      n_paths: int | None = None) -> Scenario:
    """Draw one scenario; ``alpha`` comes straight from the config."""
    return scenario_from_clutter(cfg, draw_clutter(cfg, rng, 1, n_paths=n_paths))


def snr_like_summary(s: Scenario, cfg: SystemConfig) -> dict[str, float]:
    """Gain-only diagnostics for experiment logs (unit transmit power)."""
    sigma2 = cfg.noise_power
    fro = float(np.linalg.norm(s.h_e))
    target = abs(s.alpha) ** 2 * float(np.vdot(s.a_t, s.a_t).real) \
        * float(np.vdot(s.b_t, s.b_t).real) / sigma2
    return {
        "clutter_fro": fro,
        "target_to_noise": target,
        "clutter_to_noise": fro**2 / sigma2,
        "clutter_to_noise_db": 10 * math.log10(fro**2 / sigma2) if fro > 0 else -math.inf,
    }
