"""Hybrid transmit frame and received-signal synthesis.

A frame of ``L`` samples carries ``L_p`` known pilots and ``L_d`` random
data symbols, interleaved by a permutation. Received frames are ``M x L``.
Two generators are provided: the physical one that pushes actual symbols
through the channel, and the Gaussian one the detector is derived under
(``Y = U + Sigma_bar^(1/2) Z``).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .config import SystemConfig
from .errors import FormatError, InvalidSplit
from .numerics import hermitian_sqrt, steering_vector
from .scenario import Scenario

if TYPE_CHECKING:  # pragma: no cover
    from .statistics import NullModel

H0 = "H0"
H1 = "H1"


@dataclass(frozen=True)
class FramePlan:
    length: int
    pilot_positions: np.ndarray
    data_positions: np.ndarray

    @property
    def n_pilot(self) -> int:
        return len(self.pilot_positions)

    @property
    def n_data(self) -> int:
        return len(self.data_positions)

    @property
    def J(self) -> np.ndarray:
        """Full ``L x L`` permutation; first ``L_p`` rows are ``J_p``."""
        order = np.concatenate([self.pilot_positions, self.data_positions])
        return np.eye(self.length)[order]

    @property
    def J_p(self) -> np.ndarray:
        return self.J[: self.n_pilot]

    @property
    def J_d(self) -> np.ndarray:
        return self.J[self.n_pilot:]

    def assemble(self, x_p: np.ndarray, x_d: np.ndarray) -> np.ndarray:
        """``X = X_p J_p + X_d J_d`` without forming the permutation."""
        x = np.empty(x_p.shape[:-1] + (self.length,), dtype=np.result_type(x_p, x_d))
        x[..., self.pilot_positions] = x_p
        x[..., self.data_positions] = x_d
        return x

    def split(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return x[..., self.pilot_positions], x[..., self.data_positions]


def build_frame_plan(L: int, L_p: int, pattern: str = "interleaved",
                     period: int | None = None) -> FramePlan:
    """Place ``L_p`` pilots in a frame of ``L`` samples.

    ``prefix`` puts pilots first. ``interleaved`` spaces them every
    ``period`` slots (default ``ceil(L / L_p)``); when that stride would run
    past the frame end the pilots are spread as ``floor(i L / L_p)``.
    """
    if not 0 < L_p < L:
        raise InvalidSplit(f"need 0 < L_p < L, got L_p={L_p}, L={L}")
    if pattern == "prefix":
        pilots = np.arange(L_p)
    elif pattern == "interleaved":
        step = period if period is not None else -(-L // L_p)
        if step < 1:
            raise InvalidSplit(f"period must be >= 1, got {step}")
        if step * (L_p - 1) < L:
            pilots = np.arange(L_p) * step
        else:
            pilots = (np.arange(L_p) * L) // L_p
    else:
        raise InvalidSplit(f"unknown pilot pattern {pattern!r}")
    mask = np.zeros(L, dtype=bool)
    mask[pilots] = True
    return FramePlan(L, np.flatnonzero(mask), np.flatnonzero(~mask))


@dataclass(frozen=True)
class TransmitPlan:
    """Beamformers and pilot symbols for one frame layout."""

    f_p: np.ndarray
    s_p: np.ndarray
    f_d: np.ndarray
    frame: FramePlan

    @property
    def fbar_p(self) -> np.ndarray:
        return math.sqrt(self.frame.n_pilot) * self.f_p

    @property
    def fbar_d(self) -> np.ndarray:
        return math.sqrt(self.frame.n_data) * self.f_d

    @property
    def pilot_filter(self) -> np.ndarray:
        """``J_p^T s_p^*`` as a length-``L`` vector."""
        v = np.zeros(self.frame.length, dtype=complex)
        v[self.frame.pilot_positions] = self.s_p.conj()
        return v

    def pilot_block(self) -> np.ndarray:
        """``X_p = f_p s_p^T`` placed in the frame."""
        return np.outer(self.f_p, self.s_p)


def data_precoder(cfg: SystemConfig) -> np.ndarray:
    """Matched beams toward the first ``K`` user angles, zero-padded to ``N`` columns,
    scaled to ``||F_d||_F^2 = P_d / L_d``."""
    N = cfg.n_tx
    F = np.zeros((N, N), dtype=complex)
    power = cfg.data_power
    if power == 0 or cfg.K == 0:
        return F
    for k, angle in enumerate(cfg.user_aods_deg[: cfg.K]):
        F[:, k] = steering_vector(angle, N)
    F *= math.sqrt(power / cfg.L_d) / np.linalg.norm(F)
    return F


def build_transmit_plan(cfg: SystemConfig, s: Scenario,
                        rng: np.random.Generator | None = None) -> TransmitPlan:
    """Pilot beam matched to the target's transmit response, unit-modulus
    pilots, and the user-matched data precoder."""
    frame = build_frame_plan(cfg.L, cfg.L_p, cfg.pilot_pattern)
    N = cfg.n_tx
    f_p = math.sqrt(cfg.pilot_power / (cfg.L_p * N)) * s.b_t
    if cfg.pilot_symbols == "ones":
        s_p = np.ones(cfg.L_p, dtype=complex)
    else:
        if rng is None:
            raise ValueError("random pilot phases need a random stream")
        s_p = np.exp(2j * np.pi * rng.uniform(size=cfg.L_p))
    return TransmitPlan(f_p=f_p, s_p=s_p, f_d=data_precoder(cfg), frame=frame)


def draw_payload(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """``N x L_d`` i.i.d. CN(0, 1) data symbols."""
    return complex_normal(rng, (cfg.n_tx, cfg.L_d))


def complex_normal(rng: np.random.Generator, shape, scale: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian with ``E|x|^2 = scale``."""
    z = rng.standard_normal(tuple(shape) + (2,))
    z *= math.sqrt(scale / 2)
    # (re, im) pairs are adjacent, so reinterpret instead of copying
    return z.view(np.complex128)[..., 0]


# --------------------------------------------------------------------------
# Received frames
# --------------------------------------------------------------------------

_MAGIC = b"ISACFRM1"
_HEADER = struct.Struct("<8sIIBBQ")
_MODES = ("physical", "statistical")


@dataclass
class ReceivedFrame:
    y: np.ndarray
    hypothesis: str
    generation_mode: str
    seed: int = 0

    def to_bytes(self) -> bytes:
        M, L = self.y.shape
        head = _HEADER.pack(_MAGIC, M, L, 1 if self.hypothesis == H1 else 0,
                            _MODES.index(self.generation_mode), self.seed & (2**64 - 1))
        body = np.ascontiguousarray(self.y, dtype="<c16").tobytes()
        return head + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ReceivedFrame":
        if len(blob) < _HEADER.size:
            raise FormatError("truncated frame header")
        magic, M, L, hyp, mode, seed = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise FormatError("not a frame container (bad magic)")
        if hyp > 1 or mode > 1:
            raise FormatError("corrupt header fields")
        expected = _HEADER.size + 16 * M * L
        if len(blob) != expected:
            raise FormatError(f"expected {expected} bytes, got {len(blob)}")
        y = np.frombuffer(blob, dtype="<c16", offset=_HEADER.size).reshape(M, L).copy()
        return cls(y, H1 if hyp else H0, _MODES[mode], seed)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ReceivedFrame":
        return cls.from_bytes(Path(path).read_bytes())


def synthesize_physical(s: Scenario, plan: TransmitPlan, hypothesis: str,
                        rng: np.random.Generator, *, sigma2: float,
                        seed: int = 0) -> ReceivedFrame:
    """Push pilots and a fresh payload through clutter (and the target under H1).

    Draw order is payload then noise, regardless of hypothesis, so H0 and
    H1 frames from the same stream share their random parts.
    """
    N, L_d = plan.f_d.shape[0], plan.frame.n_data
    M = s.h_e.shape[0]
    s_d = complex_normal(rng, (N, L_d))
    noise = complex_normal(rng, (M, plan.frame.length), sigma2)
    x = plan.frame.assemble(plan.pilot_block(), plan.f_d @ s_d)
    channel = s.h_e
    if hypothesis == H1:
        channel = channel + s.alpha * np.outer(s.a_t, s.b_t.conj())
    y = channel @ x + noise
    return ReceivedFrame(y, hypothesis, "physical", seed)


def synthesize_statistical(model: "NullModel", s: Scenario, alpha: complex,
                           hypothesis: str, rng: np.random.Generator, *,
                           z: np.ndarray | None = None, seed: int = 0) -> ReceivedFrame:
    """Gaussian frame ``U + dU + (Sigma_bar + dSigma_bar)^(1/2) Z``."""
    M, L = model.u.shape
    if z is None:
        z = complex_normal(rng, (M, L))
    cov = model.sigma_bar
    mean = model.u
    if hypothesis == H1 and alpha != 0:
        cov = cov + abs(alpha) ** 2 * model.lambda_d_bar_sq / L * np.outer(s.a_t, s.a_t.conj())
        mean = mean + alpha * model.lambda_p * np.outer(s.a_t, model.plan.frame.assemble(
            model.plan.s_p, np.zeros(model.plan.frame.n_data, dtype=complex)))
    y = mean + hermitian_sqrt(cov) @ z
    return ReceivedFrame(y, hypothesis, "statistical", seed)
