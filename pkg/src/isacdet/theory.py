"""Closed-form false-alarm and detection probabilities of the hybrid GLRT.

Everything here is asymptotic in the frame length ``L``. ``ratio`` is the
data-to-pilot leakage ``|lam_d_bar|^2 / |lam_p_bar|^2`` toward the target,
and ``pilot_snr`` is ``|alpha|^2 |lam_p_bar|^2 beta_bar``.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import SystemConfig
from .errors import InvalidTarget
from .numerics import marcum_q1, steering_vector
from .scenario import Scenario
from .statistics import NullModel
from .waveform import TransmitPlan

log = logging.getLogger(__name__)

RATE_CONVENTION = (
    "rate-v1: sum_k log2(1+SINR_k); user k channel = ULA steering at its AoD with unit gain; "
    "signal = column k of sqrt(L_d) F_d; interference = other columns; noise = sigma^2"
)
CLAMP_CONVENTION = "probabilities clamped to [0,1]; b_d clamped at 0 (flagged per row)"


def _clamp(p: float, what: str) -> float:
    if p < 0.0 or p > 1.0:
        if not math.isclose(p, min(max(p, 0.0), 1.0), abs_tol=1e-12):
            log.warning("%s = %.6g outside [0, 1], clamped", what, p)
        return min(max(p, 0.0), 1.0)
    return p


def _excess(y: float, L: int) -> float:
    """``y - L log(1 + y / L)``, nonnegative, accurate for small ``y / L``."""
    return y - L * math.log1p(y / L)


def fap_closed_form(log_eta: float, L: int, ratio: float) -> float:
    """``exp(-L log_eta + ratio - L log(1 + ratio / L))``."""
    if ratio < 0:
        raise ValueError("ratio must be nonnegative")
    return _clamp(math.exp(min(-L * log_eta + _excess(ratio, L), 700.0)), "P_fa")


def fap_lower_bound(log_eta: float, L: int) -> float:
    """FAP of a data-free system, ``exp(-L log_eta)``."""
    return _clamp(math.exp(min(-L * log_eta, 700.0)), "P_fa bound")


def threshold_for_fap(p_fa: float, L: int, ratio: float) -> float:
    """``log eta`` such that :func:`fap_closed_form` returns ``p_fa``."""
    if not 0.0 < p_fa < 1.0:
        raise InvalidTarget(f"target FAP must lie in (0, 1), got {p_fa}")
    y = ratio / L
    return y - math.log1p(y) - math.log(p_fa) / L


@dataclass(frozen=True)
class DpTerms:
    a_d: float
    b_d: float
    clamped: bool


def dp_terms(p_fa: float, pilot_snr: float, leak_snr: float, L: int) -> DpTerms:
    """Marcum arguments; ``leak_snr = |alpha|^2 |lam_d_bar|^2 beta_bar``."""
    a_d = pilot_snr / (1.0 + leak_snr / L)
    b_d = -math.log(p_fa) - _excess(leak_snr, L)
    clamped = b_d < 0
    if clamped:
        log.info("b_d = %.4g < 0 clamped to 0", b_d)
        b_d = 0.0
    return DpTerms(a_d, b_d, clamped)


def _snrs(alpha_abs_sq: float, m: NullModel) -> tuple[float, float]:
    return (alpha_abs_sq * m.lambda_p_bar_sq * m.beta_bar,
            alpha_abs_sq * m.lambda_d_bar_sq * m.beta_bar)


def dp_from_snr(p_fa: float, pilot_snr: float, leak_snr: float, L: int) -> float:
    if not 0.0 < p_fa < 1.0:
        raise InvalidTarget(f"FAP must lie in (0, 1), got {p_fa}")
    t = dp_terms(p_fa, pilot_snr, leak_snr, L)
    return _clamp(marcum_q1(math.sqrt(2 * t.a_d), math.sqrt(2 * t.b_d)), "P_d")


def dp_bound_from_snr(p_fa: float, pilot_snr: float) -> float:
    if not 0.0 < p_fa < 1.0:
        raise InvalidTarget(f"FAP must lie in (0, 1), got {p_fa}")
    return _clamp(marcum_q1(math.sqrt(2 * pilot_snr), math.sqrt(-2 * math.log(p_fa))), "P_d bound")


def dp_closed_form(p_fa: float, alpha_abs_sq: float, m: NullModel, L: int | None = None) -> float:
    """``Q_1(sqrt(2 a_d), sqrt(2 b_d))``."""
    L = m.L if L is None else L
    return dp_from_snr(p_fa, *_snrs(alpha_abs_sq, m), L)


def dp_upper_bound(p_fa: float, alpha_abs_sq: float, m: NullModel, L: int | None = None) -> float:
    """DP of the data-free system, ``Q_1(sqrt(2 |alpha|^2 |lam_p_bar|^2 beta_bar), sqrt(-2 log p_fa))``."""
    return dp_bound_from_snr(p_fa, _snrs(alpha_abs_sq, m)[0])


@dataclass(frozen=True)
class TheoryPoint:
    log_eta: float
    p_fa: float
    p_fa_lower_bound: float
    p_d: float
    p_d_upper_bound: float
    a_d: float
    b_d: float
    b_d_clamped: bool = False


def theory_point(p_fa: float, alpha_abs_sq: float, m: NullModel, L: int | None = None) -> TheoryPoint:
    """All closed-form quantities at one calibrated operating point."""
    L = m.L if L is None else L
    log_eta = threshold_for_fap(p_fa, L, m.power_ratio)
    pilot, leak = _snrs(alpha_abs_sq, m)
    t = dp_terms(p_fa, pilot, leak, L)
    return TheoryPoint(
        log_eta=log_eta,
        p_fa=fap_closed_form(log_eta, L, m.power_ratio),
        p_fa_lower_bound=fap_lower_bound(log_eta, L),
        p_d=dp_from_snr(p_fa, pilot, leak, L),
        p_d_upper_bound=dp_bound_from_snr(p_fa, pilot),
        a_d=t.a_d,
        b_d=t.b_d,
        b_d_clamped=t.clamped,
    )


def theory_csv(points: list[TheoryPoint], header: str = "") -> str:
    """Serialise theory rows; conventions go in leading ``#`` lines."""
    buf = io.StringIO()
    for line in filter(None, [header, CLAMP_CONVENTION, RATE_CONVENTION]):
        buf.write(f"# {line}\n")
    cols = [f.name for f in TheoryPoint.__dataclass_fields__.values()]
    w = csv.DictWriter(buf, cols, lineterminator="\n")
    w.writeheader()
    for p in points:
        w.writerow({k: (repr(v) if isinstance(v, float) else int(v)) for k, v in asdict(p).items()})
    return buf.getvalue()


# --------------------------------------------------------------------------
# communication side (x-axis of the trade-off sweep)
# --------------------------------------------------------------------------

def user_sinrs(plan: TransmitPlan, cfg: SystemConfig) -> np.ndarray:
    F = plan.fbar_d
    K = cfg.K
    if K == 0:
        return np.zeros(0)
    H = np.stack([steering_vector(a, cfg.n_tx) for a in cfg.user_aods_deg[:K]])
    G = np.abs(H.conj() @ F[:, :K]) ** 2  # G[k, j] = |h_k^H f_j|^2
    signal = np.diag(G)
    interference = G.sum(axis=1) - signal
    return signal / (interference + cfg.noise_power)


def communication_rate(plan: TransmitPlan, s: Scenario | None, cfg: SystemConfig) -> float:
    """Sum rate in bit/s/Hz under :data:`RATE_CONVENTION`.

    The scenario is accepted for interface symmetry; user channels do not
    depend on the clutter draw.
    """
    return float(np.sum(np.log2(1.0 + user_sinrs(plan, cfg))))
