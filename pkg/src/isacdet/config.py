"""System configuration and its flat ``key = value`` file format.

Files are INI-style: section headers group keys for readability but the
key namespace is flat, so a key may appear under any section. Units are
carried in key names (``_dbm``, ``_deg``, ``_m``, ``_db``).

Example::

    [array]
    n_tx = 8
    n_rx = 16

    [frame]
    frame_length = 32
    pilot_length = 8
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import ConfigError

# short names accepted by --override
ALIASES = {
    "N": "n_tx",
    "M": "n_rx",
    "K": "n_users",
    "L": "frame_length",
    "L_p": "pilot_length",
    "P_p": "p_pilot_dbm",
    "P_d": "p_data_dbm",
    "sigma2_dbm": "noise_dbm",
}

SECTIONS = {
    "array": ("n_tx", "n_rx", "n_users", "carrier_ghz"),
    "frame": ("frame_length", "pilot_length", "pilot_fraction", "pilot_pattern", "pilot_symbols"),
    "power": ("p_pilot_dbm", "p_data_dbm", "noise_dbm"),
    "geometry": (
        "target_aod_deg",
        "target_aoa_deg",
        "user_aods_deg",
        "clutter_aod_range_deg",
        "clutter_aoa_range_deg",
    ),
    "channel": ("n_paths", "tx_rx_distance_m", "pathloss_a", "pathloss_b", "shadow_sigma_db"),
    "target": ("alpha_abs", "alpha_phase_deg", "target_snr_db"),
    "run": ("seed",),
}


@dataclass(frozen=True)
class SystemConfig:
    """Physical and frame parameters. Defaults describe a 28 GHz mmWave link."""

    n_tx: int = 8
    n_rx: int = 16
    n_users: int | None = None
    carrier_ghz: float = 28.0

    frame_length: int = 32
    # None -> round(pilot_fraction * frame_length), at least 1
    pilot_length: int | None = None
    pilot_fraction: float = 0.25
    pilot_pattern: str = "interleaved"
    pilot_symbols: str = "ones"

    p_pilot_dbm: float = 30.0
    p_data_dbm: float = 30.0
    noise_dbm: float = -90.0

    target_aod_deg: float = 10.0
    target_aoa_deg: float = 10.0
    user_aods_deg: tuple[float, ...] = (20.0, 25.0, 30.0)
    clutter_aod_range_deg: tuple[float, float] = (50.0, 60.0)
    clutter_aoa_range_deg: tuple[float, float] = (50.0, 60.0)

    n_paths: int = 3
    tx_rx_distance_m: float = 40.0
    pathloss_a: float = 61.4
    pathloss_b: float = 2.0
    shadow_sigma_db: float = 5.8

    alpha_abs: float = 0.0
    alpha_phase_deg: float = 0.0
    # when set, |alpha| is chosen per scenario so that |alpha|^2 |lam_p_bar|^2 beta_bar
    # equals this value (in dB); alpha_abs is then ignored
    target_snr_db: float | None = None

    seed: int = 0

    # -- derived -----------------------------------------------------------

    @property
    def L(self) -> int:
        return self.frame_length

    @property
    def L_p(self) -> int:
        if self.pilot_length is not None:
            return self.pilot_length
        return max(1, int(round(self.pilot_fraction * self.frame_length)))

    @property
    def L_d(self) -> int:
        return self.frame_length - self.L_p

    @property
    def K(self) -> int:
        return self.n_users if self.n_users is not None else len(self.user_aods_deg)

    @property
    def noise_power(self) -> float:
        return dbm_to_watts(self.noise_dbm)

    @property
    def pilot_power(self) -> float:
        return dbm_to_watts(self.p_pilot_dbm)

    @property
    def data_power(self) -> float:
        return dbm_to_watts(self.p_data_dbm)

    @property
    def alpha(self) -> complex:
        return self.alpha_abs * complex(math.cos(math.radians(self.alpha_phase_deg)),
                                        math.sin(math.radians(self.alpha_phase_deg)))

    # -- validation --------------------------------------------------------

    def validate(self) -> list[str]:
        """Raise :class:`ConfigError` on hard violations; return soft warnings.

        ``L_p > N`` and ``L_d > N`` are reported as warnings only, since
        short-frame experiments routinely violate them.
        """
        errs = []
        if self.n_tx < 1 or self.n_rx < 1:
            errs.append("antenna counts must be >= 1")
        if self.frame_length < 2:
            errs.append("frame_length must be >= 2")
        if not 0 < self.L_p < self.frame_length:
            errs.append(f"pilot_length {self.L_p} must lie in (0, {self.frame_length})")
        if self.n_paths < 0:
            errs.append("n_paths must be >= 0")
        if self.pilot_pattern not in ("prefix", "interleaved"):
            errs.append(f"unknown pilot_pattern {self.pilot_pattern!r}")
        if self.pilot_symbols not in ("ones", "random_phase"):
            errs.append(f"unknown pilot_symbols {self.pilot_symbols!r}")
        if self.tx_rx_distance_m <= 0:
            errs.append("tx_rx_distance_m must be > 0")
        if self.K > self.n_tx:
            errs.append(f"{self.K} users exceed {self.n_tx} precoder columns")
        if self.K > len(self.user_aods_deg):
            errs.append(f"{self.K} users but only {len(self.user_aods_deg)} user angles")
        for name in ("p_pilot_dbm", "noise_dbm", "pathloss_a", "pathloss_b", "alpha_abs"):
            if not math.isfinite(getattr(self, name)):
                errs.append(f"{name} must be finite")
        if math.isnan(self.p_data_dbm) or self.p_data_dbm == math.inf:
            errs.append("p_data_dbm must be finite or -inf")
        if errs:
            raise ConfigError("; ".join(errs))
        warn = []
        if self.L_p <= self.n_tx:
            warn.append(f"L_p={self.L_p} <= N={self.n_tx}")
        if self.L_d <= self.n_tx:
            warn.append(f"L_d={self.L_d} <= N={self.n_tx}")
        return warn

    def replace(self, **changes: Any) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, overrides: Mapping[str, Any] | Iterable[str]) -> "SystemConfig":
        """Apply ``key=value`` overrides (strings or a mapping), last one wins."""
        if not isinstance(overrides, Mapping):
            pairs = {}
            for item in overrides:
                if "=" not in item:
                    raise ConfigError(f"override {item!r} is not key=value")
                k, v = item.split("=", 1)
                pairs[k.strip()] = v.strip()
            overrides = pairs
        changes = {}
        for key, raw in overrides.items():
            name = ALIASES.get(key, key)
            changes[name] = _coerce(name, raw)
        # an explicit L without L_p keeps the pilot fraction
        if "frame_length" in changes and "pilot_length" not in changes:
            changes.setdefault("pilot_length", None)
        return self.replace(**changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        """Short stable hash of the configuration, used in artifact headers."""
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def dbm_to_watts(p_dbm: float) -> float:
    """``10 ** ((p_dbm - 30) / 10)``; ``-inf`` dBm maps to 0 W."""
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


# --------------------------------------------------------------------------
# (de)serialisation
# --------------------------------------------------------------------------

_FIELDS = {f.name: f for f in fields(SystemConfig)}


def _coerce(name: str, raw: Any) -> Any:
    if name not in _FIELDS:
        raise ConfigError(f"unknown config key {name!r}")
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    typ = _FIELDS[name].type
    try:
        if text.lower() in ("none", "") and "None" in str(typ):
            return None
        if "tuple" in str(typ):
            parts = [p for p in text.replace("(", "").replace(")", "").split(",") if p.strip()]
            return tuple(float(p) for p in parts)
        if typ in ("int", "int | None"):
            return int(float(text))
        if typ in ("float", "float | None"):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps_config(cfg: SystemConfig) -> str:
    parser = configparser.ConfigParser()
    data = cfg.to_dict()
    for section, keys in SECTIONS.items():
        parser[section] = {k: _format(data[k]) for k in keys}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def loads_config(text: str, base: SystemConfig | None = None) -> SystemConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    values = {}
    for section in parser.sections():
        for key, raw in parser[section].items():
            values[key] = raw
    cfg = (base or SystemConfig()).with_overrides(values)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> SystemConfig:
    """Load a config file; ``"defaults"`` yields the built-in configuration."""
    if str(path) == "defaults":
        return SystemConfig()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        return loads_config(p.read_text())
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from exc


def save_config(cfg: SystemConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(cfg))

