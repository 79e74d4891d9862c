"""Scenario configuration, MS-to-BS assignment and random channel draws."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, fields, replace
from typing import Any, Mapping

import numpy as np
import yaml

TWO_HOP = "two-hop"
SINGLE_HOP = "single-hop"
MODES = (TWO_HOP, SINGLE_HOP)

# Substream keys for SeedSequence spawning, one per channel family.
_STREAM_RB = 0
_STREAM_MR = 1
_STREAM_MB = 2


class ConfigError(ValueError):
    """Invalid or missing scenario configuration field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Dimensions, power budgets and noise level of one scenario.

    All powers are linear. ``P_d`` is the average power of each data
    symbol, ``P_B`` and ``P_R`` are the sum power budgets of the BSs and
    the relays. ``R``, ``N_R`` and ``P_R`` are ignored in single-hop mode.
    """

    K: int
    M: int
    N_B: int
    N_M: int
    R: int = 1
    N_R: int = 1
    P_d: float = 1.0
    P_B: float = 1.0
    P_R: float = 0.0
    sigma2: float = 1.0
    mode: str = TWO_HOP

    def __post_init__(self):
        for name in ("K", "M", "R", "N_B", "N_R", "N_M"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(name, f"must be an integer, got {value!r}")
            if value < 1:
                raise ConfigError(name, f"must be >= 1, got {value}")
        if self.M > self.N_B:
            raise ConfigError("M", f"M={self.M} exceeds N_B={self.N_B}")
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}, got {self.mode!r}")
        for name in ("P_d", "P_B", "sigma2"):
            _check_positive(name, getattr(self, name))
        if self.two_hop:
            _check_positive("P_R", self.P_R)

    @property
    def two_hop(self) -> bool:
        return self.mode == TWO_HOP

    @property
    def n_ms(self) -> int:
        """Total number of MSs, ``K * M``."""
        return self.K * self.M

    def ms_cells(self) -> np.ndarray:
        """Serving BS index of every MS, 0-based."""
        return np.arange(self.n_ms) // self.M

    def ms_columns(self) -> np.ndarray:
        """Column of the serving transmit filter used by every MS."""
        return np.arange(self.n_ms) % self.M


def _check_positive(name, value):
    try:
        ok = math.isfinite(value) and value > 0
    except TypeError:
        ok = False
    if not ok:
        raise ConfigError(name, f"must be a finite positive number, got {value!r}")


def serving_bs(m: int, cfg: ScenarioConfig) -> int:
    """Return the BS serving MS ``m``.

    Indices are 0-based: MSs ``k*M .. k*M + M - 1`` belong to cell ``k``.
    """
    if not 0 <= m < cfg.n_ms:
        raise IndexError(f"MS index {m} out of range [0, {cfg.n_ms})")
    return m // cfg.M


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Channel matrices of one snapshot.

    Arrays are stacked with 0-based indices:

    * ``H_RB[r, k]`` -- ``N_R x N_B``, BS ``k`` to relay ``r``
    * ``H_MR[m, r]`` -- ``N_M x N_R``, relay ``r`` to MS ``m``
    * ``H_MB[m, k]`` -- ``N_M x N_B``, BS ``k`` to MS ``m`` (single-hop)

    Families not used by the scenario's mode are ``None``.
    """

    H_RB: np.ndarray | None
    H_MR: np.ndarray | None
    H_MB: np.ndarray | None
    seed: int

    def __post_init__(self):
        for arr in (self.H_RB, self.H_MR, self.H_MB):
            if arr is not None:
                arr.flags.writeable = False

    def digest(self) -> str:
        """Short SHA-256 fingerprint of all channel coefficients."""
        h = hashlib.sha256()
        for arr in (self.H_RB, self.H_MR, self.H_MB):
            if arr is not None:
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]


def _cgauss(rng: np.random.Generator, shape) -> np.ndarray:
    # unit variance, real and imaginary parts each with variance 1/2
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def _stream(seed: int, key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def draw_channels(cfg: ScenarioConfig, seed: int) -> ChannelSet:
    """Draw i.i.d. CN(0, 1) channel matrices for ``cfg``.

    Each channel family has its own substream of ``seed``, so the result is
    a pure function of ``(cfg, seed)``.
    """
    seed = int(seed)
    if cfg.two_hop:
        H_RB = _cgauss(_stream(seed, _STREAM_RB), (cfg.R, cfg.K, cfg.N_R, cfg.N_B))
        H_MR = _cgauss(_stream(seed, _STREAM_MR), (cfg.n_ms, cfg.R, cfg.N_M, cfg.N_R))
        return ChannelSet(H_RB=H_RB, H_MR=H_MR, H_MB=None, seed=seed)
    H_MB = _cgauss(_stream(seed, _STREAM_MB), (cfg.n_ms, cfg.K, cfg.N_M, cfg.N_B))
    return ChannelSet(H_RB=None, H_MR=None, H_MB=H_MB, seed=seed)


def apply_psnr(cfg: ScenarioConfig, psnr_db: float, rho: float = 0.5) -> ScenarioConfig:
    """Set the power budgets from a pseudo SNR ``(P_B + P_R) / sigma2`` in dB.

    In two-hop mode the fraction ``rho`` of the total power goes to the
    BSs and the rest to the relays; single-hop mode gives everything to
    the BSs.
    """
    if not 0.0 < rho < 1.0:
        raise ConfigError("rho", f"must lie in (0, 1), got {rho!r}")
    total = 10.0 ** (psnr_db / 10.0) * cfg.sigma2
    if cfg.two_hop:
        return replace(cfg, P_B=rho * total, P_R=(1.0 - rho) * total)
    return replace(cfg, P_B=total, P_R=0.0)


_INT_FIELDS = ("K", "M", "R", "N_B", "N_R", "N_M")
_FLOAT_FIELDS = ("P_d", "P_B", "P_R", "sigma2")
_REQUIRED = ("K", "M", "N_B", "N_M")


def config_from_mapping(data: Mapping[str, Any]) -> ScenarioConfig:
    """Build a validated :class:`ScenarioConfig` from a flat mapping.

    Power budgets come either from explicit ``P_B``/``P_R`` keys or from
    ``psnr_db`` (plus optional ``rho``, default 0.5). Unknown keys are
    rejected.
    """
    known = {f.name for f in fields(ScenarioConfig)} | {"psnr_db", "rho"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(unknown[0], "unknown configuration key")
    for name in _REQUIRED:
        if name not in data:
            raise ConfigError(name, "missing required field")

    mode = data.get("mode", TWO_HOP)
    if mode not in MODES:
        raise ConfigError("mode", f"must be one of {MODES}, got {mode!r}")
    if mode == TWO_HOP:
        for name in ("R", "N_R"):
            if name not in data:
                raise ConfigError(name, "missing required field for two-hop mode")

    kwargs: dict[str, Any] = {"mode": mode}
    for name in _INT_FIELDS:
        if name in data:
            value = data[name]
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(name, f"must be an integer, got {value!r}")
            kwargs[name] = value
    for name in _FLOAT_FIELDS:
        if name in data:
            value = data[name]
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(name, f"must be a number, got {value!r}")
            kwargs[name] = float(value)

    has_psnr = "psnr_db" in data
    has_powers = "P_B" in data
    if has_psnr and has_powers:
        raise ConfigError("psnr_db", "give either psnr_db or explicit P_B/P_R, not both")
    if not has_psnr and not has_powers:
        raise ConfigError("P_B", "missing; give P_B (and P_R) or psnr_db")
    if has_psnr:
        psnr_db = data["psnr_db"]
        if isinstance(psnr_db, bool) or not isinstance(psnr_db, (int, float)):
            raise ConfigError("psnr_db", f"must be a number, got {psnr_db!r}")
        rho = data.get("rho", 0.5)
        if isinstance(rho, bool) or not isinstance(rho, (int, float)):
            raise ConfigError("rho", f"must be a number, got {rho!r}")
        # placeholder budgets, replaced right below
        base = ScenarioConfig(**{**kwargs, "P_B": 1.0, "P_R": 1.0})
        return apply_psnr(base, float(psnr_db), float(rho))
    if mode == TWO_HOP and "P_R" not in data:
        raise ConfigError("P_R", "missing required field for two-hop mode")
    return ScenarioConfig(**kwargs)


def load_config(source: str) -> ScenarioConfig:
    """Parse a flat YAML (or JSON) key-value document into a config."""
    try:
        data = yaml.safe_load(source)
    except yaml.YAMLError as exc:
        raise ConfigError("<source>", f"cannot parse configuration: {exc}") from exc
    if not isinstance(data, Mapping):
        raise ConfigError("<source>", "configuration must be a key-value mapping")
    return config_from_mapping(data)


# Scenario of the numerical results: 2 cells, 3 MSs per cell, 4 relays.
REFERENCE_SCENARIO = ScenarioConfig(
    K=2, M=3, N_B=3, R=4, N_R=2, N_M=2, P_d=1.0, P_B=500.0, P_R=500.0, sigma2=1.0
)
