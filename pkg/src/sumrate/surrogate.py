"""Multi-concave surrogate of the sum rate and its auxiliary variables.

For every MS ``m`` the surrogate uses a complex scale ``w`` and a positive
weight ``t``. With ``a = u^H q`` (projected useful link) and
``n = u^H Z u`` (projected interference plus noise):

* ``g(w) = P_d |a - w|^2 + n`` is the MSE between the estimate and ``w d``
* ``eta(w) = P_d |w|^2 / g(w)`` peaks at ``1 + SINR``
* ``b = sum_m log2(P_d |w|^2) + log2(t) - t g(w) / ln 2``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemState, all_link_stats
from .scenario import ChannelSet, ScenarioConfig

LN2 = np.log(2.0)


class DegenerateLinkError(ArithmeticError):
    """The projected useful link ``u^H q`` of an MS vanishes."""


@dataclass(frozen=True, eq=False)
class AuxState:
    """Scaling factors ``w`` (complex) and ``t`` (positive), one per MS."""

    w: np.ndarray
    t: np.ndarray

    @classmethod
    def ones(cls, n_ms: int) -> "AuxState":
        return cls(w=np.ones(n_ms, dtype=complex), t=np.ones(n_ms))


def projections(state: SystemState, ch: ChannelSet, cfg: ScenarioConfig):
    """Projected useful links ``u^H q`` and interference powers ``u^H Z u``."""
    q, Z = all_link_stats(state, ch, cfg)
    U = state.U
    a = np.einsum("ma,ma->m", U.conj(), q)
    n = np.einsum("ma,mab,mb->m", U.conj(), Z, U).real
    return a, n


def g_from(a, n, w, P_d):
    return P_d * np.abs(a - w) ** 2 + n


def g_values(state, w, ch, cfg) -> np.ndarray:
    """``g`` of every MS for the scale vector ``w``."""
    a, n = projections(state, ch, cfg)
    return g_from(a, n, np.asarray(w), cfg.P_d)


def _check_m(m, cfg):
    if not 0 <= m < cfg.n_ms:
        raise IndexError(f"MS index {m} out of range [0, {cfg.n_ms})")


def g_value(m: int, state: SystemState, ch: ChannelSet, cfg: ScenarioConfig, w_m: complex) -> float:
    """``E|d_hat - w d|^2`` of MS ``m``."""
    _check_m(m, cfg)
    a, n = projections(state, ch, cfg)
    return float(g_from(a[m], n[m], w_m, cfg.P_d))


def eta(m: int, state: SystemState, ch: ChannelSet, cfg: ScenarioConfig, w_m: complex) -> float:
    """Surrogate ratio ``P_d |w|^2 / g(w)`` of MS ``m``."""
    return float(cfg.P_d * abs(w_m) ** 2 / g_value(m, state, ch, cfg, w_m))


def w_opt_from(a, n, P_d):
    """Maximizer of ``eta`` over ``w``; NaN where ``a == 0``."""
    a = np.asarray(a)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = (P_d * np.abs(a) ** 2 + n) / (P_d * np.conj(a))
    return np.where(a == 0, np.nan + 0j, w)


def w_opt(m: int, state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> complex:
    """Scale factor maximizing ``eta`` of MS ``m``.

    Raises
    ------
    DegenerateLinkError
        If ``u^H q = 0``; ``eta`` is then maximal at ``w = 0`` only.
    """
    _check_m(m, cfg)
    a, n = projections(state, ch, cfg)
    if a[m] == 0:
        raise DegenerateLinkError(f"MS {m}: receive filter is orthogonal to the useful link")
    return complex(w_opt_from(a[m], n[m], cfg.P_d))


def update_w(a, n, w_prev, P_d):
    """Vectorized w-update keeping ``w_prev`` on degenerate links.

    Returns the new ``w`` and a boolean mask of the degenerate MSs.
    """
    w = w_opt_from(a, n, P_d)
    bad = ~np.isfinite(w)
    return np.where(bad, w_prev, w), bad


def t_opt(m: int, state: SystemState, ch: ChannelSet, cfg: ScenarioConfig, w_m: complex) -> float:
    """Weight maximizing ``b`` over ``t`` for MS ``m``: ``1 / g(w)``."""
    return 1.0 / g_value(m, state, ch, cfg, w_m)


def b_from(a, n, w, t, P_d) -> float:
    w = np.asarray(w)
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("every t must be positive")
    if np.any(w == 0):
        raise ValueError("every w must be nonzero")
    g = g_from(a, n, w, P_d)
    return float(np.sum(np.log2(P_d * np.abs(w) ** 2) + np.log2(t) - t * g / LN2))


def b_objective(state: SystemState, aux: AuxState, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """Multi-concave surrogate objective ``b`` (two-hop or single-hop)."""
    a, n = projections(state, ch, cfg)
    return b_from(a, n, aux.w, aux.t, cfg.P_d)
