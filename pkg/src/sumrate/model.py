"""Signal model: effective links, interference covariances, SINR and powers.

All expectations are evaluated in closed form. Data symbols are
uncorrelated with power ``P_d`` and every noise sample has variance
``sigma2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ChannelSet, ScenarioConfig


class ModelError(ValueError):
    """Array dimensions inconsistent with the scenario."""


@dataclass(frozen=True, eq=False)
class SystemState:
    """Transmit filters, relay matrices and receive filters.

    ``V[k]`` is the ``N_B x M`` filter of BS ``k``; column ``m % M`` serves
    MS ``m``. ``G[r]`` is the ``N_R x N_R`` matrix of relay ``r`` (``G`` has
    length 0 in single-hop mode). ``U[m]`` is the receive filter of MS ``m``.
    """

    V: np.ndarray
    G: np.ndarray
    U: np.ndarray

    def replace(self, **changes) -> "SystemState":
        return SystemState(**{"V": self.V, "G": self.G, "U": self.U, **changes})

    def check(self, cfg: ScenarioConfig) -> None:
        """Raise :class:`ModelError` if the shapes do not match ``cfg``."""
        expected_V = (cfg.K, cfg.N_B, cfg.M)
        if self.V.shape != expected_V:
            raise ModelError(f"V has shape {self.V.shape}, expected {expected_V}")
        if cfg.two_hop:
            expected_G = (cfg.R, cfg.N_R, cfg.N_R)
            if self.G.shape != expected_G:
                raise ModelError(f"G has shape {self.G.shape}, expected {expected_G}")
        elif self.G.ndim != 3 or self.G.shape[0] != 0:
            raise ModelError(f"single-hop state must have no relay matrices, got G of shape {self.G.shape}")
        expected_U = (cfg.n_ms, cfg.N_M)
        if self.U.shape != expected_U:
            raise ModelError(f"U has shape {self.U.shape}, expected {expected_U}")


def empty_relays(cfg: ScenarioConfig) -> np.ndarray:
    return np.zeros((0, cfg.N_R, cfg.N_R), dtype=complex)


@dataclass(frozen=True)
class LinkStats:
    """Useful link ``q`` and interference-plus-noise covariance ``Z`` of one MS."""

    q: np.ndarray
    Z: np.ndarray


def check_channels(ch: ChannelSet, cfg: ScenarioConfig) -> None:
    """Raise :class:`ModelError` if the channel arrays do not match ``cfg``."""
    if cfg.two_hop:
        if ch.H_RB is None or ch.H_MR is None:
            raise ModelError("two-hop scenario needs H_RB and H_MR")
        if ch.H_RB.shape != (cfg.R, cfg.K, cfg.N_R, cfg.N_B):
            raise ModelError(f"H_RB has shape {ch.H_RB.shape}")
        if ch.H_MR.shape != (cfg.n_ms, cfg.R, cfg.N_M, cfg.N_R):
            raise ModelError(f"H_MR has shape {ch.H_MR.shape}")
    else:
        if ch.H_MB is None:
            raise ModelError("single-hop scenario needs H_MB")
        if ch.H_MB.shape != (cfg.n_ms, cfg.K, cfg.N_M, cfg.N_B):
            raise ModelError(f"H_MB has shape {ch.H_MB.shape}")


def relay_gains(G: np.ndarray, ch: ChannelSet) -> np.ndarray:
    """``H_MR[m, r] @ G[r]`` for all ``(m, r)``; shape ``(KM, R, N_M, N_R)``."""
    return np.einsum("mrab,rbc->mrac", ch.H_MR, G)


def end_to_end(G: np.ndarray, ch: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    """End-to-end channel from BS ``l`` to MS ``m``; shape ``(KM, K, N_M, N_B)``.

    Two-hop: ``sum_r H_MR[m, r] G[r] H_RB[r, l]``. Single-hop: ``H_MB``.
    """
    if cfg.two_hop:
        return np.einsum("mrac,rlcd->mlad", relay_gains(G, ch), ch.H_RB)
    return ch.H_MB


def stream_mask(cfg: ScenarioConfig) -> np.ndarray:
    """Boolean ``(KM, K, M)`` array, False only at each MS's own stream."""
    mask = np.ones((cfg.n_ms, cfg.K, cfg.M), dtype=bool)
    m = np.arange(cfg.n_ms)
    mask[m, cfg.ms_cells(), cfg.ms_columns()] = False
    return mask


def all_link_stats(state: SystemState, ch: ChannelSet, cfg: ScenarioConfig):
    """Useful links and covariances of all MSs at once.

    Returns
    -------
    q : ndarray, shape (KM, N_M)
    Z : ndarray, shape (KM, N_M, N_M)
    """
    state.check(cfg)
    check_channels(ch, cfg)
    F = end_to_end(state.G, ch, cfg)
    # E[m, l, :, j]: received image of stream j of BS l at MS m
    E = np.einsum("mlab,lbj->mlaj", F, state.V)
    m = np.arange(cfg.n_ms)
    q = E[m, cfg.ms_cells(), :, cfg.ms_columns()]
    E = E * stream_mask(cfg)[:, :, None, :]
    Z = cfg.P_d * np.einsum("mlaj,mlbj->mab", E, E.conj())
    if cfg.two_hop:
        A = relay_gains(state.G, ch)
        Z = Z + cfg.sigma2 * np.einsum("mrac,mrbc->mab", A, A.conj())
    Z = Z + cfg.sigma2 * np.eye(cfg.N_M)
    return q, Z


def link_stats(m: int, state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> LinkStats:
    """Useful link and interference-plus-noise covariance of MS ``m``."""
    if not 0 <= m < cfg.n_ms:
        raise IndexError(f"MS index {m} out of range [0, {cfg.n_ms})")
    q, Z = all_link_stats(state, ch, cfg)
    return LinkStats(q=q[m], Z=Z[m])


def sinrs(state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    """SINR of every MS. An all-zero receive filter gives SINR 0."""
    q, Z = all_link_stats(state, ch, cfg)
    U = state.U
    useful = cfg.P_d * np.abs(np.einsum("ma,ma->m", U.conj(), q)) ** 2
    noise = np.einsum("ma,mab,mb->m", U.conj(), Z, U).real
    out = np.zeros(cfg.n_ms)
    nz = noise > 0
    out[nz] = useful[nz] / noise[nz]
    return out


def sinr(m: int, state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """SINR of MS ``m``."""
    if not 0 <= m < cfg.n_ms:
        raise IndexError(f"MS index {m} out of range [0, {cfg.n_ms})")
    return float(sinrs(state, ch, cfg)[m])


def sum_rate(state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """Sum of ``log2(1 + SINR)`` over all MSs, in bits per channel use."""
    return float(np.sum(np.log2(1.0 + sinrs(state, ch, cfg))))


def slot_factor(cfg: ScenarioConfig) -> float:
    """Time slots per transmission: 2 for half-duplex relaying, else 1."""
    return 2.0 if cfg.two_hop else 1.0


def sum_rate_per_slot(state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """Sum rate divided by the number of time slots the transmission uses."""
    return sum_rate(state, ch, cfg) / slot_factor(cfg)


def bs_power(V: np.ndarray, cfg: ScenarioConfig) -> float:
    """Sum transmit power of all BSs, ``P_d * sum_k tr(V_k V_k^H)``."""
    return float(cfg.P_d * np.sum(np.abs(V) ** 2))


def relay_input_covariance(V: np.ndarray, ch: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    """Covariance of the signal received by every relay; shape ``(R, N_R, N_R)``."""
    HV = np.einsum("rlab,lbj->rlaj", ch.H_RB, V)
    C = cfg.P_d * np.einsum("rlaj,rlbj->rab", HV, HV.conj())
    return C + cfg.sigma2 * np.eye(cfg.N_R)


def relay_power(V: np.ndarray, G: np.ndarray, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """Sum transmit power of all relays, ``sum_r tr(G_r C_r G_r^H)``."""
    if G.shape[0] == 0:
        return 0.0
    C = relay_input_covariance(V, ch, cfg)
    return float(np.einsum("rab,rbc,rac->", G, C, G.conj()).real)
