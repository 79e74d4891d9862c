"""Symbol-level Monte-Carlo simulation of the downlink, used as a test oracle."""

import numpy as np


def _cn(rng, shape, var):
    return np.sqrt(var / 2.0) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate(state, ch, cfg, n_draws, rng):
    """Draw symbols and noise, return symbols, MS receptions and relay transmissions.

    Returns
    -------
    d : (n_draws, K, M) data symbols
    y : (n_draws, KM, N_M) received signals
    s_relay : (n_draws, R, N_R) relay transmit signals (two-hop) or None
    """
    d = _cn(rng, (n_draws, cfg.K, cfg.M), cfg.P_d)
    x = np.einsum("lbj,nlj->nlb", state.V, d)  # BS transmit signals
    if cfg.two_hop:
        y_relay = np.einsum("rlab,nlb->nra", ch.H_RB, x) + _cn(rng, (n_draws, cfg.R, cfg.N_R), cfg.sigma2)
        s_relay = np.einsum("rab,nrb->nra", state.G, y_relay)
        y = np.einsum("mrab,nrb->nma", ch.H_MR, s_relay)
    else:
        s_relay = None
        y = np.einsum("mlab,nlb->nma", ch.H_MB, x)
    y = y + _cn(rng, y.shape, cfg.sigma2)
    return d, y, s_relay


def own_symbols(d, cfg):
    return d[:, cfg.ms_cells(), cfg.ms_columns()]
