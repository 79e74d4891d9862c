"""Iterative drivers: sum rate maximization and the two baselines.

All three algorithms start from the same random, power-feasible point
(see :func:`initial_state`) so that runs sharing ``init_seed`` and a
channel snapshot are directly comparable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import (
    SystemState,
    all_link_stats,
    bs_power,
    check_channels,
    empty_relays,
    end_to_end,
    relay_power,
    slot_factor,
    stream_mask,
)
from .scenario import ChannelSet, ScenarioConfig
from .subsolvers import (
    assemble_G_problem,
    assemble_V_problem,
    g_link_vectors,
    mmse_receivers,
    qcqp_solve,
    relay_constraint_G,
    relay_signal_budget,
    unvec_G,
    unvec_V,
    v_leakage_vectors,
)
from .surrogate import AuxState, b_from, g_from, projections, update_w

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunOptions:
    """Stopping rule and seeding of one run.

    ``epsilon`` bounds the change of the tracked objective between two
    iterations (``b``, sum MSE or leakage depending on the algorithm).
    """

    epsilon: float = 1e-4
    max_iters: int = 500
    init_seed: int = 0
    record_trace: bool = True

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    sum_rate: float
    rate_per_slot: float
    bs_power: float
    relay_power: float


@dataclass
class RunResult:
    algorithm: str
    final_state: SystemState
    final_aux: AuxState
    trace: list = field(default_factory=list)
    iterations_used: int = 0
    converged: bool = False

    @property
    def final_rate_per_slot(self) -> float:
        return self.trace[-1].rate_per_slot

    def objective_trace(self) -> np.ndarray:
        return np.array([rec.objective for rec in self.trace])

    def rate_trace(self) -> np.ndarray:
        return np.array([rec.rate_per_slot for rec in self.trace])


def _cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def initial_state(ch: ChannelSet, cfg: ScenarioConfig, seed: int) -> SystemState:
    """Random start: unit-norm receive filters, full-power ``V`` and ``G``."""
    check_channels(ch, cfg)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    U = _cgauss(rng, (cfg.n_ms, cfg.N_M))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    V = _cgauss(rng, (cfg.K, cfg.N_B, cfg.M))
    V *= np.sqrt(cfg.P_B / bs_power(V, cfg))
    if cfg.two_hop:
        G = _cgauss(rng, (cfg.R, cfg.N_R, cfg.N_R))
        G *= np.sqrt(cfg.P_R / relay_power(V, G, ch, cfg))
    else:
        G = empty_relays(cfg)
    return SystemState(V=V, G=G, U=U)


def _record(it, objective, state, ch, cfg, a=None, n=None):
    if a is None:
        a, n = projections(state, ch, cfg)
    gamma = np.where(n > 0, cfg.P_d * np.abs(a) ** 2 / np.where(n > 0, n, 1.0), 0.0)
    rate = float(np.sum(np.log2(1.0 + gamma)))
    return TraceRecord(
        iteration=it,
        objective=float(objective),
        sum_rate=rate,
        rate_per_slot=rate / slot_factor(cfg),
        bs_power=bs_power(state.V, cfg),
        relay_power=relay_power(state.V, state.G, ch, cfg),
    )


def _update_V(state, aux, ch, cfg, hints):
    if cfg.two_hop and relay_signal_budget(state.G, cfg) <= 0:
        # relays already spend the whole budget on forwarded noise
        return state
    problem = assemble_V_problem(state, aux, ch, cfg)
    sol = qcqp_solve(problem, mu0=hints.get("V"))
    hints["V"] = sol.mu
    return state.replace(V=unvec_V(sol.x, cfg))


def _update_G(state, aux, ch, cfg, hints):
    if not cfg.two_hop:
        return state
    problem = assemble_G_problem(state, aux, ch, cfg)
    sol = qcqp_solve(problem, mu0=hints.get("G"))
    hints["G"] = sol.mu
    return state.replace(G=unvec_G(sol.x, cfg))


def _block_pass(state, aux, ch, cfg, hints):
    """One U -> V -> G sweep minimizing ``sum_m t_m g_m`` for fixed ``w, t``.

    ``hints`` carries the multipliers of the previous sweep as warm starts.
    """
    state = state.replace(U=mmse_receivers(state, aux, ch, cfg))
    state = _update_V(state, aux, ch, cfg, hints)
    return _update_G(state, aux, ch, cfg, hints)


def _normalize_scale(state, w, t, a, n):
    """Rescale ``(u_m, w_m, t_m)`` to ``(s u_m, s w_m, t_m / s^2)`` with ``|s w_m| = 1``.

    ``b``, every SINR and the next block updates are invariant under this
    map; it only keeps ``w`` of switched-off MSs (``u^H q -> 0``) from
    overflowing.
    """
    s = 1.0 / np.abs(w)
    state = state.replace(U=state.U * s[:, None])
    return state, AuxState(w=w * s, t=t / s**2), a * s, n * s**2


def maximize_sum_rate(ch: ChannelSet, cfg: ScenarioConfig, opts: RunOptions = RunOptions()) -> RunResult:
    """Alternating maximization of the multi-concave surrogate ``b``.

    Each iteration updates, in order, the receive filters (closed form),
    the transmit filters and the relay matrices (QCQPs), then ``w`` and
    finally ``t = 1 / g(w)``. Since ``max_t b`` is ``sum log2(eta) - KM/ln2``,
    the ``(w, t)`` update maximizes ``b`` jointly and ``b`` never decreases.
    Iteration stops once ``b`` changes by at most ``opts.epsilon``.
    """
    state = initial_state(ch, cfg, opts.init_seed)
    aux = AuxState.ones(cfg.n_ms)
    a, n = projections(state, ch, cfg)
    b_prev = b_from(a, n, aux.w, aux.t, cfg.P_d)
    result = RunResult("maxsr", state, aux)
    result.trace.append(_record(0, b_prev, state, ch, cfg, a, n))

    hints = {}
    for it in range(1, opts.max_iters + 1):
        state = _block_pass(state, aux, ch, cfg, hints)
        a, n = projections(state, ch, cfg)
        # w first, then t for that w: the pair is one exactly maximized block
        w, degenerate = update_w(a, n, aux.w, cfg.P_d)
        t = 1.0 / g_from(a, n, w, cfg.P_d)
        if degenerate.any():
            log.debug("iteration %d: degenerate links at MSs %s", it, np.flatnonzero(degenerate))
        state, aux, a, n = _normalize_scale(state, w, t, a, n)
        b = b_from(a, n, aux.w, aux.t, cfg.P_d)
        rec = _record(it, b, state, ch, cfg, a, n)
        if opts.record_trace or it == 1:
            result.trace.append(rec)
        else:
            result.trace[-1] = rec
        result.iterations_used = it
        if abs(b - b_prev) <= opts.epsilon:
            result.converged = True
            break
        b_prev = b

    result.final_state, result.final_aux = state, aux
    return result


def sum_mse(state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """``sum_m E|d_hat - d|^2``."""
    a, n = projections(state, ch, cfg)
    return float(np.sum(g_from(a, n, 1.0, cfg.P_d)))


def minimize_sum_mse(ch: ChannelSet, cfg: ScenarioConfig, opts: RunOptions = RunOptions()) -> RunResult:
    """Sum-MSE baseline: the same block updates with ``w = t = 1`` held fixed."""
    state = initial_state(ch, cfg, opts.init_seed)
    aux = AuxState.ones(cfg.n_ms)
    a, n = projections(state, ch, cfg)
    mse_prev = float(np.sum(g_from(a, n, 1.0, cfg.P_d)))
    result = RunResult("summse", state, aux)
    result.trace.append(_record(0, mse_prev, state, ch, cfg, a, n))

    hints = {}
    for it in range(1, opts.max_iters + 1):
        state = _block_pass(state, aux, ch, cfg, hints)
        a, n = projections(state, ch, cfg)
        mse = float(np.sum(g_from(a, n, 1.0, cfg.P_d)))
        rec = _record(it, mse, state, ch, cfg, a, n)
        if opts.record_trace or it == 1:
            result.trace.append(rec)
        else:
            result.trace[-1] = rec
        result.iterations_used = it
        if abs(mse - mse_prev) <= opts.epsilon:
            result.converged = True
            break
        mse_prev = mse

    result.final_state = state
    return result


# --------------------------------------------------------------------------
# Interference leakage minimization
# --------------------------------------------------------------------------

def interference_covariances(state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    """Interference-only covariance at every MS (``Z`` without noise terms)."""
    F = end_to_end(state.G, ch, cfg)
    E = np.einsum("mlab,lbj->mlaj", F, state.V) * stream_mask(cfg)[:, :, None, :]
    return cfg.P_d * np.einsum("mlaj,mlbj->mab", E, E.conj())


def total_leakage(state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """``sum_m u_m^H Q_m u_m`` with ``Q_m`` the interference-only covariance."""
    Q = interference_covariances(state, ch, cfg)
    return float(np.einsum("ma,mab,mb->", state.U.conj(), Q, state.U).real)


def total_useful_power(state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """``sum_m P_d |u_m^H q_m|^2``, the noise-free useful power after the receive filters."""
    q, _ = all_link_stats(state, ch, cfg)
    return float(cfg.P_d * np.sum(np.abs(np.einsum("ma,ma->m", state.U.conj(), q)) ** 2))


def normalized_leakage(state: SystemState, ch: ChannelSet, cfg: ScenarioConfig) -> float:
    """Total leakage divided by the total useful power (inf if nothing useful arrives)."""
    S = total_useful_power(state, ch, cfg)
    return total_leakage(state, ch, cfg) / S if S > 0 else np.inf


def _min_ratio(A, B):
    """Unit vector minimizing ``x^H A x / x^H B x`` (A, B Hermitian PSD).

    Solved as the least generalized eigenvector of ``(A, A + B)``, whose
    eigenvalue ``r / (1 + r)`` is increasing in the ratio ``r``; a tiny
    ridge keeps the pencil definite when A and B share a null direction.
    Ties (a repeated least eigenvalue, e.g. when there is no leakage at
    all) are broken towards the largest ``x^H B x``.
    """
    S = A + B
    S = S + 1e-13 * max(np.trace(S).real, 1e-300) * np.eye(len(S))
    vals, vecs = scipy.linalg.eigh(A, S)
    tied = vecs[:, vals <= vals[0] + 1e-10]
    if tied.shape[1] > 1:
        # largest useful power within the tied subspace
        Bt = tied.conj().T @ B @ tied
        St = tied.conj().T @ S @ tied
        _, sub = scipy.linalg.eigh(Bt, St)
        x = tied @ sub[:, -1]
    else:
        x = tied[:, 0]
    return x / np.linalg.norm(x)


def _ia_update_U(state, ch, cfg):
    # per MS in turn, with the other MSs' leakage and useful power as offsets
    q, _ = all_link_stats(state, ch, cfg)
    Q = interference_covariances(state, ch, cfg)
    U = state.U.copy()
    leak = np.einsum("ma,mab,mb->m", U.conj(), Q, U).real
    use = cfg.P_d * np.abs(np.einsum("ma,ma->m", U.conj(), q)) ** 2
    eye = np.eye(cfg.N_M)
    for m in range(cfg.n_ms):
        alpha = leak.sum() - leak[m]
        beta = use.sum() - use[m]
        u = _min_ratio(Q[m] + alpha * eye, cfg.P_d * np.outer(q[m], q[m].conj()) + beta * eye)
        U[m] = u
        leak[m] = np.vdot(u, Q[m] @ u).real
        use[m] = cfg.P_d * abs(np.vdot(u, q[m])) ** 2
    return state.replace(U=U)


def _ia_update_V(state, ch, cfg):
    # per stream in turn, each at the equal share P_B / (K M) of the BS power
    f = v_leakage_vectors(state, ch, cfg)  # u_m^H F[m, l] v = f[m, l]^H v
    owner = np.arange(cfg.n_ms).reshape(cfg.K, cfg.M)
    V = state.V.copy()
    c2 = cfg.P_B / (cfg.P_d * cfg.K * cfg.M)
    eye = np.eye(cfg.N_B)
    # gains[m, l, j] = |f[m, l]^H v_(l, j)|^2
    gains = np.abs(np.einsum("mlb,lbj->mlj", f.conj(), V)) ** 2
    own = np.zeros(gains.shape, dtype=bool)
    own[np.arange(cfg.n_ms), cfg.ms_cells(), cfg.ms_columns()] = True
    for l in range(cfg.K):
        for j in range(cfg.M):
            m0 = owner[l, j]
            others = np.arange(cfg.n_ms) != m0
            alpha = cfg.P_d * (gains[~own].sum() - gains[others, l, j].sum())
            beta = cfg.P_d * (gains[own].sum() - gains[m0, l, j])
            L = cfg.P_d * c2 * np.einsum("ma,mb->ab", f[others, l], f[others, l].conj())
            S = cfg.P_d * c2 * np.outer(f[m0, l], f[m0, l].conj())
            v = np.sqrt(c2) * _min_ratio(L + alpha * eye, S + beta * eye)
            V[l, :, j] = v
            gains[:, l, j] = np.abs(f[:, l].conj() @ v) ** 2
    return state.replace(V=V)


def _ia_update_G(state, ch, cfg):
    f, _ = g_link_vectors(state, ch, cfg)
    own = ~stream_mask(cfg)
    fm = f * (~own)[..., None]
    fo = f * own[..., None]
    A_L = cfg.P_d * np.einsum("mljx,mljy->xy", fm, fm.conj())
    A_S = cfg.P_d * np.einsum("mljx,mljy->xy", fo, fo.conj())
    G = unvec_G(_min_ratio(A_L.conj(), A_S.conj()).conj(), cfg)
    # the ratio is invariant to the scale of G: spend the full relay budget
    return state.replace(G=G * np.sqrt(cfg.P_R / relay_power(state.V, G, ch, cfg)))


def ia_leakage_min(ch: ChannelSet, cfg: ScenarioConfig, opts: RunOptions = RunOptions()) -> RunResult:
    """Alternating minimization of the normalized interference leakage.

    The tracked objective is the total interference leakage (noise-free,
    unit-norm receive filters) divided by the total useful power. Receive
    filters are updated one MS at a time and transmit streams one stream at
    a time (equal power per stream, full BS budget), each as a generalized
    least eigenvector. The relay matrices are the generalized least
    eigenvector of the leakage form against the useful-power form, scaled
    to the full relay budget. Every step minimizes the ratio exactly, so the
    trace never increases.
    """
    state = initial_state(ch, cfg, opts.init_seed)
    aux = AuxState.ones(cfg.n_ms)
    J_prev = normalized_leakage(state, ch, cfg)
    result = RunResult("ia", state, aux)
    result.trace.append(_record(0, J_prev, state, ch, cfg))

    for it in range(1, opts.max_iters + 1):
        state = _ia_update_U(state, ch, cfg)
        state = _ia_update_V(state, ch, cfg)
        if cfg.two_hop:
            state = _ia_update_G(state, ch, cfg)
        J = normalized_leakage(state, ch, cfg)
        rec = _record(it, J, state, ch, cfg)
        if opts.record_trace or it == 1:
            result.trace.append(rec)
        else:
            result.trace[-1] = rec
        result.iterations_used = it
        if abs(J - J_prev) <= opts.epsilon:
            result.converged = True
            break
        J_prev = J

    result.final_state = state
    return result


ALGORITHMS = {
    "maxsr": maximize_sum_rate,
    "summse": minimize_sum_mse,
    "ia": ia_leakage_min,
}
