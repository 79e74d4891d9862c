"""Exact solvers for the convex blocks of the alternating algorithms.

Receive filters have a closed form. The transmit-filter and relay-matrix
blocks are convex QCQPs with one or two power constraints, solved through
their Lagrangian dual.

Stacking order of the QCQP variables: matrices by index (``k`` or ``r``),
each matrix column-major. :func:`vec_V`/:func:`unvec_V` and
:func:`vec_G`/:func:`unvec_G` implement it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .model import SystemState, all_link_stats, end_to_end, relay_gains, relay_input_covariance
from .scenario import ChannelSet, ScenarioConfig
from .surrogate import LN2, AuxState

MU_MAX = 1e12
MAX_BISECTIONS = 200


class SolverError(ArithmeticError):
    """The dual search failed (no multiplier bracket, or no convergence)."""


@dataclass(frozen=True, eq=False)
class QuadraticForm:
    """``x^H A x - 2 Re(b^H x) + c`` over complex ``x``."""

    A: np.ndarray
    b: np.ndarray | None = None
    c: float = 0.0

    def __call__(self, x: np.ndarray) -> float:
        val = np.vdot(x, self.A @ x).real + self.c
        if self.b is not None:
            val -= 2.0 * np.vdot(self.b, x).real
        return float(val)

    @property
    def dim(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class QcqpProblem:
    """Minimize ``objective(x)`` s.t. ``constraint(x) <= budget`` for each pair.

    Constraints are homogeneous PSD quadratics with positive budgets, so
    ``x = 0`` is strictly feasible.
    """

    objective: QuadraticForm
    constraints: list = field(default_factory=list)

    def __post_init__(self):
        if not 1 <= len(self.constraints) <= 2:
            raise ValueError("expected one or two constraints")
        for form, budget in self.constraints:
            if form.b is not None and np.any(form.b != 0):
                raise ValueError("constraints must not have a linear term")
            if not budget > 0:
                raise ValueError(f"constraint budget must be positive, got {budget}")


@dataclass(frozen=True, eq=False)
class QcqpResult:
    x: np.ndarray
    mu: np.ndarray
    rounds: int = 0


class _Pencil:
    """Simultaneous diagonalization of ``(M0, Ai)`` for a 1-D dual search.

    With ``S = M0 + Ai = W^-H W^-1`` and ``W^H Ai W = diag(d)``, the system
    ``(M0 + mu Ai) x = b`` becomes diagonal: ``x = W beta / (1 + (mu-1) d)``.
    """

    def __init__(self, M0, Ai, b):
        S = M0 + Ai
        scale = max(np.trace(S).real / S.shape[0], 1e-300)
        try:
            d, W = scipy.linalg.eigh(Ai, S, check_finite=False)
        except np.linalg.LinAlgError:
            # S singular: directions free of both forms; regularize lightly
            d, W = scipy.linalg.eigh(Ai, S + 1e-13 * scale * np.eye(S.shape[0]), check_finite=False)
        self.d = np.clip(d, 0.0, 1.0)
        self.W = W
        beta = W.conj().T @ b
        self.p = np.abs(beta) ** 2
        self.beta = beta

        self._num1 = self.d * self.p
        self._num2 = self.d * self._num1
        self._act = self._num1 > 0

    def denom(self, mu):
        return 1.0 + (mu - 1.0) * self.d

    def h(self, mu):
        """Constraint value at the minimizer for multiplier ``mu``."""
        return self.h_dh(mu)[0]

    def h_dh(self, mu):
        """Constraint value and its derivative with respect to ``mu``."""
        den = self.denom(mu)[self._act]
        if den.size and den.min() <= 0:
            return np.inf, -np.inf
        inv = 1.0 / den
        inv2 = inv * inv
        return float(self._num1[self._act] @ inv2), float(-2.0 * (self._num2[self._act] @ (inv2 * inv)))

    def x(self, mu):
        den = self.denom(mu)
        coef = np.zeros_like(self.beta)
        ok = den > 0
        coef[ok] = self.beta[ok] / den[ok]
        return self.W @ coef


def _search_mu(pencil: _Pencil, budget: float, tol: float, mu0: float | None = None) -> float:
    """Smallest ``mu >= 0`` whose minimizer meets ``h(mu) <= budget``.

    ``h`` decreases monotonically in ``mu`` and ``h^-1/2`` is concave, so
    Newton steps on ``h^-1/2 - budget^-1/2`` converge fast; they are
    safeguarded by bisection inside the current bracket.
    """
    if pencil.h(0.0) <= budget * (1.0 + tol):
        return 0.0
    lo, hi = 0.0, np.inf
    target = budget**-0.5
    mu = mu0 if mu0 is not None and mu0 > 0 else 0.0
    for _ in range(MAX_BISECTIONS):
        h, dh = pencil.h_dh(mu)
        if h <= budget * (1.0 + tol) and h >= budget * (1.0 - tol):
            return mu
        if h > budget:
            lo = mu
        else:
            hi = mu
        step = None
        if np.isfinite(h) and h > 0 and dh < 0:
            step = mu - (h**-0.5 - target) / (0.5 * h**-1.5 * -dh)
        if step is None or not lo < step < hi:
            step = 0.5 * (lo + hi) if np.isfinite(hi) else max(2.0 * lo, 1.0)
        if step > MU_MAX:
            raise SolverError("no multiplier bracket below mu_max")
        if np.isfinite(hi) and hi - lo <= 1e-15 * hi:
            break
        mu = step
    if not np.isfinite(hi):
        raise SolverError("multiplier search did not converge")
    return hi


def _solve_1d(M0, Ai, b, budget, tol, mu0=None):
    pencil = _Pencil(M0, Ai, b)
    mu = _search_mu(pencil, budget, tol, mu0)
    return mu, pencil.x(mu)


def _unconstrained(A, b):
    """Minimum-norm minimizer of ``x^H A x - 2 Re(b^H x)``, or None if unbounded."""
    lam, Q = np.linalg.eigh(A)
    beta = Q.conj().T @ b
    cutoff = 1e-12 * max(abs(lam).max(), 1e-300)
    small = lam <= cutoff
    if np.any(np.abs(beta[small]) > 1e-12 * max(np.linalg.norm(b), 1e-300)):
        return None
    coef = np.zeros_like(beta)
    coef[~small] = beta[~small] / lam[~small]
    return Q @ coef


def _solve_2d(A, forms, b, budgets, tol, mu0):
    """Two constraints: exact ``mu_1`` inside a root search over ``mu_2``.

    With ``mu_1`` maximized out, the dual is concave in ``mu_2`` with
    derivative ``c_2(x) - budget_2``, which is therefore nonincreasing; the
    root is bracketed by geometric expansion and located by bisection with
    secant steps.
    """
    F1, F2 = forms
    P1, P2 = budgets
    hint1 = mu0[0] if mu0 is not None else None
    calls = 0

    def inner(mu2):
        nonlocal hint1, calls
        calls += 1
        mu1, x = _solve_1d(A + mu2 * F2, F1, b, P1, tol, hint1)
        hint1 = mu1
        return mu1, x, np.vdot(x, F2 @ x).real - P2

    mu1, x, phi = inner(0.0)
    if phi <= tol * P2:
        return np.array([mu1, 0.0]), x, calls

    lo, phi_lo = 0.0, phi
    hi, phi_hi = None, None
    guess = mu0[1] if mu0 is not None and mu0[1] > 0 else 1.0
    # a warm start is usually close to the root: probe a narrow bracket first
    mu1, x, phi = inner(guess)
    if phi > 0:
        lo, phi_lo = guess, phi
        step = 1.05
        while phi > 0:
            mu2 = lo * step
            if mu2 > MU_MAX:
                raise SolverError("no relay multiplier bracket below mu_max")
            mu1, x, phi = inner(mu2)
            if phi > 0:
                lo, phi_lo = mu2, phi
            step = step * step
        hi, phi_hi = mu2, phi
    else:
        hi, phi_hi = guess, phi
        if phi < -tol * P2:
            mu1b, xb, phib = inner(guess / 1.05)
            if phib > 0:
                lo, phi_lo = guess / 1.05, phib
            else:
                hi, phi_hi, mu1, x = guess / 1.05, phib, mu1b, xb
    best = (hi, mu1, x, phi_hi)
    if phi_hi >= -tol * P2:
        return np.array([mu1, hi]), x, calls

    side = 0
    for _ in range(MAX_BISECTIONS):
        # regula falsi with the Illinois modification
        mu2 = hi - phi_hi * (hi - lo) / (phi_hi - phi_lo)
        if not lo < mu2 < hi:
            mu2 = 0.5 * (lo + hi)
        mu1, x, phi = inner(mu2)
        if phi > 0:
            lo, phi_lo = mu2, phi
            if side == -1:
                phi_hi *= 0.5
            side = -1
        else:
            hi, phi_hi = mu2, phi
            best = (mu2, mu1, x, phi)
            if side == 1:
                phi_lo *= 0.5
            side = 1
        if abs(phi) <= tol * P2:
            return np.array([mu1, mu2]), x, calls
        if hi - lo <= 1e-15 * hi:
            break
    mu2, mu1, x, _ = best
    return np.array([mu1, mu2]), x, calls


def qcqp_solve(p: QcqpProblem, tol: float = 1e-10, mu0=None) -> QcqpResult:
    """Solve a convex QCQP with one or two constraints through its dual.

    The unconstrained minimizer is returned when it is feasible. With one
    active constraint the multiplier is found by a 1-D search on the
    monotone constraint value. With two constraints the first multiplier
    is solved exactly inside a root search over the second one. Every
    returned multiplier has relative complementary slackness below ``tol``.

    ``mu0`` optionally warm-starts the multipliers (original units). The
    problem is rescaled internally so that the multipliers are of order
    one; the returned ``mu`` is in the original units.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = p.objective.A
    b = p.objective.b if p.objective.b is not None else np.zeros(p.objective.dim, dtype=complex)
    lam = np.linalg.eigvalsh(A)
    if lam[0] < -1e-9 * max(abs(lam[-1]), 1e-300):
        raise SolverError(f"objective matrix is not PSD (min eigenvalue {lam[0]:.3e})")

    form_scale = np.array([max(np.linalg.eigvalsh(c.A)[-1], 1e-300) for c, _ in p.constraints])
    forms = [c.A / a for (c, _), a in zip(p.constraints, form_scale)]
    budgets = np.array([budget for _, budget in p.constraints], dtype=float) / form_scale
    obj_scale = max(lam[-1], np.linalg.norm(b) / np.sqrt(budgets.min()), 1e-300)
    A = A / obj_scale
    b = b / obj_scale
    if mu0 is not None:
        mu0 = np.asarray(mu0, dtype=float) * form_scale / obj_scale

    def result(x, mu, rounds):
        return QcqpResult(x=x, mu=np.asarray(mu) * obj_scale / form_scale, rounds=rounds)

    x = _unconstrained(A, b)
    if x is not None:
        vals = np.array([np.vdot(x, Ai @ x).real for Ai in forms])
        if np.all(vals <= budgets * (1.0 + tol)):
            return result(x, np.zeros(len(forms)), 0)

    if len(forms) == 1:
        mu, x = _solve_1d(A, forms[0], b, budgets[0], tol, None if mu0 is None else mu0[0])
        return result(x, [mu], 1)
    mu, x, calls = _solve_2d(A, forms, b, budgets, tol, mu0)
    return result(x, mu, calls)


# --------------------------------------------------------------------------
# Receive filters
# --------------------------------------------------------------------------

def mmse_receivers(state: SystemState, aux: AuxState, ch: ChannelSet, cfg: ScenarioConfig) -> np.ndarray:
    """Receive filters minimizing ``g`` of every MS for the current ``w``.

    ``u = (P_d q q^H + Z)^-1 P_d conj(w) q``.
    """
    q, Z = all_link_stats(state, ch, cfg)
    R = cfg.P_d * np.einsum("ma,mb->mab", q, q.conj()) + Z
    rhs = cfg.P_d * np.conj(aux.w)[:, None] * q
    return np.linalg.solve(R, rhs[..., None])[..., 0]


# --------------------------------------------------------------------------
# Stacking helpers
# --------------------------------------------------------------------------

def vec_V(V: np.ndarray) -> np.ndarray:
    return V.transpose(0, 2, 1).reshape(-1)


def unvec_V(x: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    return x.reshape(cfg.K, cfg.M, cfg.N_B).transpose(0, 2, 1).copy()


def vec_G(G: np.ndarray) -> np.ndarray:
    return G.transpose(0, 2, 1).reshape(-1)


def unvec_G(x: np.ndarray, cfg: ScenarioConfig) -> np.ndarray:
    return x.reshape(cfg.R, cfg.N_R, cfg.N_R).transpose(0, 2, 1).copy()


def _noise_terms(state, ch, cfg):
    """MS-noise plus forwarded relay noise seen through each ``u``."""
    U = state.U
    noise = cfg.sigma2 * np.sum(np.abs(U) ** 2, axis=1)
    if cfg.two_hop:
        Bm = relay_gains(state.G, ch)  # (KM, R, N_M, N_R)
        proj = np.einsum("mrac,ma->mrc", Bm.conj(), U)
        noise = noise + cfg.sigma2 * np.sum(np.abs(proj) ** 2, axis=(1, 2))
    return noise


def _weights(aux: AuxState) -> np.ndarray:
    return np.asarray(aux.t, dtype=float) / LN2


# --------------------------------------------------------------------------
# Transmit-filter block
# --------------------------------------------------------------------------

def v_leakage_vectors(state, ch, cfg):
    """``F[m, l]^H u_m`` for all ``(m, l)``; shape ``(KM, K, N_B)``.

    ``u_m^H F[m, l] v`` equals ``f^H v`` for the returned ``f``.
    """
    F = end_to_end(state.G, ch, cfg)
    return np.einsum("mlab,ma->mlb", F.conj(), state.U)


def assemble_V_problem(state: SystemState, aux: AuxState, ch: ChannelSet, cfg: ScenarioConfig) -> QcqpProblem:
    """Weighted MSE ``sum_m t_m / ln2 * g_m`` as a QCQP over ``vec_V(V)``.

    Raises
    ------
    ValueError
        In two-hop mode, if the relays already spend their whole budget on
        forwarded noise (:func:`relay_signal_budget` is not positive).
    """
    K, M, N_B = cfg.K, cfg.M, cfg.N_B
    c_m = _weights(aux)
    w = np.asarray(aux.w)
    f = v_leakage_vectors(state, ch, cfg)
    # identical N_B x N_B block for every column of BS l
    blocks = cfg.P_d * np.einsum("m,mla,mlb->lab", c_m, f, f.conj())
    n = K * M * N_B
    A = np.zeros((n, n), dtype=complex)
    for l in range(K):
        for j in range(M):
            s = (l * M + j) * N_B
            A[s:s + N_B, s:s + N_B] = blocks[l]
    b = np.zeros(n, dtype=complex)
    cells, cols = cfg.ms_cells(), cfg.ms_columns()
    for m in range(cfg.n_ms):
        s = (cells[m] * M + cols[m]) * N_B
        b[s:s + N_B] += c_m[m] * cfg.P_d * w[m] * f[m, cells[m]]
    c = float(np.sum(c_m * (cfg.P_d * np.abs(w) ** 2 + _noise_terms(state, ch, cfg))))
    objective = QuadraticForm(A=A, b=b, c=c)

    constraints = [(QuadraticForm(A=cfg.P_d * np.eye(n, dtype=complex)), cfg.P_B)]
    if cfg.two_hop:
        constraints.append(relay_constraint_V(state.G, ch, cfg))
    return QcqpProblem(objective=objective, constraints=constraints)


def relay_signal_budget(G, cfg) -> float:
    """Relay budget left for forwarded signals once the forwarded noise is paid."""
    return cfg.P_R - cfg.sigma2 * float(np.sum(np.abs(G) ** 2))


def relay_constraint_V(G, ch, cfg):
    """Relay power as a quadratic in ``vec_V(V)`` with the noise part moved
    to the budget (see :func:`relay_signal_budget`).
    """
    K, M, N_B = cfg.K, cfg.M, cfg.N_B
    GH = np.einsum("rab,rlbc->rlac", G, ch.H_RB)
    blocks = cfg.P_d * np.einsum("rlac,rlad->lcd", GH.conj(), GH)
    n = K * M * N_B
    A2 = np.zeros((n, n), dtype=complex)
    for l in range(K):
        for j in range(M):
            s = (l * M + j) * N_B
            A2[s:s + N_B, s:s + N_B] = blocks[l]
    return QuadraticForm(A=A2), relay_signal_budget(G, cfg)


# --------------------------------------------------------------------------
# Relay block
# --------------------------------------------------------------------------

def g_link_vectors(state, ch, cfg):
    """Vectors ``f`` with ``u_m^H sum_r H_MR G_r H_RB v_(l,j) = f^H vec_G(G)``.

    Returns
    -------
    f : ndarray, shape (KM, K, M, R * N_R**2)
    a : ndarray, shape (KM, R, N_R)
        ``H_MR[m, r]^H u_m``, used for the forwarded relay noise.
    """
    a = np.einsum("mrab,ma->mrb", ch.H_MR.conj(), state.U)
    Bv = np.einsum("rlab,lbj->rlja", ch.H_RB, state.V)  # (R, K, M, N_R)
    # vec index within relay r: col * N_R + row; entry conj(Bv[col]) * a[row]
    f = np.einsum("rljc,mra->mljrca", Bv.conj(), a)
    return f.reshape(cfg.n_ms, cfg.K, cfg.M, -1), a


def assemble_G_problem(state: SystemState, aux: AuxState, ch: ChannelSet, cfg: ScenarioConfig) -> QcqpProblem:
    """Weighted MSE ``sum_m t_m / ln2 * g_m`` as a QCQP over ``vec_G(G)``."""
    if not cfg.two_hop:
        raise ValueError("the relay block only exists in two-hop mode")
    R, N = cfg.R, cfg.N_R
    c_m = _weights(aux)
    w = np.asarray(aux.w)
    f, a = g_link_vectors(state, ch, cfg)
    A = cfg.P_d * np.einsum("m,mljx,mljy->xy", c_m, f, f.conj())
    # forwarded relay noise: sigma2 * sum_r ||G_r^H a_r||^2 -> I (x) a a^H per relay
    aa = cfg.sigma2 * np.einsum("m,mra,mrb->rab", c_m, a, a.conj())
    eye = np.eye(N)
    for r in range(R):
        s = r * N * N
        A[s:s + N * N, s:s + N * N] += np.kron(eye, aa[r])
    m = np.arange(cfg.n_ms)
    own = f[m, cfg.ms_cells(), cfg.ms_columns()]
    b = cfg.P_d * np.einsum("m,mx->x", c_m * w, own)
    U = state.U
    c = float(np.sum(c_m * (cfg.P_d * np.abs(w) ** 2 + cfg.sigma2 * np.sum(np.abs(U) ** 2, axis=1))))
    objective = QuadraticForm(A=A, b=b, c=c)
    return QcqpProblem(objective=objective, constraints=[relay_constraint_G(state.V, ch, cfg)])


def relay_constraint_G(V, ch, cfg):
    """Relay power ``sum_r tr(G_r C_r G_r^H)`` as a quadratic in ``vec_G(G)``."""
    R, N = cfg.R, cfg.N_R
    C = relay_input_covariance(V, ch, cfg)
    A = np.zeros((R * N * N, R * N * N), dtype=complex)
    eye = np.eye(N)
    for r in range(R):
        s = r * N * N
        A[s:s + N * N, s:s + N * N] = np.kron(C[r].T, eye)
    return QuadraticForm(A=A), cfg.P_R
