import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cgauss, random_state, scalar_single_user, scalar_state
from mc_oracle import own_symbols, simulate
from sumrate.model import all_link_stats, sinrs
from sumrate.scenario import REFERENCE_SCENARIO, apply_psnr, draw_channels
from sumrate.surrogate import (
    LN2,
    AuxState,
    DegenerateLinkError,
    b_from,
    b_objective,
    eta,
    g_value,
    projections,
    t_opt,
    update_w,
    w_opt,
)

CFG = apply_psnr(REFERENCE_SCENARIO, 30.0, 0.5)
CH = draw_channels(CFG, 21)


class TestScalarCase:
    # q = 1, Z = 1, u = 1, P_d = 1, so gamma = 1
    cfg, ch = scalar_single_user()
    state = scalar_state()

    def test_g(self):
        assert g_value(0, self.state, self.ch, self.cfg, 1.0) == pytest.approx(1.0)
        assert g_value(0, self.state, self.ch, self.cfg, 2.0) == pytest.approx(2.0)

    def test_eta(self):
        assert eta(0, self.state, self.ch, self.cfg, 0.0) == 0.0
        assert eta(0, self.state, self.ch, self.cfg, 2.0) == pytest.approx(2.0)

    def test_eta_grid_maximum(self):
        re, im = np.meshgrid(np.linspace(-4, 4, 401), np.linspace(-4, 4, 401))
        w = re + 1j * im
        vals = np.abs(w) ** 2 / (np.abs(1 - w) ** 2 + 1)
        best = w.ravel()[np.argmax(vals)]
        assert best == pytest.approx(2.0, abs=0.03)
        assert vals.max() == pytest.approx(2.0, abs=1e-3)

    def test_w_opt(self):
        assert w_opt(0, self.state, self.ch, self.cfg) == pytest.approx(2.0)

    def test_t_opt(self):
        assert t_opt(0, self.state, self.ch, self.cfg, 2.0) == pytest.approx(0.5)
        assert t_opt(0, self.state, self.ch, self.cfg, 1.0) == pytest.approx(1.0)

    def test_b_by_hand(self):
        b = b_objective(self.state, AuxState(w=np.array([2.0 + 0j]), t=np.array([0.5])), self.ch, self.cfg)
        assert b == pytest.approx(2 - 1 - 1 / LN2, abs=1e-12)
        assert b == pytest.approx(-0.4427, abs=1e-4)
        # the same value through the rate: log2(1 + gamma) - KM / ln 2
        assert b == pytest.approx(np.log2(2.0) - 1 / LN2, abs=1e-12)


def test_eta_far_limit(ref_state):
    for m in range(CFG.n_ms):
        val = eta(m, ref_state, CH, CFG, 1e6 * np.exp(0.3j * m))
        assert abs(val - 1.0) <= 1e-3


def test_eta_nonnegative(ref_state, rng):
    for w in cgauss(rng, 50) * 10:
        assert eta(1, ref_state, CH, CFG, w) >= 0


def test_optimal_scale_on_random_states(rng):
    for _ in range(50):
        state = random_state(CFG, rng)
        gamma = sinrs(state, CH, CFG)
        for m in range(CFG.n_ms):
            val = eta(m, state, CH, CFG, w_opt(m, state, CH, CFG))
            assert abs(val - (1 + gamma[m])) <= 1e-9 * (1 + gamma[m])


def test_w_opt_beats_random_probes(ref_state, rng):
    for m in range(CFG.n_ms):
        best = eta(m, ref_state, CH, CFG, w_opt(m, ref_state, CH, CFG))
        wm = w_opt(m, ref_state, CH, CFG)
        probes = wm + abs(wm) * cgauss(rng, 1000) * rng.uniform(0.001, 3, 1000)
        assert all(eta(m, ref_state, CH, CFG, w) <= best * (1 + 1e-12) for w in probes)


def test_eta_at_optimum_ignores_filter_scale(ref_state):
    U = ref_state.U * (0.2 - 3j)
    scaled = ref_state.replace(U=U)
    for m in range(CFG.n_ms):
        a = eta(m, ref_state, CH, CFG, w_opt(m, ref_state, CH, CFG))
        b = eta(m, scaled, CH, CFG, w_opt(m, scaled, CH, CFG))
        assert a == pytest.approx(b, rel=1e-10)


def test_degenerate_link():
    cfg, ch = scalar_single_user()
    with pytest.raises(DegenerateLinkError):
        w_opt(0, scalar_state(u=0.0), ch, cfg)


def test_update_w_keeps_previous_on_degenerate_links():
    a = np.array([1.0 + 0j, 0.0])
    n = np.array([1.0, 1.0])
    w, bad = update_w(a, n, np.array([5.0 + 0j, 7.0 + 1j]), 1.0)
    assert list(bad) == [False, True]
    assert w[0] == pytest.approx(2.0) and w[1] == 7.0 + 1j


def test_identity_with_optimal_t(rng):
    # b at t = 1 / g(w) equals sum log2(eta) - KM / ln 2 for arbitrary w
    for _ in range(50):
        state = random_state(CFG, rng)
        w = cgauss(rng, CFG.n_ms) * rng.uniform(0.01, 10)
        t = np.array([t_opt(m, state, CH, CFG, w[m]) for m in range(CFG.n_ms)])
        etas = np.array([eta(m, state, CH, CFG, w[m]) for m in range(CFG.n_ms)])
        b = b_objective(state, AuxState(w=w, t=t), CH, CFG)
        assert abs(b - (np.sum(np.log2(etas)) - CFG.n_ms / LN2)) <= 1e-9


def test_t_opt_is_stationary(ref_state, rng):
    w = cgauss(rng, CFG.n_ms)
    a, n = projections(ref_state, CH, CFG)
    t = np.array([t_opt(m, ref_state, CH, CFG, w[m]) for m in range(CFG.n_ms)])
    for m in range(CFG.n_ms):
        h = 1e-6 * t[m]
        tp, tm = t.copy(), t.copy()
        tp[m] += h
        tm[m] -= h
        slope = (b_from(a, n, w, tp, CFG.P_d) - b_from(a, n, w, tm, CFG.P_d)) / (2 * h)
        scale = 1 / (t[m] * LN2)  # size of either term of the derivative
        assert abs(slope) < 1e-6 * scale


def test_b_domain_errors(ref_state):
    n = CFG.n_ms
    with pytest.raises(ValueError):
        b_objective(ref_state, AuxState(w=np.ones(n, complex), t=np.zeros(n)), CH, CFG)
    w = np.ones(n, complex)
    w[0] = 0
    with pytest.raises(ValueError):
        b_objective(ref_state, AuxState(w=w, t=np.ones(n)), CH, CFG)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), lam=st.floats(0.01, 0.99))
def test_b_concave_in_t(seed, lam):
    rng = np.random.default_rng(seed)
    state = random_state(CFG, rng)
    a, n = projections(state, CH, CFG)
    w = cgauss(rng, CFG.n_ms)
    t1, t2 = rng.uniform(1e-3, 5, CFG.n_ms), rng.uniform(1e-3, 5, CFG.n_ms)
    mid = b_from(a, n, w, lam * t1 + (1 - lam) * t2, CFG.P_d)
    assert mid >= lam * b_from(a, n, w, t1, CFG.P_d) + (1 - lam) * b_from(a, n, w, t2, CFG.P_d) - 1e-12 * (1 + abs(mid))


def _g_of_u(state, m, u, w):
    U = state.U.copy()
    U[m] = u
    return g_value(m, state.replace(U=U), CH, CFG, w)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), lam=st.floats(0.01, 0.99))
def test_g_convex_in_u(seed, lam):
    rng = np.random.default_rng(seed)
    state = random_state(CFG, rng)
    m, w = int(rng.integers(CFG.n_ms)), complex(*rng.standard_normal(2))
    u1, u2 = cgauss(rng, 2), cgauss(rng, 2)
    mid = _g_of_u(state, m, lam * u1 + (1 - lam) * u2, w)
    assert mid <= lam * _g_of_u(state, m, u1, w) + (1 - lam) * _g_of_u(state, m, u2, w) + 1e-9 * (1 + mid)


def test_g_gradient_matches_finite_difference(ref_state, rng):
    q, Z = all_link_stats(ref_state, CH, CFG)
    for m in range(CFG.n_ms):
        w = complex(*rng.standard_normal(2))
        u = ref_state.U[m]
        a = np.vdot(u, q[m])
        # d g / d conj(u); real gradient over (Re u, Im u) is twice its real and imaginary parts
        wirt = CFG.P_d * q[m] * np.conj(a - w) + Z[m] @ u
        analytic = np.concatenate([2 * wirt.real, 2 * wirt.imag])
        fd = []
        for part in (1.0, 1j):
            for i in range(CFG.N_M):
                e = np.zeros(CFG.N_M, complex)
                e[i] = part
                h = 1e-6 * np.linalg.norm(u)
                fd.append((_g_of_u(ref_state, m, u + h * e, w) - _g_of_u(ref_state, m, u - h * e, w)) / (2 * h))
        np.testing.assert_allclose(fd, analytic, rtol=1e-5, atol=1e-5 * np.linalg.norm(analytic))


def test_g_monte_carlo(rng):
    state = random_state(CFG, np.random.default_rng(11), scale=0.2)
    w = cgauss(rng, CFG.n_ms)
    d, y, _ = simulate(state, CH, CFG, 2 * 10**5, np.random.default_rng(12))
    d_hat = np.einsum("ma,nma->nm", state.U.conj(), y)
    mc = np.mean(np.abs(d_hat - w * own_symbols(d, CFG)) ** 2, axis=0)
    direct = [g_value(m, state, CH, CFG, w[m]) for m in range(CFG.n_ms)]
    np.testing.assert_allclose(mc, direct, rtol=0.01)
