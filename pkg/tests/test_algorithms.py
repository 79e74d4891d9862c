import numpy as np
import pytest

from conftest import scalar_single_user
from sumrate.algorithms import (
    ALGORITHMS,
    RunOptions,
    ia_leakage_min,
    initial_state,
    maximize_sum_rate,
    minimize_sum_mse,
    normalized_leakage,
    sum_mse,
    total_leakage,
)
from sumrate.model import ModelError, bs_power, relay_power, sinrs, sum_rate
from sumrate.scenario import REFERENCE_SCENARIO, SINGLE_HOP, ScenarioConfig, apply_psnr, draw_channels
from sumrate.surrogate import b_from, g_from, projections, update_w

CFG = apply_psnr(REFERENCE_SCENARIO, 30.0, 0.5)


@pytest.fixture(scope="module")
def runs():
    """A few short runs of every algorithm on the reference scenario."""
    out = {}
    for seed in (1, 2):
        ch = draw_channels(CFG, seed)
        opts = RunOptions(max_iters=60, init_seed=seed)
        out[seed] = (ch, {name: alg(ch, CFG, opts) for name, alg in ALGORITHMS.items()})
    return out


class TestOptions:
    @pytest.mark.parametrize("kwargs", [{"epsilon": 0.0}, {"epsilon": -1.0}, {"max_iters": 0}])
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            RunOptions(**kwargs)


class TestInitialState:
    def test_full_power(self):
        ch = draw_channels(CFG, 0)
        state = initial_state(ch, CFG, 5)
        assert bs_power(state.V, CFG) == pytest.approx(CFG.P_B)
        assert relay_power(state.V, state.G, ch, CFG) == pytest.approx(CFG.P_R)
        np.testing.assert_allclose(np.linalg.norm(state.U, axis=1), 1.0)

    def test_seeded(self):
        ch = draw_channels(CFG, 0)
        a, b = initial_state(ch, CFG, 5), initial_state(ch, CFG, 5)
        assert np.array_equal(a.V, b.V) and np.array_equal(a.G, b.G) and np.array_equal(a.U, b.U)
        assert not np.array_equal(a.V, initial_state(ch, CFG, 6).V)


class TestSingleUser:
    @pytest.mark.parametrize("name", sorted(ALGORITHMS))
    def test_scalar_capacity(self, name):
        cfg, ch = scalar_single_user(P_B=4.0)
        result = ALGORITHMS[name](ch, cfg, RunOptions())
        assert result.converged
        assert result.final_rate_per_slot == pytest.approx(np.log2(5.0), abs=1e-3)
        assert abs(result.final_state.V[0, 0, 0]) ** 2 == pytest.approx(4.0, rel=1e-6)
        assert sinrs(result.final_state, ch, cfg)[0] == pytest.approx(4.0, rel=1e-3)

    @pytest.mark.parametrize("name", ["maxsr", "summse"])
    def test_mimo_capacity_with_one_stream(self, name):
        cfg = ScenarioConfig(K=1, M=1, N_B=3, N_M=2, P_B=4.0, mode=SINGLE_HOP)
        ch = draw_channels(cfg, 0)
        top = np.linalg.svd(ch.H_MB[0, 0], compute_uv=False)[0]
        result = ALGORITHMS[name](ch, cfg, RunOptions(epsilon=1e-10))
        assert result.final_rate_per_slot == pytest.approx(np.log2(1 + cfg.P_B * top**2 / cfg.sigma2), abs=1e-3)

    def test_ia_without_interference(self):
        cfg = ScenarioConfig(K=1, M=1, N_B=3, N_M=2, P_B=4.0, mode=SINGLE_HOP)
        ch = draw_channels(cfg, 0)
        result = ia_leakage_min(ch, cfg, RunOptions())
        assert result.iterations_used == 1 and result.converged
        assert total_leakage(result.final_state, ch, cfg) == 0.0
        assert np.linalg.norm(result.final_state.U[0]) == pytest.approx(1.0)


class TestMonotonicity:
    def test_maxsr_objective_never_drops(self, runs):
        for _, results in runs.values():
            assert np.diff(results["maxsr"].objective_trace()).min() >= -1e-8

    def test_summse_objective_never_rises(self, runs):
        for _, results in runs.values():
            assert np.diff(results["summse"].objective_trace()).max() <= 1e-8

    def test_ia_objective_never_rises(self, runs):
        for _, results in runs.values():
            trace = results["ia"].objective_trace()
            assert np.diff(trace).max() <= 1e-8 * max(1.0, trace[0])

    def test_single_hop_maxsr(self, single_hop_cfg):
        ch = draw_channels(single_hop_cfg, 3)
        result = maximize_sum_rate(ch, single_hop_cfg, RunOptions(max_iters=200, init_seed=3))
        assert np.diff(result.objective_trace()).min() >= -1e-8
        assert result.final_state.G.shape[0] == 0
        assert result.final_rate_per_slot == pytest.approx(sum_rate(result.final_state, ch, single_hop_cfg))


class TestFeasibility:
    @pytest.mark.parametrize("name", sorted(ALGORITHMS))
    def test_budgets_every_iteration(self, runs, name):
        for _, results in runs.values():
            for rec in results[name].trace:
                assert rec.bs_power <= CFG.P_B * (1 + 1e-6)
                assert rec.relay_power <= CFG.P_R * (1 + 1e-6)

    def test_rates_finite_nonnegative(self, runs):
        for _, results in runs.values():
            for result in results.values():
                rates = result.rate_trace()
                assert np.all(np.isfinite(rates)) and np.all(rates >= 0)


class TestTraces:
    def test_records(self, runs):
        for _, results in runs.values():
            for result in results.values():
                assert [rec.iteration for rec in result.trace] == list(range(result.iterations_used + 1))
                for rec in result.trace:
                    assert rec.rate_per_slot == pytest.approx(rec.sum_rate / 2)

    def test_final_state_matches_trace(self, runs):
        for ch, results in runs.values():
            for result in results.values():
                assert sum_rate(result.final_state, ch, CFG) / 2 == pytest.approx(result.final_rate_per_slot, rel=1e-9)

    def test_summse_trace_is_the_sum_mse(self, runs):
        ch, results = runs[1]
        result = results["summse"]
        assert result.objective_trace()[-1] == pytest.approx(sum_mse(result.final_state, ch, CFG), rel=1e-12)

    def test_ia_trace_is_normalized_leakage(self, runs):
        ch, results = runs[1]
        result = results["ia"]
        assert result.objective_trace()[-1] == pytest.approx(normalized_leakage(result.final_state, ch, CFG), rel=1e-9)

    def test_compact_trace(self):
        ch = draw_channels(CFG, 1)
        full = maximize_sum_rate(ch, CFG, RunOptions(max_iters=15, init_seed=1))
        compact = maximize_sum_rate(ch, CFG, RunOptions(max_iters=15, init_seed=1, record_trace=False))
        assert len(compact.trace) == 2
        assert compact.trace[-1] == full.trace[-1]


class TestConsistency:
    def test_auxiliaries_optimal_at_exit(self):
        ch = draw_channels(CFG, 4)
        opts = RunOptions(max_iters=3000, epsilon=1e-4, init_seed=4)
        result = maximize_sum_rate(ch, CFG, opts)
        a, n = projections(result.final_state, ch, CFG)
        b_exit = b_from(a, n, result.final_aux.w, result.final_aux.t, CFG.P_d)
        w, _ = update_w(a, n, result.final_aux.w, CFG.P_d)
        t = 1.0 / g_from(a, n, w, CFG.P_d)
        assert abs(b_from(a, n, w, t, CFG.P_d) - b_exit) <= opts.epsilon

    @pytest.mark.parametrize("name", sorted(ALGORITHMS))
    def test_deterministic(self, name):
        ch = draw_channels(CFG, 8)
        opts = RunOptions(max_iters=20, init_seed=8)
        a, b = ALGORITHMS[name](ch, CFG, opts), ALGORITHMS[name](ch, CFG, opts)
        assert np.array_equal(a.objective_trace(), b.objective_trace())
        assert np.array_equal(a.rate_trace(), b.rate_trace())

    def test_mismatched_channels(self):
        other = ScenarioConfig(**{**CFG.__dict__, "R": 3})
        with pytest.raises(ModelError):
            maximize_sum_rate(draw_channels(other, 0), CFG, RunOptions(max_iters=2))
