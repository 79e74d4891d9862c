import numpy as np
import pytest

from sumrate.algorithms import initial_state
from sumrate.model import SystemState, empty_relays
from sumrate.scenario import REFERENCE_SCENARIO, SINGLE_HOP, ChannelSet, ScenarioConfig, apply_psnr, draw_channels
from sumrate.surrogate import AuxState


def cgauss(rng, shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def random_state(cfg, rng, scale=1.0):
    """Random filters, not normalized to the budgets."""
    V = scale * cgauss(rng, (cfg.K, cfg.N_B, cfg.M))
    G = cgauss(rng, (cfg.R, cfg.N_R, cfg.N_R)) if cfg.two_hop else empty_relays(cfg)
    U = cgauss(rng, (cfg.n_ms, cfg.N_M))
    return SystemState(V=V, G=G, U=U)


def random_aux(cfg, rng):
    return AuxState(w=cgauss(rng, cfg.n_ms) * 2, t=rng.uniform(0.1, 2.0, cfg.n_ms))


def scalar_single_user(P_B=1.0, P_d=1.0, sigma2=1.0):
    """K = M = 1 single-hop with H = 1."""
    cfg = ScenarioConfig(K=1, M=1, N_B=1, N_M=1, P_d=P_d, P_B=P_B, sigma2=sigma2, mode=SINGLE_HOP)
    ch = ChannelSet(H_RB=None, H_MR=None, H_MB=np.ones((1, 1, 1, 1), dtype=complex), seed=0)
    return cfg, ch


def scalar_state(u=1.0, v=1.0):
    return SystemState(
        V=np.full((1, 1, 1), v, dtype=complex),
        G=np.zeros((0, 1, 1), dtype=complex),
        U=np.full((1, 1), u, dtype=complex),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def ref_cfg():
    return apply_psnr(REFERENCE_SCENARIO, 30.0, 0.5)


@pytest.fixture(scope="session")
def ref_channels(ref_cfg):
    return draw_channels(ref_cfg, 7)


@pytest.fixture
def ref_state(ref_cfg, ref_channels):
    return initial_state(ref_channels, ref_cfg, 3)


@pytest.fixture(scope="session")
def single_hop_cfg():
    return ScenarioConfig(K=2, M=2, N_B=3, N_M=2, P_B=20.0, sigma2=1.0, mode=SINGLE_HOP)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n, ok, detail in sorted(ACCEPTANCE):
            terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
