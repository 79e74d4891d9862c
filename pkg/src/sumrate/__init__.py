"""Multi-convex sum rate maximization for multi-cell downlink networks.

The package covers two-hop amplify-and-forward and single-hop downlink
scenarios. The proposed alternating algorithm lives in
:mod:`sumrate.algorithms` together with the sum-MSE and interference
leakage baselines; :mod:`sumrate.harness` drives the Monte-Carlo
experiments.
"""

from .scenario import (
    REFERENCE_SCENARIO,
    SINGLE_HOP,
    TWO_HOP,
    ChannelSet,
    ConfigError,
    ScenarioConfig,
    apply_psnr,
    draw_channels,
    load_config,
    serving_bs,
)
from .model import (
    LinkStats,
    ModelError,
    SystemState,
    bs_power,
    link_stats,
    relay_power,
    sinr,
    sum_rate,
)
from .surrogate import AuxState, b_objective, eta, g_value, t_opt, w_opt
from .subsolvers import QcqpProblem, QuadraticForm, qcqp_solve
from .algorithms import (
    RunOptions,
    RunResult,
    ia_leakage_min,
    maximize_sum_rate,
    minimize_sum_mse,
)

__all__ = [
    "REFERENCE_SCENARIO",
    "SINGLE_HOP",
    "TWO_HOP",
    "AuxState",
    "ChannelSet",
    "ConfigError",
    "LinkStats",
    "ModelError",
    "QcqpProblem",
    "QuadraticForm",
    "RunOptions",
    "RunResult",
    "ScenarioConfig",
    "SystemState",
    "apply_psnr",
    "b_objective",
    "bs_power",
    "draw_channels",
    "eta",
    "g_value",
    "ia_leakage_min",
    "link_stats",
    "load_config",
    "maximize_sum_rate",
    "minimize_sum_mse",
    "qcqp_solve",
    "relay_power",
    "serving_bs",
    "sinr",
    "sum_rate",
    "t_opt",
    "w_opt",
]
