"""Experiment driver: pseudo-SNR sweeps, convergence curves and rate densities.

Every trial index owns one channel snapshot. All algorithms and all
pseudo-SNR points of that trial use the same channels and the same filter
initialization seed. Results are sorted by ``(psnr, trial, algorithm)``
before anything is written, so the output bytes do not depend on how the
trials were scheduled.
"""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .algorithms import ALGORITHMS, RunOptions
from .scenario import REFERENCE_SCENARIO, ChannelSet, ConfigError, ScenarioConfig, apply_psnr, draw_channels

__all__ = [
    "SweepSpec",
    "TrialOutcome",
    "apply_psnr",
    "trial_seed",
    "run_trials",
    "run_sweep",
    "run_convergence",
    "run_density",
    "histogram",
]

log = logging.getLogger(__name__)

DETAIL_HEADER = ["psnr_db", "algorithm", "trial", "seed", "sum_rate_per_slot", "iterations", "converged", "channel_hash"]
AGGREGATE_HEADER = ["psnr_db", "algorithm", "mean_rate", "std_rate", "n"]
CONVERGENCE_ITERS = 50
BIN_WIDTH = 0.25


@dataclass(frozen=True)
class SweepSpec:
    """What to simulate.

    ``power_split`` is the fraction of the total power given to the BSs in
    two-hop mode. ``workers`` is the size of the process pool (1 runs the
    trials in-process).
    """

    psnr_db_list: tuple = (30.0,)
    trials: int = 200
    algorithms: tuple = ("maxsr", "summse", "ia")
    power_split: float = 0.5
    base: ScenarioConfig = REFERENCE_SCENARIO
    seed: int = 0
    epsilon: float = 1e-4
    max_iters: int = 500
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "psnr_db_list", tuple(float(p) for p in self.psnr_db_list))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        if not self.psnr_db_list:
            raise ConfigError("psnr_db_list", "must not be empty")
        if self.trials < 1:
            raise ConfigError("trials", f"must be >= 1, got {self.trials}")
        if not 0.0 < self.power_split < 1.0:
            raise ConfigError("power_split", f"must lie in (0, 1), got {self.power_split}")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown or not self.algorithms:
            raise ConfigError("algorithms", f"expected a subset of {sorted(ALGORITHMS)}, got {list(self.algorithms)}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("algorithms", "duplicate entries")
        if self.seed < 0:
            raise ConfigError("seed", f"must be non-negative, got {self.seed}")
        if self.workers < 1:
            raise ConfigError("workers", f"must be >= 1, got {self.workers}")
        # validates epsilon and max_iters
        RunOptions(epsilon=self.epsilon, max_iters=self.max_iters)


@dataclass
class TrialOutcome:
    psnr_db: float
    algorithm: str
    trial: int
    seed: int
    channel_hash: str
    sum_rate_per_slot: float
    iterations: int
    converged: bool
    rate_trace: np.ndarray = field(default=None, repr=False)
    objective_trace: np.ndarray = field(default=None, repr=False)
    bs_power_trace: np.ndarray = field(default=None, repr=False)
    relay_power_trace: np.ndarray = field(default=None, repr=False)

    @property
    def key(self):
        return (self.psnr_db, self.trial, self.algorithm)


def trial_seed(seed: int, trial: int) -> int:
    """Seed of the channel snapshot and filter initialization of one trial."""
    return int(np.random.SeedSequence([seed, trial]).generate_state(1, dtype=np.uint64)[0] >> 1)


def _run_one(job):
    cfg, ch, algorithm, psnr_db, trial, seed, opts, keep_traces = job
    result = ALGORITHMS[algorithm](ch, cfg, opts)
    out = TrialOutcome(
        psnr_db=psnr_db,
        algorithm=algorithm,
        trial=trial,
        seed=seed,
        channel_hash=ch.digest(),
        sum_rate_per_slot=result.final_rate_per_slot,
        iterations=result.iterations_used,
        converged=result.converged,
    )
    if keep_traces:
        out.rate_trace = result.rate_trace()
        out.objective_trace = result.objective_trace()
        out.bs_power_trace = np.array([rec.bs_power for rec in result.trace])
        out.relay_power_trace = np.array([rec.relay_power for rec in result.trace])
    return out


def _jobs(spec: SweepSpec, keep_traces: bool):
    for trial in range(spec.trials):
        seed = trial_seed(spec.seed, trial)
        ch = None
        for psnr_db in spec.psnr_db_list:
            cfg = apply_psnr(spec.base, psnr_db, spec.power_split)
            if ch is None:
                ch = draw_channels(cfg, seed)
            opts = RunOptions(
                epsilon=spec.epsilon,
                max_iters=spec.max_iters,
                init_seed=seed,
                record_trace=keep_traces,
            )
            for algorithm in spec.algorithms:
                yield cfg, ch, algorithm, psnr_db, trial, seed, opts, keep_traces


def run_trials(spec: SweepSpec, keep_traces: bool = False) -> list:
    """Run every ``(psnr, trial, algorithm)`` combination of ``spec``.

    Returns the outcomes sorted by ``(psnr, trial, algorithm)``. With
    ``keep_traces`` each outcome also carries its per-iteration rate,
    objective and power traces.
    """
    jobs = list(_jobs(spec, keep_traces))
    if spec.workers == 1:
        outcomes = [_run_one(job) for job in jobs]
    else:
        chunk = max(1, len(jobs) // (4 * spec.workers))
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            outcomes = list(pool.map(_run_one, jobs, chunksize=chunk))
    outcomes.sort(key=lambda o: o.key)
    return outcomes


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(x) for x in row])
    except OSError as err:
        raise OSError(f"cannot write {path}: {err}") from err
    return path


def detail_rows(outcomes):
    for o in outcomes:
        yield (o.psnr_db, o.algorithm, o.trial, o.seed, o.sum_rate_per_slot, o.iterations, o.converged, o.channel_hash)


def aggregate(outcomes) -> list:
    """Per-``(psnr, algorithm)`` mean, sample standard deviation and count."""
    groups = {}
    for o in outcomes:
        groups.setdefault((o.psnr_db, o.algorithm), []).append(o.sum_rate_per_slot)
    rows = []
    for (psnr_db, algorithm), rates in sorted(groups.items()):
        rates = np.asarray(rates)
        std = float(rates.std(ddof=1)) if len(rates) > 1 else 0.0
        rows.append((psnr_db, algorithm, float(rates.mean()), std, len(rates)))
    return rows


def run_sweep(spec: SweepSpec, out_dir) -> dict:
    """Sum rate versus pseudo SNR.

    Writes ``sweep_detail.csv`` (one row per run) and
    ``sweep_aggregate.csv`` (mean and standard deviation per pseudo SNR and
    algorithm). Returns the written paths and the outcomes.
    """
    outcomes = run_trials(spec)
    out_dir = Path(out_dir)
    return {
        "detail": _write_csv(out_dir / "sweep_detail.csv", DETAIL_HEADER, detail_rows(outcomes)),
        "aggregate": _write_csv(out_dir / "sweep_aggregate.csv", AGGREGATE_HEADER, aggregate(outcomes)),
        "outcomes": outcomes,
    }


def _single_psnr(spec: SweepSpec) -> SweepSpec:
    if len(spec.psnr_db_list) != 1:
        raise ConfigError("psnr_db_list", f"expected exactly one pseudo SNR, got {list(spec.psnr_db_list)}")
    return spec


def padded_traces(outcomes, algorithm: str, n_iters: int = CONVERGENCE_ITERS) -> np.ndarray:
    """Rates at iterations ``1..n_iters`` of every run of ``algorithm``.

    Runs that stopped earlier are padded with their final rate.
    """
    rows = []
    for o in outcomes:
        if o.algorithm != algorithm:
            continue
        trace = o.rate_trace[1:n_iters + 1]
        rows.append(np.concatenate([trace, np.full(n_iters - len(trace), trace[-1])]))
    return np.array(rows)


def convergence_rows(outcomes, algorithms, n_iters: int = CONVERGENCE_ITERS):
    for algorithm in algorithms:
        mean = padded_traces(outcomes, algorithm, n_iters).mean(axis=0)
        for it in range(n_iters):
            yield algorithm, it + 1, float(mean[it])


def run_convergence(spec: SweepSpec, out_dir) -> dict:
    """Mean sum rate over the first 50 iterations at one pseudo SNR.

    Writes ``convergence.csv`` with columns
    ``algorithm,iteration,mean_rate``.
    """
    spec = _single_psnr(spec)
    if spec.max_iters < CONVERGENCE_ITERS:
        spec = replace(spec, max_iters=CONVERGENCE_ITERS)
    outcomes = run_trials(spec, keep_traces=True)
    rows = convergence_rows(outcomes, spec.algorithms)
    return {
        "convergence": _write_csv(Path(out_dir) / "convergence.csv", ["algorithm", "iteration", "mean_rate"], rows),
        "outcomes": outcomes,
    }


def histogram(rates, width: float = BIN_WIDTH):
    """Counts of ``rates`` in bins ``[k w, (k+1) w)`` spanning the data."""
    rates = np.asarray(rates, dtype=float)
    lo = np.floor(rates.min() / width)
    hi = np.floor(rates.max() / width) + 1
    edges = np.arange(lo, hi + 1) * width
    counts, _ = np.histogram(rates, bins=edges)
    return edges, counts


def run_density(spec: SweepSpec, out_dir) -> dict:
    """Final sum rates per trial and their histograms at one pseudo SNR.

    Writes ``density_rates.csv`` and ``density_hist.csv`` (0.25 bit bins).
    """
    spec = _single_psnr(spec)
    outcomes = run_trials(spec)
    rates_rows = [(o.algorithm, o.trial, o.seed, o.sum_rate_per_slot) for o in outcomes]
    hist_rows = []
    for algorithm in spec.algorithms:
        edges, counts = histogram([o.sum_rate_per_slot for o in outcomes if o.algorithm == algorithm])
        hist_rows.extend((algorithm, edges[i], edges[i + 1], int(c)) for i, c in enumerate(counts))
    out_dir = Path(out_dir)
    return {
        "rates": _write_csv(out_dir / "density_rates.csv", ["algorithm", "trial", "seed", "sum_rate_per_slot"], rates_rows),
        "histogram": _write_csv(out_dir / "density_hist.csv", ["algorithm", "bin_lo", "bin_hi", "count"], hist_rows),
        "outcomes": outcomes,
    }


def run_single(cfg: ScenarioConfig, ch: ChannelSet, algorithm: str, opts: RunOptions, out_dir) -> dict:
    """One run with its full per-iteration trace."""
    result = ALGORITHMS[algorithm](ch, cfg, opts)
    rows = [
        (rec.iteration, rec.objective, rec.sum_rate, rec.rate_per_slot, rec.bs_power, rec.relay_power)
        for rec in result.trace
    ]
    header = ["iteration", "objective", "sum_rate", "sum_rate_per_slot", "bs_power", "relay_power"]
    return {"trace": _write_csv(Path(out_dir) / f"single_{algorithm}.csv", header, rows), "result": result}


def default_workers() -> int:
    return max(1, min(os.cpu_count() or 1, 8))
