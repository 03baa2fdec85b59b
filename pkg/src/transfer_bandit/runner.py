"""Multi-run experiment execution.

A run is one ``(scenario, policy, run index)`` triple.  Its seed is
``base_seed + run_index``, shared by every policy in the scenario, so all
policies see the same offline sample, contexts and noise.  Runs are the unit
of parallelism and results are merged in job order, so outputs never depend
on the worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, ScenarioSpec
from .diagnostics import (
    diagnostics_report,
    epoch_penalty,
    potential_check,
    psi_bound_check,
)
from .environment import RunStreams, generate_offline
from .offline import fit_ridge
from .policies import Mode, PolicyConfig, make_policy
from .report import (
    save_run_archive,
    trace_filename,
    write_json,
    write_regret_svg,
    write_summary_csv,
    write_trace_csv,
)
from .simulation import TrajectoryMonitor, simulate

__all__ = ["RunResult", "ExperimentResult", "checkpoints", "execute_run", "run_experiment"]

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    scenario: str
    policy: str
    seed: int
    ok: bool
    final_regret: float = math.nan
    checkpoint_regret: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list
    summary: list  # rows of (scenario, policy, t, mean, std, n)

    @property
    def failures(self) -> list:
        return [r for r in self.runs if not r.ok]

    def final_regrets(self, scenario: str, policy: str) -> np.ndarray:
        return np.array([r.final_regret for r in self.runs
                         if r.ok and r.scenario == scenario and r.policy == policy])


def checkpoints(T: int, n: int = 200) -> np.ndarray:
    """Every ``max(1, T // n)`` rounds, always ending at ``T``."""
    step = max(1, T // n)
    ts = list(range(step, T + 1, step))
    if ts[-1] != T:
        ts.append(T)
    return np.array(ts)


def policy_config(cfg: ExperimentConfig, scen: ScenarioSpec, mode: str) -> PolicyConfig:
    inst = scen.instance
    return PolicyConfig(cfg.T, inst.sigma, inst.S, mode, delta_total=cfg.delta_total,
                        epoch_schedule=cfg.epoch_schedule, delta_bias=cfg.delta_bias)


def execute_run(cfg: ExperimentConfig, scen: ScenarioSpec, policy: str, run_index: int,
                out_dir: str | None = None) -> RunResult:
    """Simulate one run, check its invariants, and optionally write its files."""
    seed = cfg.base_seed + run_index
    try:
        streams = RunStreams(seed)
        data = generate_offline(scen.offline, scen.instance.sigma, streams.offline)
        ridge = fit_ridge(data, scen.instance.d)
        pcfg = policy_config(cfg, scen, policy)
        cert = scen.certificate
        pol = make_policy(pcfg, ridge, cert)
        monitor = None
        if cfg.check_invariants:
            monitor = TrajectoryMonitor(scen.instance.theta_star, pol.L,
                                        bounded_means=scen.instance.reward == "bernoulli")
        trace = simulate(scen.instance, pol, cfg.T, seed, streams=streams, monitor=monitor,
                         policy_name=policy)
        if cfg.check_invariants:
            potential_check(trace, ridge)
            if pcfg.mode is Mode.FIXED_CERTIFICATE:
                psi_bound_check(trace, ridge, cert)
            if pcfg.mode is Mode.EPOCH_CERTIFICATE:
                epoch_penalty(trace, trace.epoch_certs, ridge)
        diag = diagnostics_report(trace, ridge, pcfg, cert, cfg.C_SL)
        diag.update(scored_pairs=trace.scored_pairs, uncovered_pairs=trace.uncovered_pairs,
                    final_regret=trace.final_regret,
                    layer_counts=trace.layer_counts().tolist())
        if out_dir is not None:
            out = Path(out_dir)
            write_trace_csv(out / trace_filename(scen.name, policy, seed), trace)
            save_run_archive(out / trace_filename(scen.name, policy, seed, "npz"), trace, ridge,
                             pcfg, cert, cfg.C_SL, scen.name)
        cum = trace.cumulative
        return RunResult(scen.name, policy, seed, True, trace.final_regret,
                         cum[checkpoints(cfg.T) - 1], diag)
    except Exception as exc:  # a failed run is recorded, the others continue
        log.warning("run %s/%s/%d failed: %s", scen.name, policy, seed, exc)
        return RunResult(scen.name, policy, seed, False, error=f"{type(exc).__name__}: {exc}")


def _execute(job):
    return execute_run(*job)


def _summarize(cfg: ExperimentConfig, runs: list) -> list:
    ts = checkpoints(cfg.T)
    rows = []
    for scen in cfg.scenarios:
        for pol in cfg.policies:
            good = [r.checkpoint_regret for r in runs
                    if r.ok and r.scenario == scen.name and r.policy == pol]
            if not good:
                continue
            mat = np.vstack(good)
            mean = mat.mean(axis=0)
            std = mat.std(axis=0, ddof=1) if len(good) > 1 else np.zeros_like(mean)
            rows.extend((scen.name, pol, t, m, s, len(good)) for t, m, s in zip(ts, mean, std))
    return rows


def run_experiment(cfg: ExperimentConfig, *, threads: int = 1, out_dir=None,
                   svg: bool = True, scenarios=None) -> ExperimentResult:
    """Run every (scenario, policy, run) job and write the outputs.

    ``scenarios`` restricts the grid to the given indices (``run`` uses the
    first grid point only).  With ``out_dir=None`` nothing is written.
    """
    if scenarios is not None:
        cfg = ExperimentConfig(**{**cfg.__dict__,
                                  "scenarios": tuple(cfg.scenarios[i] for i in scenarios)})
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        out_dir = str(out_dir)
    jobs = [(cfg, scen, pol, k, out_dir)
            for scen in cfg.scenarios for pol in cfg.policies for k in range(cfg.n_runs)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            runs = list(pool.map(_execute, jobs, chunksize=1))
    else:
        runs = [_execute(job) for job in jobs]
    summary = _summarize(cfg, runs)
    result = ExperimentResult(cfg, runs, summary)
    if out_dir is not None:
        _write_outputs(result, Path(out_dir), svg)
    return result


def _write_outputs(result: ExperimentResult, out: Path, svg: bool) -> None:
    cfg = result.config
    write_summary_csv(out / "summary.csv", result.summary)
    write_json(out / "diagnostics.json", {
        "runs": [
            {"scenario": r.scenario, "policy": r.policy, "seed": r.seed, **r.diagnostics}
            for r in result.runs if r.ok
        ],
        "failures": [
            {"scenario": r.scenario, "policy": r.policy, "seed": r.seed, "error": r.error}
            for r in result.failures
        ],
        "C_SL": cfg.C_SL,
    })
    if svg:
        curves = {}
        for scen in cfg.scenarios:
            for pol in cfg.policies:
                rows = [r for r in result.summary if r[0] == scen.name and r[1] == pol]
                if rows:
                    t, m, s = (np.array(c, dtype=float) for c in zip(*(r[2:5] for r in rows)))
                    curves[(scen.name, pol)] = (t, m, s)
        write_regret_svg(out / "regret_curves.svg", curves,
                         [s.name for s in cfg.scenarios], list(cfg.policies))
