"""Command-line entry point.

Exit codes: 0 success, 1 at least one run (or self-test check) failed,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .diagnostics import diagnostics_report
from .errors import ConfigError, TransferBanditError
from .report import load_run_archive, write_json
from .runner import run_experiment
from .selftest import run_selftest

SEED_ENV = "TRANSFER_BANDIT_SEED"


class _UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="transfer-bandit",
                                description="Linear contextual bandits with biased offline data.")
    sub = p.add_subparsers(dest="command", required=True)

    def experiment(name, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config", help="experiment config file")
        sp.add_argument("--seed", type=int, help=f"base seed (overrides ${SEED_ENV} and config)")
        sp.add_argument("--runs", type=int, help="runs per scenario and policy")
        sp.add_argument("--horizon", type=int, help="number of rounds T")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--no-svg", action="store_true", help="skip regret_curves.svg")
        sp.add_argument("--threads", type=int, default=1, help="concurrent runs")

    experiment("run", "run the first scenario of a config")
    experiment("sweep", "run every scenario of the sweep grid")
    sp = sub.add_parser("diag", help="recompute diagnostics from a run directory")
    sp.add_argument("trace_dir")
    sp.add_argument("--out", help="JSON file (default: <trace_dir>/diagnostics_recomputed.json)")
    sp = sub.add_parser("selftest", help="reduced-scale property and invariant checks")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--seeds", type=int, default=20, help="trajectory seeds")
    sp.add_argument("--horizon", type=int, default=500)
    return p


def _resolve_seed(flag):
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV)
    if env is None or env.strip() == "":
        return None
    try:
        return int(env)
    except ValueError:
        raise _UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _cmd_experiment(args, sweep: bool) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise _UsageError(f"config file not found: {path}")
    if args.threads < 1:
        raise _UsageError("--threads must be at least 1")
    cfg = load_config(path).with_overrides(seed=_resolve_seed(args.seed), runs=args.runs,
                                           horizon=args.horizon, out=args.out)
    result = run_experiment(cfg, threads=args.threads, out_dir=cfg.output, svg=not args.no_svg,
                            scenarios=None if sweep else [0])
    for scen in result.config.scenarios:
        for pol in cfg.policies:
            fr = result.final_regrets(scen.name, pol)
            if fr.size:
                print(f"{scen.name:>12s}  {pol:15s} final regret {fr.mean():10.3f}"
                      f" ± {fr.std(ddof=1) if fr.size > 1 else 0.0:8.3f}  ({fr.size} runs)")
    for r in result.failures:
        print(f"FAILED {r.scenario}/{r.policy}/seed {r.seed}: {r.error}", file=sys.stderr)
    print(f"outputs written to {cfg.output}")
    return 1 if result.failures else 0


def _cmd_diag(args) -> int:
    root = Path(args.trace_dir)
    if not root.is_dir():
        raise _UsageError(f"trace directory not found: {root}")
    archives = sorted(root.glob("run_*.npz"))
    if not archives:
        raise _UsageError(f"no run archives (run_*.npz) in {root}")
    reports = []
    failed = 0
    for path in archives:
        trace, ridge, config, cert, C_SL, scenario = load_run_archive(path)
        entry = {"scenario": scenario, "policy": trace.policy, "seed": trace.seed}
        try:
            entry.update(diagnostics_report(trace, ridge, config, cert, C_SL))
        except TransferBanditError as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
            failed += 1
        reports.append(entry)
        lam = entry.get("lambda_total", np.nan)
        print(f"{path.name}: lambda_total={lam:.6g} verdict={entry.get('pooled_better_verdict')}")
    out = Path(args.out) if args.out else root / "diagnostics_recomputed.json"
    write_json(out, {"runs": reports})
    print(f"wrote {out}")
    return 1 if failed else 0


def cli(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed the usage text
        return int(exc.code or 0)
    try:
        if args.command in ("run", "sweep"):
            return _cmd_experiment(args, sweep=args.command == "sweep")
        if args.command == "diag":
            return _cmd_diag(args)
        return 0 if run_selftest(args.seed, args.seeds, args.horizon) else 1
    except (_UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(cli())
