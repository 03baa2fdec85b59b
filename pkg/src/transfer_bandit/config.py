"""Experiment configuration files.

INI-style sections (``[instance]``, ``[offline]``, ``[certificate]``,
``[experiment]``, ``[sweep]``).  Values are numbers, bare words, or
bracketed lists; list entries and scalars may be arithmetic expressions in
the sweep variables, e.g. ``theta_star = [s, 1, 1, 1, 1]``.  See
``docs/config.md`` for the full schema.
"""

from __future__ import annotations

import ast
import configparser
import itertools
import json
import math
import operator
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .environment import BanditInstance, BoxSupport, FixedActionSet, GaussianUnitBall, OfflineSpec
from .errors import ConfigError, TransferBanditError
from .offline import BiasCertificate, parse_bias_matrix
from .policies import Mode
from .spd import elliptic_norm

__all__ = ["ScenarioSpec", "ExperimentConfig", "load_config", "parse_config", "evaluate"]

_SECTIONS = ("instance", "offline", "certificate", "experiment", "sweep")
_KEYS = {
    "instance": {"d", "k", "sigma", "s", "theta_star", "context_law", "normalize", "reward",
                 "box_lower", "box_upper", "actions"},
    "offline": {"theta_dagger", "n_off", "covariate_law", "normalize", "box_lower",
                "box_upper", "actions"},
    "certificate": {"kind", "m_bias", "rho", "rho_scale"},
    "experiment": {"policies", "t", "n_runs", "base_seed", "delta_total", "delta_bias",
                   "epoch_schedule", "c_sl", "check_invariants", "output"},
}

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_NAMES = {"pi": math.pi, "e": math.e}


def evaluate(text: str, env: dict | None = None):
    """Evaluate a number, list, or arithmetic expression over ``env``.

    Only literals, names, ``+ - * / **``, unary signs, ``sqrt(.)`` and
    (nested) lists are accepted.
    """
    env = {**_NAMES, **(env or {})}

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, (ast.List, ast.Tuple)):
            return [ev(n) for n in node.elts]
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise ValueError(f"unknown name {node.id!r}")
            return env[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id == "sqrt" and len(node.args) == 1 and not node.keywords):
            return math.sqrt(ev(node.args[0]))
        raise ValueError(f"unsupported expression element {ast.dump(node)[:40]}")

    try:
        return ev(ast.parse(text.strip(), mode="eval"))
    except SyntaxError as exc:
        raise ValueError(f"cannot parse {text!r}") from exc


def _names_in(text: str) -> set[str]:
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError:
        return set()
    return {n.id for n in ast.walk(tree) if isinstance(n, ast.Name)}


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to simulate one grid point of the sweep."""

    name: str
    values: dict
    instance: BanditInstance
    offline: OfflineSpec
    certificate: BiasCertificate | None


@dataclass(frozen=True)
class ExperimentConfig:
    scenarios: tuple
    policies: tuple
    T: int
    n_runs: int
    base_seed: int
    delta_total: float | None
    delta_bias: float
    epoch_schedule: tuple | None
    C_SL: float
    check_invariants: bool
    output: str
    source: str = "<string>"

    def with_overrides(self, *, seed=None, runs=None, horizon=None, out=None) -> "ExperimentConfig":
        """Copy with command-line overrides applied (``None`` keeps the value)."""
        kw = dict(self.__dict__)
        if seed is not None:
            kw["base_seed"] = int(seed)
        if runs is not None:
            if runs < 1:
                raise ConfigError("experiment.n_runs", "must be at least 1")
            kw["n_runs"] = int(runs)
        if horizon is not None:
            if horizon < 1:
                raise ConfigError("experiment.T", "must be at least 1")
            kw["T"] = int(horizon)
            if self.epoch_schedule is not None and self.epoch_schedule[-1] > horizon:
                kw["epoch_schedule"] = tuple(t for t in self.epoch_schedule if t <= horizon)
        if out is not None:
            kw["output"] = str(out)
        return ExperimentConfig(**kw)


class _Reader:
    """Typed access to one section with error paths ``section.key``."""

    def __init__(self, parser, section, env):
        self.sec = section
        self.data = parser[section] if parser.has_section(section) else {}
        self.env = env

    def has(self, key):
        return key in self.data

    def raw(self, key, default=None):
        if key not in self.data:
            if default is None:
                raise ConfigError(f"{self.sec}.{key}", "required key is missing")
            return default
        return self.data[key].strip()

    def value(self, key, default=None):
        text = self.raw(key, default if default is None else str(default))
        try:
            return evaluate(text, self.env)
        except (ValueError, TypeError, ArithmeticError) as exc:
            raise ConfigError(f"{self.sec}.{key}", str(exc)) from exc

    def number(self, key, default=None, *, integer=False, low=None):
        v = self.value(key, default)
        if isinstance(v, list) or isinstance(v, bool):
            raise ConfigError(f"{self.sec}.{key}", f"expected a number, got {v!r}")
        if integer:
            if float(v) != int(v):
                raise ConfigError(f"{self.sec}.{key}", f"expected an integer, got {v!r}")
            v = int(v)
        else:
            v = float(v)
        if low is not None and v < low:
            raise ConfigError(f"{self.sec}.{key}", f"must be at least {low}, got {v}")
        return v

    def vector(self, key, d=None):
        v = self.value(key)
        arr = np.asarray(v, dtype=float)
        if arr.ndim != 1:
            raise ConfigError(f"{self.sec}.{key}", "expected a flat list of numbers")
        if d is not None and arr.size != d:
            raise ConfigError(f"{self.sec}.{key}", f"expected {d} entries, got {arr.size}")
        return arr

    def word(self, key, default, choices):
        w = self.raw(key, default).lower()
        if w not in choices:
            raise ConfigError(f"{self.sec}.{key}", f"expected one of {sorted(choices)}, got {w!r}")
        return w


def _law(r: _Reader, key: str, default_normalize: str, d: int):
    kind = r.word(key, "gaussian", {"gaussian", "box", "fixed"})
    normalize = r.word("normalize", default_normalize, {"always", "clip"})
    try:
        if kind == "gaussian":
            return GaussianUnitBall(normalize)
        if kind == "box":
            return BoxSupport(tuple(r.vector("box_lower", d)), tuple(r.vector("box_upper", d)),
                              normalize)
        actions = np.asarray(r.value("actions"), dtype=float)
        if actions.ndim != 2 or actions.shape[1] != d:
            raise ConfigError(f"{r.sec}.actions", f"expected rows of length {d}")
        return FixedActionSet(actions)
    except TransferBanditError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{r.sec}.{key}", str(exc)) from exc


def _scenario_name(values: dict) -> str:
    if not values:
        return "base"
    return "-".join(f"{k}{v:g}" for k, v in values.items())


def _build_scenario(parser, values: dict) -> ScenarioSpec:
    inst = _Reader(parser, "instance", values)
    off = _Reader(parser, "offline", values)
    cer = _Reader(parser, "certificate", values)

    d = inst.number("d", integer=True, low=1)
    K = inst.number("k", integer=True, low=1)
    sigma = inst.number("sigma", low=0.0)
    theta_star = inst.vector("theta_star", d)
    theta_dag = off.vector("theta_dagger", d)
    S_text = inst.raw("s", "auto")
    S = (max(np.linalg.norm(theta_star), np.linalg.norm(theta_dag))
         if S_text.lower() == "auto" else inst.number("s", low=0.0))
    reward = inst.word("reward", "gaussian", {"gaussian", "bernoulli"})
    law = _law(inst, "context_law", "always", d)
    off_law = _law(off, "covariate_law", "always", d)
    n_off = off.number("n_off", integer=True, low=0)
    try:
        instance = BanditInstance(theta_star, K=K, sigma=sigma, S=S, context_law=law,
                                  reward=reward)
    except TransferBanditError as exc:
        raise ConfigError("instance", str(exc)) from exc
    try:
        offline = OfflineSpec(theta_dag, n_off=n_off, covariate_law=off_law, S=S, reward=reward)
    except TransferBanditError as exc:
        raise ConfigError("offline", str(exc)) from exc

    kind = cer.word("kind", "fixed", {"fixed", "none"})
    cert = None
    if kind == "fixed":
        text = cer.raw("m_bias", f"diag: {json.dumps([1.0] * d)}")
        prefix, _, body = text.partition(":")
        try:
            entries = evaluate(body, values)
            M = parse_bias_matrix(f"{prefix}: {json.dumps(entries)}", d)
        except (ValueError, TypeError, TransferBanditError) as exc:
            raise ConfigError("certificate.m_bias", str(exc)) from exc
        rho_text = cer.raw("rho", "auto")
        if rho_text.lower() == "auto":
            rho = float(elliptic_norm(theta_star - theta_dag, M))
        else:
            rho = cer.number("rho", low=0.0)
        rho *= cer.number("rho_scale", 1.0, low=0.0)
        cert = BiasCertificate(M, rho)
    return ScenarioSpec(_scenario_name(values), dict(values), instance, offline, cert)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and fully validate configuration text."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(source, f"malformed config: {exc}") from exc
    for sec in parser.sections():
        if sec not in _SECTIONS:
            raise ConfigError(sec, "unknown section")
        if sec in _KEYS:
            for key in parser[sec]:
                if key not in _KEYS[sec]:
                    raise ConfigError(f"{sec}.{key}", "unknown key")

    sweep = {}
    if parser.has_section("sweep"):
        for name, raw in parser["sweep"].items():
            if not name.isidentifier():
                raise ConfigError(f"sweep.{name}", "sweep names must be identifiers")
            try:
                vals = evaluate(raw)
            except (ValueError, TypeError, ArithmeticError) as exc:
                raise ConfigError(f"sweep.{name}", str(exc)) from exc
            vals = vals if isinstance(vals, list) else [vals]
            if not vals or any(isinstance(v, list) for v in vals):
                raise ConfigError(f"sweep.{name}", "expected a non-empty flat list")
            sweep[name] = [float(v) for v in vals]
        used = set()
        for sec in ("instance", "offline", "certificate"):
            if parser.has_section(sec):
                for raw in parser[sec].values():
                    used |= _names_in(raw.partition(":")[2] if ":" in raw else raw)
        for name in sweep:
            if name not in used:
                raise ConfigError(f"sweep.{name}", "variable is not referenced by any key")

    grid = [dict(zip(sweep, combo)) for combo in itertools.product(*sweep.values())]
    scenarios = tuple(_build_scenario(parser, values) for values in grid)

    exp = _Reader(parser, "experiment", {})
    pol_text = exp.raw("policies", ", ".join(m.value for m in Mode))
    policies = tuple(p.strip().lower() for p in pol_text.strip("[]").split(",") if p.strip())
    valid = {m.value for m in Mode}
    for p in policies:
        if p not in valid:
            raise ConfigError("experiment.policies", f"unknown policy {p!r}")
    if not policies:
        raise ConfigError("experiment.policies", "no policies listed")
    if "minucb" in policies and any(s.certificate is None for s in scenarios):
        raise ConfigError("certificate.kind", "policy 'minucb' needs a fixed certificate")

    T = exp.number("t", integer=True, low=1)
    dt_text = exp.raw("delta_total", "auto")
    delta_total = None if dt_text.lower() == "auto" else exp.number("delta_total")
    if delta_total is not None and not 0 < delta_total < 1:
        raise ConfigError("experiment.delta_total", "must lie in (0, 1)")
    delta_bias = exp.number("delta_bias", 0.05)
    if not 0 < delta_bias < 1:
        raise ConfigError("experiment.delta_bias", "must lie in (0, 1)")
    sched_text = exp.raw("epoch_schedule", "doubling")
    schedule = None
    if sched_text.lower() != "doubling":
        vals = exp.value("epoch_schedule")
        if not isinstance(vals, list):
            raise ConfigError("experiment.epoch_schedule", "expected 'doubling' or a list")
        schedule = tuple(int(v) for v in vals)
        if not schedule or schedule[0] != 1 or any(b <= a for a, b in zip(schedule, schedule[1:])):
            raise ConfigError("experiment.epoch_schedule", "must start at 1 and increase")
        if schedule[-1] > T:
            raise ConfigError("experiment.epoch_schedule", "epoch starts must not exceed T")
    check = exp.word("check_invariants", "true", {"true", "false", "yes", "no", "1", "0"})
    return ExperimentConfig(
        scenarios=scenarios,
        policies=policies,
        T=T,
        n_runs=exp.number("n_runs", 20, integer=True, low=1),
        base_seed=exp.number("base_seed", 0, integer=True, low=0),
        delta_total=delta_total,
        delta_bias=delta_bias,
        epoch_schedule=schedule,
        C_SL=exp.number("c_sl", 44.0, low=0.0),
        check_invariants=check in ("true", "yes", "1"),
        output=exp.raw("output", "out"),
        source=source,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_config(text, source=str(path))
