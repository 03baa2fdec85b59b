"""File outputs: per-run traces, run archives, summary CSV, JSON, SVG.

All float fields are written with ``repr`` so that files are byte-stable
for a given configuration and seed.
"""

from __future__ import annotations

import json
import math
import types
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .offline import BiasCertificate, OfflineRidge
from .policies import PolicyConfig
from .simulation import RegretTrace
from .spd import SpdMatrix

__all__ = [
    "TRACE_COLUMNS",
    "SUMMARY_COLUMNS",
    "trace_filename",
    "write_trace_csv",
    "save_run_archive",
    "load_run_archive",
    "write_summary_csv",
    "write_json",
    "write_regret_svg",
]

TRACE_COLUMNS = ("t", "policy", "seed", "arm", "stop_layer", "regret_inc", "w_on", "w_pool",
                 "w_agg", "psi_routed", "branch_used")
SUMMARY_COLUMNS = ("scenario", "policy", "t", "regret_mean", "regret_std", "n_runs")


def _num(v) -> str:
    return repr(float(v))


def trace_filename(scenario: str, policy: str, seed: int, ext: str = "csv") -> str:
    prefix = "trace" if ext == "csv" else "run"
    return f"{prefix}_{scenario}_{policy}_{seed}.{ext}"


def write_trace_csv(path, trace: RegretTrace) -> None:
    """One row per round; ``branch_used`` is ``pool``, ``online`` or ``none``."""
    scored = ~np.isnan(trace.w_agg)
    lines = [",".join(TRACE_COLUMNS)]
    for i in range(trace.T):
        branch = ("pool" if trace.branch_pool[i] else "online") if scored[i] else "none"
        lines.append(",".join((
            str(i + 1), trace.policy, str(trace.seed), str(int(trace.arms[i])),
            str(int(trace.stop_layer[i])), _num(trace.regret_inc[i]), _num(trace.w_on[i]),
            _num(trace.w_pool[i]), _num(trace.w_agg[i]), _num(trace.psi[i]), branch,
        )))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_TRACE_ARRAYS = ("arms", "stop_layer", "regret_inc", "features", "rewards", "w_on", "w_pool",
                 "w_agg", "psi", "rho_used", "pool_norm", "branch_pool", "epoch_index")


def save_run_archive(path, trace: RegretTrace, ridge: OfflineRidge, config: PolicyConfig,
                     cert: BiasCertificate | None, C_SL: float, scenario: str) -> None:
    """Everything ``diag`` needs to recompute a run's diagnostics."""
    certs = trace.epoch_certs
    d = trace.d
    data = {name: getattr(trace, name) for name in _TRACE_ARRAYS}
    data.update(
        meta=np.array(json.dumps({
            "T": trace.T, "K": trace.K, "d": d, "L": trace.L, "policy": trace.policy,
            "seed": trace.seed, "scenario": scenario, "n_off": ridge.n_off,
            "sigma": config.sigma, "S": config.S, "mode": config.mode.value,
            "delta_total": config.delta_total, "delta_bias": config.delta_bias,
            "epoch_schedule": list(config.epoch_schedule) if config.epoch_schedule else None,
            "C_SL": C_SL, "rho": None if cert is None else cert.rho,
            "scored_pairs": trace.scored_pairs, "uncovered_pairs": trace.uncovered_pairs,
        }, sort_keys=True)),
        G_off=ridge.G_off.entries,
        theta_hat=ridge.theta_hat,
        M_bias=cert.M_bias.entries if cert is not None else np.zeros((0, d)),
        epoch_tau=np.array([c.tau for c in certs], dtype=int),
        epoch_rho=np.array([c.rho_hat for c in certs], dtype=float),
        epoch_M=np.array([c.M_hat.entries for c in certs]).reshape(len(certs), d, d),
    )
    with open(path, "wb") as fh:
        np.savez(fh, **data)


def load_run_archive(path):
    """Inverse of :func:`save_run_archive`.

    Returns ``(trace, ridge, config, cert, C_SL, scenario)``.
    """
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        arrays = {name: z[name] for name in _TRACE_ARRAYS}
        G_off = SpdMatrix(z["G_off"])
        theta_hat = z["theta_hat"]
        M_bias = z["M_bias"]
        tau, rho_hat, M_hat = z["epoch_tau"], z["epoch_rho"], z["epoch_M"]
    trace = RegretTrace(T=meta["T"], K=meta["K"], d=meta["d"], L=meta["L"],
                        policy=meta["policy"], seed=meta["seed"], **arrays,
                        scored_pairs=meta["scored_pairs"], uncovered_pairs=meta["uncovered_pairs"])
    trace.epoch_certs = [
        types.SimpleNamespace(tau=int(t), rho_hat=float(r), M_hat=SpdMatrix(m))
        for t, r, m in zip(tau, rho_hat, M_hat)
    ]
    ridge = OfflineRidge(G_off, theta_hat, meta["n_off"])
    sched = meta["epoch_schedule"]
    config = PolicyConfig(meta["T"], meta["sigma"], meta["S"], meta["mode"],
                          delta_total=meta["delta_total"],
                          epoch_schedule=tuple(sched) if sched else None,
                          delta_bias=meta["delta_bias"])
    cert = BiasCertificate(SpdMatrix(M_bias), meta["rho"]) if meta["rho"] is not None else None
    return trace, ridge, config, cert, meta["C_SL"], meta["scenario"]


def write_summary_csv(path, rows) -> None:
    """``rows``: iterables ordered like :data:`SUMMARY_COLUMNS`."""
    lines = [",".join(SUMMARY_COLUMNS)]
    for scen, pol, t, mean, std, n in rows:
        lines.append(f"{scen},{pol},{int(t)},{_num(mean)},{_num(std)},{int(n)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


_COLORS = {
    "suplinucb": "#1f77b4",
    "minucb": "#d62728",
    "epoch_minucb": "#9467bd",
    "warmstart": "#2ca02c",
    "offline_greedy": "#7f7f7f",
}


def write_regret_svg(path, curves, scenarios, policies) -> None:
    """Cumulative regret panels, one per scenario.

    ``curves[(scenario, policy)] = (t, mean, std)`` arrays.  Each panel has a
    mean polyline per policy over a mean +/- 1 sample-sd band polygon.
    """
    pw, ph, margin, top = 320, 240, 48, 28
    legend_h = 22 * len(policies) + 30
    width = margin + len(scenarios) * (pw + margin)
    height = top + ph + margin + legend_h
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for j, scen in enumerate(scenarios):
        x0, y0 = margin + j * (pw + margin), top
        have = [(p, curves[(scen, p)]) for p in policies if (scen, p) in curves]
        t_max = max((float(c[0][-1]) for _, c in have), default=1.0)
        y_max = max((float(np.max(c[1] + c[2])) for _, c in have), default=1.0)
        y_max = y_max if y_max > 0 else 1.0

        def sx(t):
            return x0 + pw * float(t) / t_max

        def sy(v):
            return y0 + ph * (1.0 - max(float(v), 0.0) / y_max)

        out.append(f'<g class="panel" data-scenario="{escape(scen)}">')
        out.append(f'<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
        out.append(f'<text x="{x0 + pw / 2}" y="{y0 - 8}" text-anchor="middle">{escape(scen)}</text>')
        out.append(f'<text x="{x0}" y="{y0 + ph + 14}">0</text>')
        out.append(f'<text x="{x0 + pw}" y="{y0 + ph + 14}" text-anchor="end">{t_max:g}</text>')
        out.append(f'<text x="{x0 - 4}" y="{y0 + 4}" text-anchor="end">{y_max:.3g}</text>')
        for pol, (t, mean, std) in have:
            color = _COLORS.get(pol, "black")
            upper = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, mean + std))
            lower = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t[::-1], (mean - std)[::-1]))
            out.append(f'<polygon class="band" data-policy="{pol}" points="{upper} {lower}" '
                       f'fill="{color}" fill-opacity="0.18" stroke="none"/>')
            pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, mean))
            out.append(f'<polyline class="mean" data-policy="{pol}" points="{pts}" '
                       f'fill="none" stroke="{color}" stroke-width="1.5"/>')
        out.append("</g>")
    ly = top + ph + margin
    out.append(f'<g class="legend"><text x="{margin}" y="{ly}">'
               "cumulative regret vs round; line = mean over runs, "
               "band = mean ± 1 sample standard deviation</text>")
    for i, pol in enumerate(policies):
        y = ly + 20 + 22 * i
        color = _COLORS.get(pol, "black")
        out.append(f'<line x1="{margin}" y1="{y - 4}" x2="{margin + 24}" y2="{y - 4}" '
                   f'stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{margin + 30}" y="{y}">{escape(pol)}</text>')
    out.append("</g></svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
