"""Reduced-scale property checks run by ``transfer-bandit selftest``.

Each check returns ``(name, passed, detail)``.  The trajectory suite runs
every layered policy under the per-round monitor and then replays the
layerwise potential, spectral envelope and routed-factor inequalities.
"""

from __future__ import annotations

import math
import time

import numpy as np

from .diagnostics import (
    diagonal_oracle,
    epoch_penalty,
    potential_check,
    psi_bound_check,
    spectral_envelope_check,
)
from .environment import (
    BanditInstance,
    OfflineSpec,
    RunStreams,
    generate_offline,
    make_diag_instance,
)
from .errors import TransferBanditError
from .offline import BiasCertificate, fit_ridge
from .policies import LayeredPolicy, Mode, PolicyConfig
from .simulation import TrajectoryMonitor, simulate
from .spd import SpdMatrix, gen_eig_max, inv_norm, log_det, parallel_sum, rank_one_update, waterfill_phi

__all__ = ["math_checks", "trajectory_checks", "diagonal_checks", "run_selftest"]


def _random_spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return SpdMatrix(a @ a.T + scale * np.eye(d))


def math_checks(rng: np.random.Generator, n: int = 200):
    out = []
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 9))
        M = _random_spd(rng, d)
        x = rng.standard_normal(d)
        lhs = log_det(rank_one_update(M, x)) - log_det(M)
        rhs = math.log1p(inv_norm(x, M) ** 2)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    out.append(("determinant lemma", worst <= 1e-8, f"max rel err {worst:.2e}"))

    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 7))
        A, B = _random_spd(rng, d), _random_spd(rng, d)
        x = rng.standard_normal(d)
        P = parallel_sum(A, B)
        u = np.linalg.solve(A.entries + B.entries, B.entries @ x)
        split = u @ A.entries @ u + (x - u) @ B.entries @ (x - u)
        worst = max(worst, abs(x @ P.entries @ x - split) / max(1.0, split))
    out.append(("parallel-sum variational identity", worst <= 1e-8, f"max rel err {worst:.2e}"))

    worst = 0.0
    for _ in range(n // 4):
        d = int(rng.integers(1, 6))
        G, M = _random_spd(rng, d), _random_spd(rng, d)
        w, V = np.linalg.eigh(G.entries)
        C = (V * np.sqrt(w)) @ V.T @ np.linalg.solve(M.entries, (V * np.sqrt(w)) @ V.T)
        v = np.ones(d)
        lam = 0.0
        for _ in range(5000):
            v = C @ v
            v /= np.linalg.norm(v)
            new = v @ C @ v
            if abs(new - lam) <= 1e-15 * max(1.0, new):
                break
            lam = new
        worst = max(worst, abs(gen_eig_max(G, M) - lam) / max(1.0, lam))
    out.append(("generalized eigenvalue vs power iteration", worst <= 1e-8, f"{worst:.2e}"))

    worst = 0.0
    for g1, g2, B in [(1.0, 3.0, 1.0), (1.0, 1.0, 2.0), (0.5, 4.0, 5.0), (2.0, 2.5, 0.5)]:
        grid = np.linspace(0.0, B, 20001)
        best = np.max(np.log1p(grid / g1) + np.log1p((B - grid) / g2))
        phi = waterfill_phi(SpdMatrix.diag([g1, g2]), B)
        worst = max(worst, abs(phi - best))
    out.append(("waterfilling vs grid search (d=2)", worst <= 1e-4, f"{worst:.2e}"))
    return out


def _main_instance(s: float, n_off: int):
    ts = np.array([s, 1, 1, 1, 1.0])
    td = np.array([1, s, 1, 1, 1.0])
    S = float(max(np.linalg.norm(ts), np.linalg.norm(td)))
    inst = BanditInstance(ts, K=5, sigma=0.1, S=S)
    cert = BiasCertificate(SpdMatrix.identity(5), float(np.linalg.norm(ts - td)))
    return inst, OfflineSpec(td, n_off, S=S), cert


def trajectory_checks(seeds: int = 20, T: int = 500, s: float = 2.0, n_off: int = 2000):
    inst, spec, cert = _main_instance(s, n_off)
    modes = (Mode.ONLINE_ONLY, Mode.FIXED_CERTIFICATE, Mode.EPOCH_CERTIFICATE, Mode.WARM_START)
    failures = []
    runs = 0
    for seed in range(seeds):
        for mode in modes:
            streams = RunStreams(seed)
            ridge = fit_ridge(generate_offline(spec, inst.sigma, streams.offline))
            pol = LayeredPolicy(PolicyConfig(T, inst.sigma, inst.S, mode), ridge, cert)
            try:
                trace = simulate(inst, pol, T, seed, streams=streams,
                                 monitor=TrajectoryMonitor(inst.theta_star, pol.L))
                potential_check(trace, ridge)
                spectral_envelope_check(trace, ridge)
                if mode is Mode.FIXED_CERTIFICATE:
                    psi_bound_check(trace, ridge, cert)
                if mode is Mode.EPOCH_CERTIFICATE:
                    epoch_penalty(trace, trace.epoch_certs, ridge)
            except TransferBanditError as exc:
                failures.append(f"seed {seed} {mode.value}: {exc}")
            runs += 1
    detail = f"{runs} runs at T={T}" + (f"; first failure: {failures[0]}" if failures else "")
    return [("trajectory invariants", not failures, detail)]


def diagonal_checks(rng: np.random.Generator, n: int = 25):
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 7))
        di = make_diag_instance(rng.integers(0, 50, d), rng.uniform(0.2, 5.0, d),
                                rng.uniform(-1, 1, d), rho=float(rng.uniform(0, 1)))
        ridge = fit_ridge(generate_offline(di.offline, 1.0, rng), d)
        cfg = PolicyConfig(64, 1.0, di.instance.S, Mode.FIXED_CERTIFICATE)
        pol = LayeredPolicy(cfg, ridge, di.certificate)
        layer = pol.layers[0]
        for _ in range(int(rng.integers(0, 30))):
            a = int(rng.integers(d))
            layer.add(np.eye(d)[a], float(rng.standard_normal()))
        s = pol.score(0, np.eye(d), np.arange(d))
        for a in range(d):
            u = diagonal_oracle(layer, ridge, di.certificate, a, delta_pool_tl=cfg.delta_pool_tl,
                                beta_off_val=pol.beta_off, sigma=cfg.sigma)
            worst = max(worst, abs(u - s.U_pool[a]))
    return [("diagonal closed form", worst <= 1e-10, f"max abs err {worst:.2e}")]


def run_selftest(seed: int = 0, seeds: int = 20, T: int = 500, echo=print) -> bool:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    results = math_checks(rng) + diagonal_checks(rng) + trajectory_checks(seeds, T)
    for name, ok, detail in results:
        echo(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    echo(f"selftest finished in {time.perf_counter() - start:.1f}s")
    return all(ok for _, ok, _ in results)
