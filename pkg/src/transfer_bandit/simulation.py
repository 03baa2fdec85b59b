"""Run a policy against a simulated environment and record its trajectory.

The simulator knows ``theta_*``, so besides regret it can check the
deterministic per-round structure of the layered policies: width
comparison, survival of the optimal arm whenever all intervals hold, the
stopping-layer regret bound, and the routed bias-factor inequality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .environment import BanditInstance, RunStreams, draw_reward, sample_round
from .errors import InvariantViolation
from .policies import WIDTH_SLACK, RoundResult

__all__ = ["RegretTrace", "TrajectoryMonitor", "simulate"]

ROUTE_SLACK = 1e-9
GAP_SLACK = 1e-9


@dataclass
class RegretTrace:
    """Per-round record of one run.

    Arrays have length ``T``.  ``pool_norm[t]`` is ``||x_t||`` in the inverse
    of the pooled matrix of the stopping layer *before* the append, which is
    the summand of the layerwise elliptical potential.
    """

    T: int
    K: int
    d: int
    L: int
    policy: str
    seed: int
    arms: np.ndarray
    stop_layer: np.ndarray
    regret_inc: np.ndarray
    features: np.ndarray
    rewards: np.ndarray
    w_on: np.ndarray
    w_pool: np.ndarray
    w_agg: np.ndarray
    psi: np.ndarray
    rho_used: np.ndarray
    pool_norm: np.ndarray
    branch_pool: np.ndarray
    epoch_index: np.ndarray
    scored_pairs: int = 0
    uncovered_pairs: int = 0
    epoch_certs: list = field(default_factory=list, repr=False)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.regret_inc)

    @property
    def final_regret(self) -> float:
        return float(self.regret_inc.sum())

    def layer_counts(self) -> np.ndarray:
        return np.bincount(self.stop_layer, minlength=self.L + 1)

    def layer_grams(self) -> list[np.ndarray]:
        out = []
        for ell in range(self.L + 1):
            X = self.features[self.stop_layer == ell]
            out.append(X.T @ X)
        return out

    @classmethod
    def empty(cls, T, K, d, L, policy, seed):
        nan = lambda: np.full(T, math.nan)
        return cls(
            T=T, K=K, d=d, L=L, policy=policy, seed=seed,
            arms=np.zeros(T, dtype=int), stop_layer=np.zeros(T, dtype=int),
            regret_inc=np.zeros(T), features=np.zeros((T, d)), rewards=np.zeros(T),
            w_on=nan(), w_pool=nan(), w_agg=nan(), psi=nan(), rho_used=nan(),
            pool_norm=nan(), branch_pool=np.zeros(T, dtype=bool),
            epoch_index=np.zeros(T, dtype=int),
        )


class TrajectoryMonitor:
    """Per-round structural checks; raises InvariantViolation on failure.

    ``bounded_means`` enables the ``min{1, w}`` clamp of the stopping-layer
    bound, which presumes regret gaps of at most one.
    """

    def __init__(self, theta_star: np.ndarray, L: int, *, bounded_means: bool = False):
        self.theta = np.asarray(theta_star, dtype=float)
        self.L = L
        self.bounded = bounded_means
        self.truth_rounds = 0

    def check(self, t: int, X: np.ndarray, res: RoundResult, trace: RegretTrace) -> None:
        if not res.scored:
            return
        means = X @ self.theta
        best = means.max()
        optimal = set(np.flatnonzero(means >= best - GAP_SLACK).tolist())
        covered = True
        for s in res.scored:
            bound = np.minimum(s.w_on, s.w_pool) + WIDTH_SLACK
            if np.any(s.width > bound):
                raise InvariantViolation(f"round {t} layer {s.level}: width exceeds min branch width")
            mu = means[s.arms]
            outside = (mu > s.U_min) | (mu < s.L_max)
            trace.scored_pairs += s.arms.size
            n_out = int(outside.sum())
            trace.uncovered_pairs += n_out
            covered &= n_out == 0
        # optimal arms that were scored at some layer but not at the next
        for prev, nxt in zip(res.scored, res.scored[1:]):
            lost = optimal.intersection(prev.arms.tolist()) - set(nxt.arms.tolist())
            if lost and covered:
                raise InvariantViolation(
                    f"round {t}: optimal arm {sorted(lost)} eliminated although all intervals held"
                )
        if covered:
            self.truth_rounds += 1
            gap = best - means[res.arm]
            w = float(res.final.width[res.position])
            if res.layer >= 1 or res.layer == self.L:
                cap = 4.0 * (min(1.0, w) if self.bounded else w)
                if gap > cap + GAP_SLACK:
                    raise InvariantViolation(
                        f"round {t}: gap {gap:.6g} exceeds stopping-layer bound {cap:.6g}"
                    )
        if np.isfinite(res.psi) and np.isfinite(res.c_align):
            lim = math.sqrt(res.c_align) * res.pool_norm + ROUTE_SLACK
            if res.psi > lim:
                raise InvariantViolation(
                    f"round {t}: psi {res.psi:.6g} exceeds sqrt(c_align)*norm {lim:.6g}"
                )


def simulate(instance: BanditInstance, policy, T: int, seed: int, *,
             streams: RunStreams | None = None, monitor: TrajectoryMonitor | None = None,
             policy_name: str | None = None) -> RegretTrace:
    """Play ``T`` rounds and return the trace.

    ``streams`` defaults to ``RunStreams(seed)``; pass the same object used to
    generate offline data if that stream must continue rather than restart.
    """
    streams = streams or RunStreams(seed)
    name = policy_name or getattr(policy.mode, "value", str(policy.mode))
    trace = RegretTrace.empty(T, instance.K, instance.d, policy.L, name, seed)
    theta = instance.theta_star
    sigma, law = instance.sigma, instance.reward
    noise = streams.noise
    for t in range(1, T + 1):
        ctx = sample_round(instance, streams.contexts, t)
        X = ctx.arms
        means = X @ theta
        # one noise draw per round, whatever arm is played
        res = policy.round(ctx, lambda a: draw_reward(means[a], sigma, law, noise))
        i = t - 1
        a = res.arm
        trace.arms[i] = a
        trace.stop_layer[i] = res.layer
        trace.regret_inc[i] = means.max() - means[a]
        trace.features[i] = X[a]
        trace.rewards[i] = res.reward
        trace.psi[i] = res.psi
        trace.rho_used[i] = res.rho
        trace.pool_norm[i] = res.pool_norm
        trace.epoch_index[i] = res.epoch
        if res.scored:
            s, p = res.final, res.position
            trace.w_on[i] = s.w_on[p]
            trace.w_pool[i] = s.w_pool[p]
            trace.w_agg[i] = s.width[p]
            trace.branch_pool[i] = bool(s.U_pool[p] < s.U_on[p])
        if monitor is not None:
            monitor.check(t, X, res, trace)
    trace.epoch_certs = list(getattr(policy, "epoch_certs", []))
    if monitor is not None and int(trace.layer_counts().sum()) != T:
        raise InvariantViolation("layer routing does not account for every round")
    return trace
