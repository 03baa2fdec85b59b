"""Synthetic linear contextual bandit environments.

Context laws, reward draws, offline data generation, and constructors for
the two structured instance families (the three-instance hard triple and
the diagonal Gaussian class).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .offline import BiasCertificate, OfflineDataset
from .spd import SpdMatrix

__all__ = [
    "GaussianUnitBall",
    "FixedActionSet",
    "BoxSupport",
    "BanditInstance",
    "OfflineSpec",
    "RoundContexts",
    "RunStreams",
    "sample_round",
    "pull",
    "draw_reward",
    "expected_rewards",
    "generate_offline",
    "HardTriple",
    "make_hard_triple",
    "DiagInstance",
    "make_diag_instance",
]

_NORM_SLACK = 1e-12


def _to_ball(x: np.ndarray, normalize: str) -> np.ndarray:
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    if normalize == "always":
        return x / np.where(norms > 0, norms, 1.0)
    if normalize == "clip":
        return x / np.maximum(norms, 1.0)
    raise InputError(f"normalize must be 'always' or 'clip', got {normalize!r}")


@dataclass(frozen=True)
class GaussianUnitBall:
    """Standard normal entries mapped into the unit ball.

    ``normalize="always"`` projects every draw onto the unit sphere;
    ``"clip"`` rescales only draws whose norm exceeds one.
    """

    normalize: str = "always"

    def sample(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        return _to_ball(rng.standard_normal((n, d)), self.normalize)


@dataclass(frozen=True)
class FixedActionSet:
    """A fixed list of vectors.

    As an online context law it returns the whole set every round.  As an
    offline covariate law it emits the rows in order, cycling if needed,
    which gives deterministic designs such as ``n_i`` copies of ``e_i``.
    """

    actions: np.ndarray

    def __post_init__(self):
        a = np.array(self.actions, dtype=float)
        if a.ndim != 2 or a.shape[0] == 0:
            raise InputError("FixedActionSet needs a non-empty 2-D array")
        if np.any(np.linalg.norm(a, axis=1) > 1.0 + _NORM_SLACK):
            raise InputError("fixed actions must have norm at most 1")
        a.flags.writeable = False
        object.__setattr__(self, "actions", a)

    def sample(self, rng, n: int, d: int) -> np.ndarray:
        idx = np.arange(n) % self.actions.shape[0]
        return self.actions[idx].copy()


@dataclass(frozen=True)
class BoxSupport:
    """Uniform draws from an axis-aligned box, then mapped into the ball."""

    lower: tuple
    upper: tuple
    normalize: str = "clip"

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1 or np.any(hi < lo):
            raise InputError("box bounds must be 1-D with lower <= upper")
        object.__setattr__(self, "lower", tuple(lo))
        object.__setattr__(self, "upper", tuple(hi))

    def sample_raw(self, rng, n: int) -> np.ndarray:
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return lo + (hi - lo) * rng.random((n, lo.size))

    def sample(self, rng, n: int, d: int) -> np.ndarray:
        if len(self.lower) != d:
            raise InputError(f"box has {len(self.lower)} coordinates, need {d}")
        return _to_ball(self.sample_raw(rng, n), self.normalize)


@dataclass(frozen=True)
class BanditInstance:
    theta_star: np.ndarray
    K: int
    sigma: float
    S: float
    context_law: object = field(default_factory=GaussianUnitBall)
    reward: str = "gaussian"

    def __post_init__(self):
        theta = np.array(self.theta_star, dtype=float)
        theta.flags.writeable = False
        object.__setattr__(self, "theta_star", theta)
        if self.K < 1:
            raise InputError("K must be at least 1")
        if self.sigma < 0:
            raise InputError("sigma must be nonnegative")
        if np.linalg.norm(theta) > self.S + _NORM_SLACK:
            raise InputError(
                f"||theta_star|| = {np.linalg.norm(theta):.6g} exceeds S = {self.S}"
            )
        if self.reward not in ("gaussian", "bernoulli"):
            raise InputError(f"unknown reward law {self.reward!r}")
        if isinstance(self.context_law, FixedActionSet):
            if self.context_law.actions.shape != (self.K, theta.size):
                raise InputError("fixed action set must have shape (K, d)")

    @property
    def d(self) -> int:
        return self.theta_star.size


@dataclass(frozen=True)
class OfflineSpec:
    theta_dagger: np.ndarray
    n_off: int
    covariate_law: object = field(default_factory=GaussianUnitBall)
    S: float = math.inf
    reward: str = "gaussian"

    def __post_init__(self):
        theta = np.array(self.theta_dagger, dtype=float)
        theta.flags.writeable = False
        object.__setattr__(self, "theta_dagger", theta)
        if self.n_off < 0:
            raise InputError("n_off must be nonnegative")
        if np.linalg.norm(theta) > self.S + _NORM_SLACK:
            raise InputError("||theta_dagger|| exceeds S")

    @property
    def d(self) -> int:
        return self.theta_dagger.size


@dataclass(frozen=True)
class RoundContexts:
    t: int
    arms: np.ndarray  # (K, d)

    @property
    def K(self) -> int:
        return self.arms.shape[0]


class RunStreams:
    """Independent generators for contexts, online noise and offline data.

    All three derive from ``seed`` alone, so two runs with the same seed see
    identical contexts, offline samples and noise regardless of policy.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        ctx, noise, off = np.random.SeedSequence(self.seed).spawn(3)
        self.contexts = np.random.default_rng(ctx)
        self.noise = np.random.default_rng(noise)
        self.offline = np.random.default_rng(off)


def sample_round(instance: BanditInstance, rng: np.random.Generator, t: int = 1) -> RoundContexts:
    arms = instance.context_law.sample(rng, instance.K, instance.d)
    return RoundContexts(t=t, arms=arms)


def draw_reward(mean: float, sigma: float, reward: str, rng) -> float:
    if reward == "bernoulli":
        # inverse-CDF draw from one uniform
        return 1.0 if rng.random() < mean else 0.0
    return mean + sigma * rng.standard_normal()


def pull(instance: BanditInstance, x: np.ndarray, rng: np.random.Generator) -> float:
    """One reward ``x^T theta_* + noise``; Gaussian draws are not clipped."""
    mean = float(np.dot(x, instance.theta_star))
    return draw_reward(mean, instance.sigma, instance.reward, rng)


def expected_rewards(instance: BanditInstance, contexts: RoundContexts) -> np.ndarray:
    return contexts.arms @ instance.theta_star


def generate_offline(spec: OfflineSpec, sigma: float, rng: np.random.Generator) -> OfflineDataset:
    d = spec.d
    if spec.n_off == 0:
        return OfflineDataset(np.zeros((0, d)), np.zeros(0))
    z = spec.covariate_law.sample(rng, spec.n_off, d)
    means = z @ spec.theta_dagger
    if spec.reward == "bernoulli":
        y = (rng.random(spec.n_off) < means).astype(float)
    else:
        y = means + sigma * rng.standard_normal(spec.n_off)
    return OfflineDataset(z, y)


# -- structured instance families --------------------------------------------


@dataclass(frozen=True)
class HardTriple:
    plus: BanditInstance
    minus: BanditInstance
    good: BanditInstance
    offline: OfflineSpec
    actions: np.ndarray  # rows x0, x+, x-
    rho0: float
    rho: float

    @property
    def rho_bar(self) -> float:
        return self.rho / math.sqrt(2.0)

    def hard_gap(self) -> float:
        """Per-round regret of ``x0`` under the minus instance."""
        return math.hypot(self.rho0, self.rho_bar) - self.rho0


def make_hard_triple(rho0: float, rho: float, n_off: int = 300) -> HardTriple:
    """Three Bernoulli instances sharing ``theta_dagger`` and the offline law.

    Every instance sits at Euclidean distance exactly ``rho`` from the common
    offline parameter, yet only one of them makes ``x0`` optimal throughout.
    """
    if not 0 < rho0 <= 0.25:
        raise InputError(f"need 0 < rho0 <= 1/4, got {rho0}")
    if not 0 < rho <= rho0 / 4:
        raise InputError(f"need 0 < rho <= rho0/4, got {rho}")
    rb = rho / math.sqrt(2.0)
    r = math.hypot(rho0, rb)
    e0, e1, e2 = np.eye(3)
    s2 = math.sqrt(2.0)
    a0 = e1
    ap = (rho0 * e1 + rb * e2) / r
    am = (rho0 * e1 - rb * e2) / r
    actions = np.stack([(e0 + a) / s2 for a in (a0, ap, am)])

    theta_dag = e0 / s2 + s2 * rho0 * e1
    theta_p = e0 / s2 + s2 * (rho0 * e1 + rb * e2)
    theta_m = e0 / s2 + s2 * (rho0 * e1 - rb * e2)
    theta_g = e0 / s2 + s2 * (rho0 + rb) * e1
    for th in (theta_p, theta_m, theta_g):
        gap = np.linalg.norm(th - theta_dag)
        if abs(gap - rho) > 1e-12:
            raise AssertionError(f"construction drifted: ||theta - theta_dag|| = {gap}")

    law = FixedActionSet(actions)
    # Bernoulli rewards are 1/2-sub-Gaussian.
    mk = lambda th: BanditInstance(th, K=3, sigma=0.5, S=1.0, context_law=law, reward="bernoulli")
    offline = OfflineSpec(theta_dag, n_off=n_off, covariate_law=law, S=1.0, reward="bernoulli")
    return HardTriple(mk(theta_p), mk(theta_m), mk(theta_g), offline, actions, rho0, rho)


@dataclass(frozen=True)
class DiagInstance:
    instance: BanditInstance
    offline: OfflineSpec
    certificate: BiasCertificate
    budgets: np.ndarray  # v_i = rho / sqrt(b_i)
    counts: np.ndarray


def make_diag_instance(n, b, mu, *, mu_offline=None, rho: float = 1.0, sigma: float = 1.0,
                       S: float | None = None) -> DiagInstance:
    """Diagonal Gaussian instance with actions ``e_1..e_d``.

    The offline design is deterministic: ``n[i]`` copies of ``e_i``, so after
    the unit ridge ``G_off = diag(1 + n)``.  ``M_bias = diag(b)``.
    """
    n = np.asarray(n, dtype=int)
    b = np.asarray(b, dtype=float)
    mu = np.asarray(mu, dtype=float)
    d = n.size
    if b.size != d or mu.size != d:
        raise InputError("n, b and mu must have equal lengths")
    if np.any(n < 0) or np.any(~(b > 0)):
        raise InputError("need n_i >= 0 and b_i > 0")
    mu_off = mu if mu_offline is None else np.asarray(mu_offline, dtype=float)
    if S is None:
        S = max(np.linalg.norm(mu), np.linalg.norm(mu_off))
    eye = np.eye(d)
    inst = BanditInstance(mu, K=d, sigma=sigma, S=S, context_law=FixedActionSet(eye))
    design = np.repeat(eye, n, axis=0) if n.sum() else eye[:0]
    law = FixedActionSet(design) if n.sum() else GaussianUnitBall()
    offline = OfflineSpec(mu_off, n_off=int(n.sum()), covariate_law=law, S=S)
    cert = BiasCertificate(SpdMatrix.diag(b), rho)
    return DiagInstance(inst, offline, cert, rho / np.sqrt(b), n)
