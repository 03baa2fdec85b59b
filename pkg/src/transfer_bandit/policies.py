"""Layered elimination policies for linear contextual bandits with offline data.

``LayeredPolicy`` runs the SupLinUCB layer loop.  Depending on its mode each
arm is scored by the online ridge branch only, or additionally by a pooled
branch that fuses the layer's Gram with the offline design and pays a
direction-dependent bias premium; the aggregated interval is the
intersection of the two.  The bias premium uses either a fixed certificate
or one re-learned at epoch boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InputError, InternalInvariantError
from .offline import (
    BiasCertificate,
    EpochCertificate,
    OfflineRidge,
    beta_off,
    doubling_beta_k_on,
    doubling_schedule,
    epoch_certificate,
    ridge_radius,
)
from .spd import SpdMatrix, backward_solve, forward_solve, gen_eig_max

__all__ = [
    "Mode",
    "PolicyConfig",
    "LayerState",
    "BranchScores",
    "RoundResult",
    "LayeredPolicy",
    "OfflineGreedy",
    "make_policy",
    "online_radius",
    "pooled_estimator",
    "psi",
    "pooled_radius",
    "minucb_round",
    "epoch_minucb_round",
    "baseline_suplinucb_round",
    "baseline_warmstart_round",
    "baseline_offline_greedy",
]

WIDTH_SLACK = 1e-12


class Mode(str, Enum):
    ONLINE_ONLY = "suplinucb"
    FIXED_CERTIFICATE = "minucb"
    EPOCH_CERTIFICATE = "epoch_minucb"
    WARM_START = "warmstart"
    OFFLINE_GREEDY = "offline_greedy"


@dataclass(frozen=True)
class PolicyConfig:
    """Horizon, noise/norm constants and confidence schedule.

    The default total failure budget is ``T^-2``: a quarter each to the
    offline radius and the online grid, half to the pooled grid, each grid
    split uniformly over its ``T (L+1)`` cells.
    """

    T: int
    sigma: float
    S: float
    mode: Mode = Mode.FIXED_CERTIFICATE
    delta_total: float | None = None
    epoch_schedule: tuple | None = None
    delta_bias: float = 0.05

    def __post_init__(self):
        if self.T < 1:
            raise InputError("T must be at least 1")
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.delta_total is not None and not 0 < self.delta_total < 1:
            raise InputError("delta_total must lie in (0, 1)")
        if not 0 < self.delta_bias < 1:
            raise InputError("delta_bias must lie in (0, 1)")
        if self.epoch_schedule is not None:
            sched = tuple(int(t) for t in self.epoch_schedule)
            if not sched or sched[0] != 1 or any(b <= a for a, b in zip(sched, sched[1:])):
                raise InputError("epoch schedule must start at 1 and increase strictly")
            if sched[-1] > self.T:
                raise InputError("epoch starts must not exceed T")
            object.__setattr__(self, "epoch_schedule", sched)

    @property
    def L(self) -> int:
        return math.ceil(math.log2(self.T)) if self.T > 1 else 0

    @property
    def budget(self) -> float:
        return self.delta_total if self.delta_total is not None else self.T ** -2.0

    @property
    def delta_off(self) -> float:
        return self.budget / 4

    @property
    def delta_on(self) -> float:
        return self.budget / 4

    @property
    def delta_on_tl(self) -> float:
        return self.delta_on / (self.T * (self.L + 1))

    @property
    def delta_pool_tl(self) -> float:
        return self.budget / 2 / (self.T * (self.L + 1))

    @property
    def epochs(self) -> tuple:
        return self.epoch_schedule or tuple(doubling_schedule(self.T))


class LayerState:
    """History routed to one layer.

    ``A`` and ``b`` hold the raw Gram and response sums of routed pulls.
    ``prior_A``/``prior_b`` (zero unless warm-started) are added on top when
    forming ``V = I + prior_A + A`` and the pooled matrix ``prior_A + A + G``.
    Factorizations are refreshed on every append.
    """

    def __init__(self, level: int, d: int, ridge: OfflineRidge, *, prior_A=None, prior_b=None):
        self.level = level
        self.d = d
        self.A = np.zeros((d, d))
        self.b = np.zeros(d)
        self.count = 0
        self.prior_A = np.zeros((d, d)) if prior_A is None else np.array(prior_A, dtype=float)
        self.prior_b = np.zeros(d) if prior_b is None else np.array(prior_b, dtype=float)
        self._ridge = ridge
        self._eye = np.eye(d)
        self._refresh()

    def _refresh(self):
        gram = self.prior_A + self.A
        resp = self.prior_b + self.b
        G = self._ridge.G_off
        self.V = SpdMatrix._trusted(self._eye + gram)
        self.P = SpdMatrix._trusted(gram + G.entries)
        self.theta_on = self.V.solve(resp)
        self.theta_pool = self.P.solve(resp + self._ridge.response)
        self.log_det_V = self.V.log_det()
        self.log_det_ratio_pool = self.P.log_det() - G.log_det()

    def add(self, x: np.ndarray, r: float) -> None:
        self.A += np.outer(x, x)
        self.b += r * x
        self.count += 1
        self._refresh()


@dataclass
class BranchScores:
    """Scores of the surviving arms at one layer (arrays indexed like ``arms``)."""

    level: int
    arms: np.ndarray
    U_on: np.ndarray
    L_on: np.ndarray
    U_pool: np.ndarray
    L_pool: np.ndarray
    U_min: np.ndarray
    L_max: np.ndarray
    width: np.ndarray
    psi: np.ndarray
    pool_norm: np.ndarray

    @property
    def w_on(self):
        return self.U_on - self.L_on

    @property
    def w_pool(self):
        return self.U_pool - self.L_pool


@dataclass
class RoundResult:
    arm: int
    layer: int
    reward: float
    scored: list = field(repr=False)
    position: int = 0  # index of ``arm`` inside ``scored[-1].arms``
    psi: float = math.nan
    pool_norm: float = math.nan
    rho: float = math.nan
    c_align: float = math.nan
    epoch: int = 0

    @property
    def final(self) -> BranchScores:
        return self.scored[-1]


def _col_norms(z: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->j", z, z))


# -- single-quantity helpers -------------------------------------------------


def online_radius(layer: LayerState, x, delta_on_tl: float, sigma: float, S: float) -> float:
    beta = ridge_radius(layer.log_det_V, delta_on_tl, sigma, S)
    z = forward_solve(layer.V.factor, np.asarray(x, dtype=float))
    return beta * math.sqrt(z @ z)


def pooled_estimator(layer: LayerState, ridge: OfflineRidge) -> np.ndarray:
    """Solution of ``(A + G_off) theta = b + G_off theta_off``."""
    if layer.d != ridge.d:
        raise InputError("layer and ridge dimensions differ")
    return layer.P.solve(layer.prior_b + layer.b + ridge.response)


def psi(layer: LayerState, ridge: OfflineRidge, M_bias: SpdMatrix, x) -> float:
    """Norm of ``M_bias^{-1/2} G_off (A + G_off)^{-1} x``."""
    w = ridge.G_off.entries @ layer.P.solve(np.asarray(x, dtype=float))
    z = forward_solve(M_bias.factor, w)
    return math.sqrt(z @ z)


def pooled_radius(layer: LayerState, ridge: OfflineRidge, cert: BiasCertificate,
                  delta_pool_tl: float, beta_off_val: float, sigma: float, x) -> float:
    gamma = ridge_radius(layer.log_det_ratio_pool, delta_pool_tl, sigma)
    z = forward_solve(layer.P.factor, np.asarray(x, dtype=float))
    return (gamma + beta_off_val) * math.sqrt(z @ z) + cert.rho * psi(layer, ridge, cert.M_bias, x)


# -- policies ----------------------------------------------------------------


class LayeredPolicy:
    """SupLinUCB elimination shell with optional pooled branch.

    Parameters
    ----------
    config : PolicyConfig
    ridge : OfflineRidge
        Offline ridge objects.  Pass ``fit_ridge`` of an empty dataset when
        no offline data exists.
    certificate : BiasCertificate, optional
        Required for the fixed-certificate mode.  In other modes it is only
        used to record the routed bias factor for diagnostics.
    epoch_certificate_fn : callable, optional
        ``(policy, k, tau) -> EpochCertificate`` override for the epoch mode.
    """

    def __init__(self, config: PolicyConfig, ridge: OfflineRidge,
                 certificate: BiasCertificate | None = None, *, epoch_certificate_fn=None):
        mode = config.mode
        if mode is Mode.OFFLINE_GREEDY:
            raise InputError("use OfflineGreedy for the non-adaptive baseline")
        if mode is Mode.FIXED_CERTIFICATE and certificate is None:
            raise InputError("fixed-certificate mode needs a BiasCertificate")
        if certificate is not None and certificate.M_bias.dim != ridge.d:
            raise InputError("certificate dimension does not match the offline design")
        self.config = config
        self.mode = mode
        self.ridge = ridge
        self.certificate = certificate
        self.d = d = ridge.d
        self.L = config.L
        self.pooled = mode in (Mode.FIXED_CERTIFICATE, Mode.EPOCH_CERTIFICATE)
        self.beta_off = beta_off(ridge, config.delta_off, config.sigma, config.S)
        self._log_inv_on = -math.log(config.delta_on_tl)
        self._log_inv_pool = -math.log(config.delta_pool_tl)

        prior_A = prior_b = None
        if mode is Mode.WARM_START:
            prior_A = ridge.G_off.entries - np.eye(d)
            prior_b = ridge.response
        self.layers = [
            LayerState(0, d, ridge, prior_A=prior_A, prior_b=prior_b)
        ] + [LayerState(ell, d, ridge) for ell in range(1, self.L + 1)]

        self.t = 0
        # full-trajectory sufficient statistics (epoch certificates)
        self.gram_all = np.zeros((d, d))
        self.resp_all = np.zeros(d)
        self.epoch_certs: list[EpochCertificate] = []
        self._epoch_fn = epoch_certificate_fn
        self._epochs = config.epochs if mode is Mode.EPOCH_CERTIFICATE else ()
        self._bias = certificate
        self._c_align = math.nan
        if certificate is not None:
            self._set_bias(certificate)

    # -- bias geometry -------------------------------------------------------

    def _set_bias(self, cert: BiasCertificate) -> None:
        self._bias = cert
        self._c_align = gen_eig_max(self.ridge.G_off, cert.M_bias)

    @property
    def current_bias(self) -> BiasCertificate | None:
        return self._bias

    def _start_epoch(self, k: int, tau: int) -> None:
        if self._epoch_fn is not None:
            cert = self._epoch_fn(self, k, tau)
        else:
            cfg = self.config
            G_on = SpdMatrix(np.eye(self.d) + self.gram_all, check=False)
            theta_on = G_on.solve(self.resp_all)
            K_ep = len(self._epochs)
            b_on = doubling_beta_k_on(tau, self.d, K_ep, cfg.delta_bias, cfg.sigma, cfg.S)
            b_off = beta_off(self.ridge, cfg.delta_bias / 2, cfg.sigma, cfg.S)
            cert = epoch_certificate(self.ridge, G_on, theta_on, b_on, b_off, k=k, tau=tau)
        self.epoch_certs.append(cert)
        self._set_bias(BiasCertificate(cert.M_hat, cert.rho_hat))

    # -- scoring -------------------------------------------------------------

    def score(self, level: int, X: np.ndarray, arms: np.ndarray) -> BranchScores:
        layer = self.layers[level]
        cfg = self.config
        Xs = X[arms]
        Xt = np.ascontiguousarray(Xs.T)
        z_on = forward_solve(layer.V.factor, Xt)
        beta_on = cfg.sigma * math.sqrt(2.0 * (0.5 * layer.log_det_V + self._log_inv_on)) + cfg.S
        mean_on = Xs @ layer.theta_on
        rad_on = beta_on * _col_norms(z_on)
        U_on, L_on = mean_on + rad_on, mean_on - rad_on

        if self.pooled:
            bias = self._bias
            z_p = forward_solve(layer.P.factor, Xt)
            pool_norm = _col_norms(z_p)
            w = self.ridge.G_off.entries @ backward_solve(layer.P.factor, z_p)
            psi_v = _col_norms(forward_solve(bias.M_bias.factor, w))
            gamma = cfg.sigma * math.sqrt(
                2.0 * max(0.5 * layer.log_det_ratio_pool + self._log_inv_pool, 0.0)
            )
            mean_pool = Xs @ layer.theta_pool
            rad_pool = (gamma + self.beta_off) * pool_norm + bias.rho * psi_v
            U_pool, L_pool = mean_pool + rad_pool, mean_pool - rad_pool
            U_min = np.minimum(U_on, U_pool)
            L_max = np.maximum(L_on, L_pool)
        else:
            nan = np.full(arms.size, math.nan)
            pool_norm = psi_v = nan
            U_pool = np.full(arms.size, math.inf)
            L_pool = np.full(arms.size, -math.inf)
            U_min, L_max = U_on, L_on
        width = U_min - L_max
        if np.isnan(width).any():
            raise InternalInvariantError(f"NaN width at round {self.t}, layer {level}")
        return BranchScores(level, arms, U_on, L_on, U_pool, L_pool, U_min, L_max,
                            width, psi_v, pool_norm)

    # -- round ---------------------------------------------------------------

    def round(self, contexts, pull) -> RoundResult:
        """Run one round: score, eliminate, play, and route the observation.

        ``pull(arm_index) -> reward``.  The observation is appended only to
        the stopping layer.
        """
        self.t += 1
        t = self.t
        if self._epochs and len(self.epoch_certs) < len(self._epochs):
            k = len(self.epoch_certs)
            if self._epochs[k] == t:
                self._start_epoch(k + 1, t)
        X = contexts.arms if hasattr(contexts, "arms") else np.asarray(contexts)
        survivors = np.arange(X.shape[0])
        scored = []
        for level in range(self.L + 1):
            s = self.score(level, X, survivors)
            scored.append(s)
            if level == self.L:
                pos = int(np.argmax(s.U_min))
                break
            wide = np.flatnonzero(s.width > 2.0 ** -level)
            if wide.size:
                pos = int(wide[np.argmax(s.U_min[wide])])
                break
            keep = s.U_min >= s.L_max.max()
            survivors = survivors[keep]
            if survivors.size == 0:
                raise InternalInvariantError(f"empty survivor set at round {t}, layer {level}")
        arm = int(s.arms[pos])
        x = X[arm]
        layer = self.layers[level]
        if self.pooled:
            psi_t, norm_t = float(s.psi[pos]), float(s.pool_norm[pos])
        else:
            psi_t, norm_t = _routed_factors(layer.P, self.ridge, self._bias, x)
        r = float(pull(arm))
        layer.add(x, r)
        self.gram_all += np.outer(x, x)
        self.resp_all += r * x
        bias = self._bias
        return RoundResult(
            arm=arm, layer=level, reward=r, scored=scored, position=pos,
            psi=psi_t, pool_norm=norm_t,
            rho=bias.rho if bias is not None else math.nan,
            c_align=self._c_align, epoch=len(self.epoch_certs),
        )


def _routed_factors(P: SpdMatrix, ridge: OfflineRidge, bias, x) -> tuple[float, float]:
    """``(psi(x), ||x||_{P^{-1}})`` for a single played vector."""
    z = forward_solve(P.factor, x)
    norm = math.sqrt(z @ z)
    if bias is None:
        return math.nan, norm
    w = ridge.G_off.entries @ backward_solve(P.factor, z)
    zb = forward_solve(bias.M_bias.factor, w)
    return math.sqrt(zb @ zb), norm


class OfflineGreedy:
    """Plays ``argmax x^T theta_off`` every round and never updates."""

    mode = Mode.OFFLINE_GREEDY

    def __init__(self, config: PolicyConfig, ridge: OfflineRidge,
                 certificate: BiasCertificate | None = None):
        self.config = config
        self.ridge = ridge
        self.L = config.L
        self.t = 0
        self.epoch_certs = []
        self._bias = certificate
        self._c_align = math.nan
        if certificate is not None:
            self._c_align = gen_eig_max(ridge.G_off, certificate.M_bias)

    def round(self, contexts, pull) -> RoundResult:
        self.t += 1
        X = contexts.arms if hasattr(contexts, "arms") else np.asarray(contexts)
        arm = int(np.argmax(X @ self.ridge.theta_hat))
        x = X[arm]
        psi_t, norm_t = _routed_factors(self.ridge.G_off, self.ridge, self._bias, x)
        r = float(pull(arm))
        return RoundResult(arm=arm, layer=0, reward=r, scored=[], position=0,
                           psi=psi_t, pool_norm=norm_t,
                           rho=self._bias.rho if self._bias is not None else math.nan,
                           c_align=self._c_align)


def make_policy(config: PolicyConfig, ridge: OfflineRidge,
                certificate: BiasCertificate | None = None, **kwargs):
    if config.mode is Mode.OFFLINE_GREEDY:
        return OfflineGreedy(config, ridge, certificate)
    return LayeredPolicy(config, ridge, certificate, **kwargs)


# -- per-round entry points ----------------------------------------------------


def _round_for(policy, modes, contexts, pull):
    if policy.mode not in modes:
        raise InputError(f"policy mode {policy.mode.value!r} not accepted here")
    return policy.round(contexts, pull)


def minucb_round(policy, contexts, pull) -> RoundResult:
    return _round_for(policy, (Mode.FIXED_CERTIFICATE,), contexts, pull)


def epoch_minucb_round(policy, contexts, pull) -> RoundResult:
    return _round_for(policy, (Mode.EPOCH_CERTIFICATE,), contexts, pull)


def baseline_suplinucb_round(policy, contexts, pull) -> RoundResult:
    return _round_for(policy, (Mode.ONLINE_ONLY,), contexts, pull)


def baseline_warmstart_round(policy, contexts, pull) -> RoundResult:
    return _round_for(policy, (Mode.WARM_START,), contexts, pull)


def baseline_offline_greedy(policy, contexts, pull) -> RoundResult:
    return _round_for(policy, (Mode.OFFLINE_GREEDY,), contexts, pull)
