"""Theory-side quantities computed from completed trajectories.

Everything here is a pure function of a :class:`RegretTrace` plus the
offline ridge objects (and, where relevant, the certificate and policy
configuration).  Inequality checks raise :class:`InvariantViolation` when
they fail by more than ``INEQ_SLACK``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InputError, InvariantViolation
from .offline import BiasCertificate, OfflineRidge, beta_off, ridge_radius
from .policies import LayerState, PolicyConfig
from .simulation import RegretTrace
from .spd import SpdMatrix, gen_eig_max, inv_norm, rank_one_update, waterfill_phi

__all__ = [
    "INEQ_SLACK",
    "DEFAULT_C_SL",
    "lambda_ell",
    "psi_path_sum",
    "psi_bound_check",
    "potential_check",
    "pooled_better_test",
    "spectral_envelope_check",
    "epoch_penalty",
    "diagonal_oracle",
    "diagnostics_report",
]

INEQ_SLACK = 1e-6
DEFAULT_C_SL = 44.0


def _layer_rows(trace: RegretTrace):
    for ell in range(trace.L + 1):
        yield ell, trace.features[trace.stop_layer == ell]


def lambda_ell(trace: RegretTrace, ridge: OfflineRidge) -> tuple[list[float], float]:
    """Per-layer pooled log-determinant gains and their total.

    ``Lambda_l = log det(A_l + G_off) - log det(G_off)`` with ``A_l`` the
    final raw Gram of layer ``l``.
    """
    G = ridge.G_off
    out = []
    for _, X in _layer_rows(trace):
        if X.shape[0] == 0:
            out.append(0.0)
            continue
        P = SpdMatrix._trusted(G.entries + X.T @ X)
        out.append(max(P.log_det() - G.log_det(), 0.0))
    return out, float(math.fsum(out))


def psi_path_sum(trace: RegretTrace, *, epoch: bool | None = None) -> float:
    """Sum of routed bias factors along the trajectory.

    With a fixed certificate this is ``sum_t psi_t``; for the epoch policy
    (``epoch=True``, inferred from the trace name by default) each round is
    weighted by its epoch radius, ``sum_t rho_k(t) psi_t``.  Rounds without
    a recorded factor make the result NaN.
    """
    if epoch is None:
        epoch = trace.policy == "epoch_minucb"
    terms = trace.rho_used * trace.psi if epoch else trace.psi
    if np.isnan(terms).any():
        return math.nan
    return float(math.fsum(terms.tolist()))


def psi_bound_check(trace: RegretTrace, ridge: OfflineRidge, cert: BiasCertificate) -> dict:
    """``sum psi <= sqrt(2 c_align T Lambda)`` for a fixed-certificate run."""
    c = gen_eig_max(ridge.G_off, cert.M_bias)
    _, lam = lambda_ell(trace, ridge)
    lhs = psi_path_sum(trace, epoch=False)
    rhs = math.sqrt(2.0 * c * trace.T * lam)
    if not lhs <= rhs + INEQ_SLACK:
        raise InvariantViolation(f"routed psi sum {lhs:.9g} exceeds bound {rhs:.9g}")
    return {"psi_sum": lhs, "bound": rhs, "c_align": c}


def potential_check(trace: RegretTrace, ridge: OfflineRidge) -> list[dict]:
    """Layerwise pooled elliptical potential, recomputed from the features.

    Replays each layer's pulls in order, accumulating
    ``||x||^2_{(A + G_off)^{-1}}`` before every append, and compares the sum
    with ``2 Lambda_l``.
    """
    G = ridge.G_off
    lams, _ = lambda_ell(trace, ridge)
    out = []
    for ell, X in _layer_rows(trace):
        P = G
        total = 0.0
        for x in X:
            total += inv_norm(x, P) ** 2
            P = rank_one_update(P, x)
        bound = 2.0 * lams[ell]
        if total > bound + INEQ_SLACK:
            raise InvariantViolation(
                f"layer {ell}: potential {total:.9g} exceeds 2*Lambda {bound:.9g}"
            )
        out.append({"layer": ell, "potential": total, "bound": bound, "pulls": int(X.shape[0])})
    return out


def spectral_envelope_check(trace: RegretTrace, ridge: OfflineRidge) -> dict:
    """``Lambda_total <= L_max * Phi_G(T / L_max)`` with ``L_max = ceil(log2 T) + 1``."""
    T = trace.T
    L_max = (math.ceil(math.log2(T)) if T > 1 else 0) + 1
    _, lhs = lambda_ell(trace, ridge)
    rhs = L_max * waterfill_phi(ridge.G_off, T / L_max)
    if lhs > rhs + INEQ_SLACK:
        raise InvariantViolation(f"log-det total {lhs:.9g} exceeds envelope {rhs:.9g}")
    return {"lhs": lhs, "rhs": rhs, "L_max": L_max}


def pooled_better_test(trace: RegretTrace, ridge: OfflineRidge, cert: BiasCertificate,
                       config: PolicyConfig, C_SL: float = DEFAULT_C_SL) -> dict:
    """Evaluate the explicit pooled-better inequality on a finished run.

    ``Lambda (Gamma_pool + rho sqrt(c_align))^2 <= C_SL^2 / 128 * d * L_T^3``
    where ``L_T = log(2 K T log T / delta_on)``.  At ``T < 3`` the inner
    ``log T`` is floored at one so ``L_T`` stays finite.
    """
    lams, lam = lambda_ell(trace, ridge)
    lam_max = max(lams)
    sigma, S = config.sigma, config.S
    b_off = beta_off(ridge, config.delta_off, sigma, S)
    delta_min = config.delta_pool_tl
    gamma_pool = b_off + sigma * math.sqrt(lam_max + 2.0 * math.log(1.0 / delta_min))
    c = gen_eig_max(ridge.G_off, cert.M_bias)
    T, K, d = trace.T, trace.K, trace.d
    log_T = max(math.log(T), 1.0)
    L_T = math.log(2.0 * K * T * log_T / config.delta_on)
    lhs = lam * (gamma_pool + cert.rho * math.sqrt(c)) ** 2
    rhs = C_SL**2 / 128.0 * d * L_T**3
    return {
        "lambda_per_layer": lams,
        "lambda_total": lam,
        "lambda_max": lam_max,
        "beta_off": b_off,
        "delta_min_pool": delta_min,
        "gamma_pool": gamma_pool,
        "c_align": c,
        "rho": cert.rho,
        "L_T": L_T,
        "C_SL": C_SL,
        "lhs": lhs,
        "rhs": rhs,
        "verdict": bool(lhs <= rhs),
    }


def epoch_penalty(trace: RegretTrace, certs, ridge: OfflineRidge) -> dict:
    """Adaptivity penalty of an epoch run and its Cauchy-Schwarz check.

    ``S_ep = sum_k (tau_{k+1} - tau_k) rho_k^2 c_k`` with
    ``c_k = gen_eig_max(G_off, M_k)`` and ``tau_{K+1} = T + 1``; the routed
    sum ``sum_t rho_k(t) psi_t`` must not exceed ``sqrt(2 Lambda S_ep)``.
    """
    certs = list(certs)
    if not certs:
        raise InputError("epoch_penalty needs at least one epoch certificate")
    taus = [c.tau for c in certs] + [trace.T + 1]
    c_hat = [gen_eig_max(ridge.G_off, c.M_hat) for c in certs]
    s_ep = math.fsum(
        (taus[k + 1] - taus[k]) * certs[k].rho_hat ** 2 * c_hat[k] for k in range(len(certs))
    )
    _, lam = lambda_ell(trace, ridge)
    psi_ep = psi_path_sum(trace, epoch=True)
    bound = math.sqrt(2.0 * lam * s_ep)
    if not psi_ep <= bound + INEQ_SLACK:
        raise InvariantViolation(f"epoch routed sum {psi_ep:.9g} exceeds {bound:.9g}")
    return {"s_ep": s_ep, "c_hat": c_hat, "psi_sum": psi_ep, "bound": bound,
            "taus": taus[:-1]}


def _is_diagonal(m: np.ndarray, tol: float = 1e-12) -> bool:
    off = m - np.diag(np.diagonal(m))
    return bool(np.all(np.abs(off) <= tol * max(1.0, float(np.abs(m).max()))))


def diagonal_oracle(layer: LayerState, ridge: OfflineRidge, cert: BiasCertificate, arm: int, *,
                    delta_pool_tl: float, beta_off_val: float, sigma: float) -> float:
    """Arm-wise closed form of the pooled UCB on a diagonal instance.

    With actions ``e_1..e_d``, the layer Gram, ``G_off`` and ``M_bias`` are
    all diagonal and the pooled UCB of arm ``a`` is

        mu_a + (gamma + beta_off) / sqrt(N_a + g_a) + g_a / (N_a + g_a) * v_a

    where ``N_a`` is the online count, ``g_a = 1 + n_a`` the ridge-inclusive
    offline count, ``mu_a = (b_a + g_a theta_off_a) / (N_a + g_a)`` and
    ``v_a = rho / sqrt(m_a)``.
    """
    A = layer.prior_A + layer.A
    G = ridge.G_off.entries
    M = cert.M_bias.entries
    if not (_is_diagonal(A) and _is_diagonal(G) and _is_diagonal(M)):
        raise InputError("diagonal oracle needs diagonal layer Gram, G_off and M_bias")
    d = G.shape[0]
    if not 0 <= arm < d:
        raise InputError(f"arm {arm} out of range for d={d}")
    N = np.diagonal(A)
    g = np.diagonal(G)
    ratio = math.fsum(math.log1p(n / gg) for n, gg in zip(N.tolist(), g.tolist()))
    gamma = ridge_radius(ratio, delta_pool_tl, sigma)
    b = layer.prior_b + layer.b
    N_a, g_a = float(N[arm]), float(g[arm])
    mu = (b[arm] + g_a * ridge.theta_hat[arm]) / (N_a + g_a)
    v = cert.rho / math.sqrt(M[arm, arm])
    return mu + (gamma + beta_off_val) / math.sqrt(N_a + g_a) + g_a / (N_a + g_a) * v


def diagnostics_report(trace: RegretTrace, ridge: OfflineRidge, config: PolicyConfig,
                       cert: BiasCertificate | None = None, C_SL: float = DEFAULT_C_SL) -> dict:
    """JSON-ready summary of one run.

    Fields that need a certificate (``c_align``, ``gamma_pool``, the verdict)
    are ``None`` without one; ``s_ep`` is ``None`` unless the trace carries
    epoch certificates.
    """
    lams, lam = lambda_ell(trace, ridge)
    env = spectral_envelope_check(trace, ridge)
    psi_sum = psi_path_sum(trace)
    report = {
        "lambda_per_layer": lams,
        "lambda_total": lam,
        "psi_sum": None if math.isnan(psi_sum) else psi_sum,
        "c_align": None,
        "gamma_pool": None,
        "pooled_better_verdict": None,
        "envelope_lhs": env["lhs"],
        "envelope_rhs": env["rhs"],
        "s_ep": None,
    }
    if cert is not None:
        pb = pooled_better_test(trace, ridge, cert, config, C_SL)
        report.update(c_align=pb["c_align"], gamma_pool=pb["gamma_pool"],
                      pooled_better_verdict=pb["verdict"])
    if trace.epoch_certs:
        report["s_ep"] = epoch_penalty(trace, trace.epoch_certs, ridge)["s_ep"]
    return report
