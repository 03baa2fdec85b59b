"""Offline ridge estimation and directional bias certificates.

Holds the fixed certificate ``(M_bias, rho)``, the fused offline confidence
region, and the epoch-wise certificate learned from the gap between an
online and the offline ridge estimate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InputError
from .spd import SpdMatrix, elliptic_norm, inv_norm, parallel_sum

__all__ = [
    "OfflineDataset",
    "OfflineRidge",
    "BiasCertificate",
    "EpochCertificate",
    "fit_ridge",
    "ridge_radius",
    "beta_off",
    "support_function",
    "certificate_valid",
    "epoch_certificate",
    "doubling_schedule",
    "doubling_beta_k_on",
    "parse_bias_matrix",
]

CERT_SLACK = 1e-12


@dataclass(frozen=True)
class OfflineDataset:
    """Offline covariates ``Z`` (n, d) and responses ``y`` (n,)."""

    Z: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float)
        y = np.array(self.y, dtype=float).reshape(-1)
        if Z.ndim != 2 or Z.shape[0] != y.size:
            raise DimensionError(f"Z {Z.shape} and y {y.shape} do not pair up")
        if Z.shape[0] and np.any(np.linalg.norm(Z, axis=1) > 1.0 + 1e-12):
            raise InputError("offline covariates must have norm at most 1")
        Z.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "y", y)

    @property
    def d(self) -> int:
        return self.Z.shape[1]

    @property
    def pairs(self):
        return list(zip(self.Z, self.y))

    def __len__(self):
        return self.y.size


@dataclass(frozen=True)
class OfflineRidge:
    G_off: SpdMatrix
    theta_hat: np.ndarray
    n_off: int

    @property
    def d(self) -> int:
        return self.G_off.dim

    @property
    def response(self) -> np.ndarray:
        """``G_off theta_hat``, i.e. the offline sum of ``z_i y_i``."""
        return self.G_off.entries @ self.theta_hat


@dataclass(frozen=True)
class BiasCertificate:
    """Pair ``(M_bias, rho)`` asserting ``||theta_* - theta_dagger||_M <= rho``."""

    M_bias: SpdMatrix
    rho: float

    def __post_init__(self):
        if not isinstance(self.M_bias, SpdMatrix):
            object.__setattr__(self, "M_bias", SpdMatrix(self.M_bias))
        if not self.rho >= 0:
            raise InputError(f"rho must be nonnegative, got {self.rho}")


@dataclass(frozen=True)
class EpochCertificate:
    k: int
    tau: int
    M_hat: SpdMatrix
    rho_hat: float
    G_on: SpdMatrix
    theta_on: np.ndarray
    center_gap: float
    beta_on: float
    beta_off: float

    def as_certificate(self) -> BiasCertificate:
        return BiasCertificate(self.M_hat, self.rho_hat)


def fit_ridge(data: OfflineDataset, d: int | None = None) -> OfflineRidge:
    """Unit-regularized ridge: ``G_off = I + Z^T Z``, ``theta = G_off^{-1} Z^T y``."""
    d = data.d if d is None else d
    if data.d != d:
        raise DimensionError(f"data has dim {data.d}, expected {d}")
    Z, y = data.Z, data.y
    gram = np.eye(d) + Z.T @ Z
    gram = 0.5 * (gram + gram.T)
    G = SpdMatrix(gram, check=False)
    theta = G.solve(Z.T @ y) if len(data) else np.zeros(d)
    return OfflineRidge(G, theta, len(data))


def ridge_radius(log_det_ratio: float, delta: float, sigma: float, S: float = 0.0) -> float:
    """``sigma * sqrt(2 (log_det_ratio / 2 + log(1/delta))) + S``.

    Shared form of every self-normalized ridge radius in the package; the
    caller passes the relevant log-determinant (ratio).
    """
    if not 0 < delta < 1:
        raise InputError(f"delta must lie in (0, 1), got {delta}")
    inner = 0.5 * log_det_ratio - math.log(delta)
    return sigma * math.sqrt(2.0 * max(inner, 0.0)) + S


def beta_off(ridge: OfflineRidge, delta: float, sigma: float, S: float) -> float:
    return ridge_radius(ridge.G_off.log_det(), delta, sigma, S)


def support_function(ridge: OfflineRidge, cert: BiasCertificate, beta: float, x) -> float:
    """Largest ``x^T theta`` over the fused offline confidence region."""
    x = np.asarray(x, dtype=float)
    if x.shape != (ridge.d,) or cert.M_bias.dim != ridge.d:
        raise DimensionError(f"x has shape {x.shape}, expected ({ridge.d},)")
    return (
        float(x @ ridge.theta_hat)
        + beta * inv_norm(x, ridge.G_off)
        + cert.rho * inv_norm(x, cert.M_bias)
    )


def certificate_valid(cert: BiasCertificate, theta_star, theta_dagger) -> bool:
    delta = np.asarray(theta_star, dtype=float) - np.asarray(theta_dagger, dtype=float)
    if delta.shape != (cert.M_bias.dim,):
        raise DimensionError("parameter dimension does not match M_bias")
    return elliptic_norm(delta, cert.M_bias) <= cert.rho + CERT_SLACK


def epoch_certificate(ridge: OfflineRidge, online_gram: SpdMatrix, online_theta,
                      beta_k_on: float, beta_off_val: float, *, k: int = 1,
                      tau: int = 1) -> EpochCertificate:
    """Data-driven certificate from the online/offline estimate gap.

    ``online_gram`` and ``online_theta`` must be built from rounds strictly
    before ``tau``.  The metric is the parallel sum of the two Grams and the
    radius adds both ridge widths to the centre gap.
    """
    online_theta = np.asarray(online_theta, dtype=float)
    M_hat = parallel_sum(online_gram, ridge.G_off)
    gap = elliptic_norm(online_theta - ridge.theta_hat, M_hat)
    return EpochCertificate(
        k=k, tau=tau, M_hat=M_hat, rho_hat=gap + beta_k_on + beta_off_val,
        G_on=online_gram, theta_on=online_theta, center_gap=gap,
        beta_on=beta_k_on, beta_off=beta_off_val,
    )


def doubling_schedule(T: int) -> list[int]:
    """Epoch starts ``tau_k = 2^(k-1)`` for ``k = 1 .. floor(log2 T) + 1``."""
    if T < 1:
        raise InputError("T must be at least 1")
    return [2**k for k in range(int(math.floor(math.log2(T))) + 1)]


def doubling_beta_k_on(tau_k: int, d: int, K_ep: int, delta_bias: float,
                       sigma: float, S: float) -> float:
    """``sigma * sqrt(d log(1 + tau_k) + 2 log(2 K_ep / delta_bias)) + S``."""
    if tau_k < 1:
        raise InputError("tau_k must be at least 1")
    return sigma * math.sqrt(d * math.log1p(tau_k) + 2.0 * math.log(2.0 * K_ep / delta_bias)) + S


def parse_bias_matrix(text: str, d: int | None = None) -> SpdMatrix:
    """Parse ``"diag: [..]"`` or ``"dense: [[..], ..]"`` into an SPD matrix."""
    kind, sep, body = text.partition(":")
    kind = kind.strip().lower()
    if not sep or kind not in ("diag", "dense"):
        raise InputError(f"M_bias must start with 'diag:' or 'dense:', got {text!r}")
    try:
        values = np.asarray(json.loads(body), dtype=float)
    except (ValueError, TypeError) as exc:
        raise InputError(f"cannot parse M_bias values: {exc}") from exc
    M = SpdMatrix.diag(values) if kind == "diag" else SpdMatrix(values)
    if d is not None and M.dim != d:
        raise DimensionError(f"M_bias has dim {M.dim}, expected {d}")
    return M
