import math

import numpy as np
import pytest

from transfer_bandit.environment import OfflineSpec, generate_offline
from transfer_bandit.errors import DimensionError, InputError
from transfer_bandit.offline import (
    BiasCertificate,
    OfflineDataset,
    beta_off,
    certificate_valid,
    doubling_beta_k_on,
    doubling_schedule,
    epoch_certificate,
    fit_ridge,
    parse_bias_matrix,
    support_function,
)
from transfer_bandit.spd import SpdMatrix, inv_norm, parallel_sum

from conftest import random_spd, unit_rows


def test_fit_ridge_empty_and_single():
    r = fit_ridge(OfflineDataset(np.zeros((0, 3)), np.zeros(0)))
    assert np.array_equal(r.G_off.entries, np.eye(3))
    assert np.array_equal(r.theta_hat, np.zeros(3))
    r = fit_ridge(OfflineDataset([[1.0, 0, 0]], [1.0]))
    assert np.allclose(r.theta_hat, [0.5, 0, 0], atol=1e-15)


def test_fit_ridge_reconstruction_and_consistency(rng):
    Z = unit_rows(rng, 10_000, 3)
    theta = np.array([0.3, -0.2, 0.5])
    r = fit_ridge(OfflineDataset(Z, Z @ theta))
    assert np.max(np.abs(r.G_off.entries - (np.eye(3) + Z.T @ Z))) <= 1e-10
    assert np.linalg.norm(r.theta_hat - theta) <= 2e-3
    assert np.allclose(r.response, Z.T @ (Z @ theta), rtol=1e-10)


def test_offline_dataset_rejects_long_covariates():
    with pytest.raises(InputError):
        OfflineDataset([[1.0, 1.0]], [0.0])
    with pytest.raises(DimensionError):
        OfflineDataset([[0.1, 0.1]], [0.0, 1.0])


def test_beta_off_examples():
    ident = fit_ridge(OfflineDataset(np.zeros((0, 3)), np.zeros(0)))
    assert beta_off(ident, 0.01, 0.1, 1.0) == pytest.approx(0.1 * math.sqrt(2 * math.log(100)) + 1, abs=1e-12)
    assert beta_off(ident, 0.01, 0.1, 1.0) == pytest.approx(1.3034854, abs=1e-7)
    assert beta_off(ident, 0.3, 0.0, 2.5) == 2.5
    # G_off = diag(e^2, 1, 1): log det = 2, so the inner term gains exactly 1
    scaled = fit_ridge(OfflineDataset(np.zeros((0, 3)), np.zeros(0)))
    scaled = type(scaled)(SpdMatrix.diag([math.e**2, 1, 1]), np.zeros(3), 0)
    delta, sigma = 0.05, 0.2
    want = sigma * math.sqrt(2 * (1 + math.log(1 / delta))) + 1.0
    assert beta_off(scaled, delta, sigma, 1.0) == pytest.approx(want, abs=1e-10)
    with pytest.raises(InputError):
        beta_off(ident, 1.5, 0.1, 1.0)


def test_support_function_examples(rng):
    ridge = fit_ridge(OfflineDataset(unit_rows(rng, 30, 3), rng.standard_normal(30)))
    cert = BiasCertificate(random_spd(rng, 3), 0.0)
    x = rng.standard_normal(3)
    assert support_function(ridge, cert, 0.0, x) == pytest.approx(x @ ridge.theta_hat, rel=1e-14)
    assert support_function(ridge, BiasCertificate(cert.M_bias, 0.7), 1.3, np.zeros(3)) == 0.0
    with pytest.raises(DimensionError):
        support_function(ridge, cert, 1.0, np.ones(2))


def test_support_function_homogeneity(rng):
    ridge = fit_ridge(OfflineDataset(unit_rows(rng, 30, 4), rng.standard_normal(30)))
    cert = BiasCertificate(random_spd(rng, 4), 0.4)
    x = rng.standard_normal(4)
    base = support_function(ridge, cert, 1.1, x) - x @ ridge.theta_hat
    for c in (0.1, 2.0, 17.0):
        val = support_function(ridge, cert, 1.1, c * x) - c * x @ ridge.theta_hat
        assert val == pytest.approx(c * base, rel=1e-12)


def test_support_function_by_minkowski_sampling(rng):
    d = 3
    ridge = fit_ridge(OfflineDataset(unit_rows(rng, 40, d), rng.standard_normal(40)))
    M = random_spd(rng, d)
    beta, rho = 0.8, 0.5
    cert = BiasCertificate(M, rho)
    x = rng.standard_normal(d)
    bound = support_function(ridge, cert, beta, x)
    # u on the G-ellipsoid boundary, v on the M-ellipsoid boundary
    def boundary(Mat, radius, n):
        w = unit_rows(rng, n, d)
        L = Mat.factor
        return radius * np.linalg.solve(L.T, w.T).T

    U = boundary(ridge.G_off, beta, 10_000)
    V = boundary(M, rho, 10_000)
    vals = (ridge.theta_hat + U + V) @ x
    assert vals.max() <= bound + 1e-9
    # aim the samples: the maximizers are G^{-1}x/||x||_{G^-1} and M^{-1}x/||x||_{M^-1}
    u_star = beta * ridge.G_off.solve(x) / inv_norm(x, ridge.G_off)
    v_star = rho * M.solve(x) / inv_norm(x, M)
    near = (ridge.theta_hat + u_star + V) @ x
    near_u = (ridge.theta_hat + U + v_star) @ x
    assert max(near.max(), near_u.max()) >= bound - 0.01 * abs(bound)
    assert (ridge.theta_hat + u_star + v_star) @ x == pytest.approx(bound, rel=1e-12)


def test_certificate_valid_examples(rng):
    rho = 0.3
    M = SpdMatrix.identity(3)
    assert certificate_valid(BiasCertificate(M, 0.0), np.ones(3), np.ones(3))
    assert certificate_valid(BiasCertificate(M, rho), [rho, 0, 0], np.zeros(3))
    assert not certificate_valid(BiasCertificate(M, rho), [rho + 1e-9, 0, 0], np.zeros(3))
    lam = np.array([4.0, 1.0, 0.25])
    D = SpdMatrix.diag(lam)
    for j in range(3):
        edge = rho / math.sqrt(lam[j])
        assert certificate_valid(BiasCertificate(D, rho), edge * np.eye(3)[j] * (1 - 1e-12), np.zeros(3))
        assert not certificate_valid(BiasCertificate(D, rho), edge * np.eye(3)[j] * 1.001, np.zeros(3))


def test_certificate_rejects_negative_radius():
    with pytest.raises(InputError):
        BiasCertificate(SpdMatrix.identity(2), -0.1)


def test_epoch_certificate_examples(rng):
    ridge = fit_ridge(OfflineDataset(np.zeros((0, 3)), np.zeros(0)))
    cert = epoch_certificate(ridge, SpdMatrix.identity(3), np.zeros(3), 0.7, 0.4)
    assert cert.rho_hat == pytest.approx(1.1, abs=1e-15)
    assert cert.center_gap == 0.0
    Z = unit_rows(rng, 50, 3)
    ridge = fit_ridge(OfflineDataset(Z, rng.standard_normal(50)))
    G_on = random_spd(rng, 3)
    cert = epoch_certificate(ridge, G_on, ridge.theta_hat, 0.2, 0.3)
    assert cert.center_gap == 0.0
    assert np.allclose(cert.M_hat.entries, parallel_sum(G_on, ridge.G_off).entries)
    for _ in range(100):
        x = rng.standard_normal(3)
        q = x @ cert.M_hat.entries @ x
        assert q <= x @ G_on.entries @ x + 1e-9 and q <= x @ ridge.G_off.entries @ x + 1e-9


def test_doubling_schedule_and_radius():
    assert doubling_schedule(16) == [1, 2, 4, 8, 16]
    assert doubling_schedule(1) == [1]
    assert doubling_schedule(17) == [1, 2, 4, 8, 16]
    want = 0.1 * math.sqrt(5 * math.log(2) + 2 * math.log(3000)) + 1
    assert doubling_beta_k_on(1, 5, 15, 0.01, 0.1, 1.0) == pytest.approx(want, abs=1e-12)
    assert doubling_beta_k_on(7, 5, 15, 0.01, 0.0, 1.5) == 1.5
    vals = [doubling_beta_k_on(t, 5, 15, 0.01, 0.1, 1.0) for t in range(1, 200)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_parse_bias_matrix():
    assert np.array_equal(parse_bias_matrix("diag: [1, 2]").entries, np.diag([1.0, 2.0]))
    M = parse_bias_matrix("dense: [[2, 0.5], [0.5, 1]]", d=2)
    assert M.entries[0, 1] == 0.5
    with pytest.raises(InputError):
        parse_bias_matrix("full: [[1]]")
    with pytest.raises(DimensionError):
        parse_bias_matrix("diag: [1, 2]", d=3)


def test_offline_generator_feeds_ridge(rng):
    spec = OfflineSpec(np.array([1.0, 2, 1, 1, 1]), 2000)
    r = fit_ridge(generate_offline(spec, 0.1, rng))
    assert r.n_off == 2000
    assert np.linalg.norm(r.theta_hat - spec.theta_dagger) < 0.1
