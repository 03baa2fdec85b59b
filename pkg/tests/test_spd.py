import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transfer_bandit import spd
from transfer_bandit.errors import DimensionError, InputError, NumericalError
from transfer_bandit.spd import (
    SpdMatrix,
    elliptic_norm,
    gen_eig_max,
    inv_norm,
    log_det,
    parallel_sum,
    rank_one_update,
    waterfill_level,
    waterfill_phi,
)

from conftest import random_spd


def cofactor_det(m):
    n = m.shape[0]
    if n == 1:
        return m[0, 0]
    return sum((-1) ** j * m[0, j] * cofactor_det(np.delete(m[1:], j, axis=1)) for j in range(n))


# -- construction -------------------------------------------------------------


def test_rejects_asymmetric_and_nonfinite():
    with pytest.raises(InputError):
        SpdMatrix([[1.0, 0.1], [0.0, 1.0]])
    with pytest.raises(InputError):
        SpdMatrix([[1.0, np.nan], [np.nan, 1.0]])
    with pytest.raises(DimensionError):
        SpdMatrix(np.ones((2, 3)))


def test_not_positive_definite_raises():
    with pytest.raises(NumericalError):
        SpdMatrix([[1.0, 2.0], [2.0, 1.0]])


def test_ill_conditioned_raises():
    with pytest.raises(NumericalError):
        SpdMatrix.diag([1.0, 1e-13])


def test_jitter_rescues_singular_psd_matrix():
    # exactly singular PSD: the plain factorization fails, the jittered one succeeds
    v = np.array([1.0, 1.0])
    M = SpdMatrix(np.outer(v, v))
    assert M.jittered
    assert np.max(np.abs(M.factor @ M.factor.T - M.entries)) <= spd.REFACTOR_TOL
    assert not SpdMatrix(np.eye(2) * 1e-3).jittered


def test_factor_reproduces_entries(rng):
    for d in (1, 3, 8):
        M = random_spd(rng, d)
        L = M.factor
        assert np.allclose(np.triu(L, 1), 0.0)
        assert np.max(np.abs(L @ L.T - M.entries)) <= spd.REFACTOR_TOL


def test_entries_are_read_only(rng):
    M = random_spd(rng, 3)
    with pytest.raises(ValueError):
        M.entries[0, 0] = 5.0


# -- elliptic and inverse norms ---------------------------------------------------


def test_elliptic_norm_examples(rng):
    assert elliptic_norm(np.zeros(3), random_spd(rng, 3)) == 0.0
    assert elliptic_norm([1.0, 0.0], SpdMatrix.diag([4.0, 9.0])) == pytest.approx(2.0, abs=1e-15)
    M = random_spd(rng, 4)
    x = rng.standard_normal(4)
    brute = sum(x[i] * M.entries[i, j] * x[j] for i in range(4) for j in range(4))
    assert elliptic_norm(x, M) == pytest.approx(math.sqrt(brute), rel=1e-12)


def test_elliptic_norm_dimension_mismatch():
    with pytest.raises(DimensionError):
        elliptic_norm(np.ones(3), SpdMatrix.identity(2))


@given(st.floats(-50, 50), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_elliptic_norm_homogeneous(c, seed):
    rng = np.random.default_rng(seed)
    M = random_spd(rng, 4)
    x = rng.standard_normal(4)
    assert elliptic_norm(c * x, M) == pytest.approx(abs(c) * elliptic_norm(x, M), rel=1e-12, abs=1e-300)


def test_inv_norm_examples(rng):
    assert inv_norm([2.0, 0.0], SpdMatrix.diag([4.0, 1.0])) == pytest.approx(1.0, abs=1e-15)
    assert inv_norm(np.zeros(2), SpdMatrix.identity(2)) == 0.0
    M = random_spd(rng, 5)
    x = rng.standard_normal(5)
    oracle = math.sqrt(x @ np.linalg.inv(M.entries) @ x)
    assert inv_norm(x, M) == pytest.approx(oracle, rel=1e-10)


def test_row_wise_norms(rng):
    M = random_spd(rng, 3)
    X = rng.standard_normal((6, 3))
    assert np.allclose(inv_norm(X, M), [inv_norm(x, M) for x in X], rtol=1e-13)
    assert np.allclose(elliptic_norm(X, M), [elliptic_norm(x, M) for x in X], rtol=1e-13)


# -- rank-one updates and log-determinants ------------------------------------------


def test_rank_one_update_example():
    out = rank_one_update(SpdMatrix.identity(2), [1.0, 0.0])
    assert np.array_equal(out.entries, np.diag([2.0, 1.0]))


def test_determinant_lemma(rng):
    for _ in range(200):
        d = int(rng.integers(1, 9))
        M = random_spd(rng, d)
        x = rng.standard_normal(d)
        new = rank_one_update(M, x)
        lhs = np.linalg.det(new.entries)
        rhs = np.linalg.det(M.entries) * (1 + inv_norm(x, M) ** 2)
        assert lhs == pytest.approx(rhs, rel=1e-8)
        assert log_det(new) - log_det(M) == pytest.approx(math.log1p(inv_norm(x, M) ** 2), abs=1e-8)


def test_repeated_updates_stay_symmetric(rng):
    M = SpdMatrix.identity(5)
    for _ in range(100):
        x = rng.standard_normal(5)
        M = rank_one_update(M, x / np.linalg.norm(x))
    assert np.max(np.abs(M.entries - M.entries.T)) <= spd.SYMMETRY_TOL


def test_log_det_examples(rng):
    assert log_det(SpdMatrix.identity(4)) == 0.0
    assert log_det(SpdMatrix.diag([2.0, 3.0])) == pytest.approx(1.791759469228055, abs=1e-15)
    M = random_spd(rng, 4)
    assert log_det(M) == pytest.approx(math.log(cofactor_det(M.entries)), abs=1e-9)


# -- parallel sum -------------------------------------------------------------------------


def test_parallel_sum_examples():
    assert np.allclose(parallel_sum(2 * np.eye(3), 2 * np.eye(3)).entries, np.eye(3), atol=1e-15)
    assert parallel_sum([[2.0]], [[3.0]]).entries[0, 0] == pytest.approx(1.2, abs=1e-15)


def test_parallel_sum_variational_and_loewner(rng):
    for _ in range(200):
        d = int(rng.integers(1, 7))
        A, B = random_spd(rng, d), random_spd(rng, d)
        P = parallel_sum(A, B)
        x = rng.standard_normal(d)
        u = np.linalg.solve(A.entries + B.entries, B.entries @ x)
        split = u @ A.entries @ u + (x - u) @ B.entries @ (x - u)
        q = x @ P.entries @ x
        assert q == pytest.approx(split, rel=1e-8)
        scale = max(1.0, abs(x @ A.entries @ x), abs(x @ B.entries @ x))
        assert q <= min(x @ A.entries @ x, x @ B.entries @ x) + 1e-9 * scale
        # the minimizer really is a minimum
        v = u + 0.01 * rng.standard_normal(d)
        assert v @ A.entries @ v + (x - v) @ B.entries @ (x - v) >= split - 1e-9 * scale


def test_parallel_sum_matches_inverse_formula(rng):
    A, B = random_spd(rng, 4), random_spd(rng, 4)
    ref = np.linalg.inv(np.linalg.inv(A.entries) + np.linalg.inv(B.entries))
    assert np.allclose(parallel_sum(A, B).entries, ref, rtol=1e-10, atol=1e-12)


# -- generalized eigenvalue -------------------------------------------------------------------


def power_method(C, iters=20000):
    v = np.ones(C.shape[0])
    lam = 0.0
    for _ in range(iters):
        v = C @ v
        v /= np.linalg.norm(v)
        new = v @ C @ v
        if abs(new - lam) <= 1e-15 * max(1.0, new):
            return new
        lam = new
    return lam


def test_gen_eig_max_examples(rng):
    assert gen_eig_max(SpdMatrix.identity(3), SpdMatrix.identity(3)) == pytest.approx(1.0, abs=1e-15)
    assert gen_eig_max(SpdMatrix.diag([4.0, 1.0]), SpdMatrix.identity(2)) == pytest.approx(4.0, abs=1e-14)
    for _ in range(20):
        G, M = random_spd(rng, 4), random_spd(rng, 4)
        w, V = np.linalg.eigh(G.entries)
        half = (V * np.sqrt(w)) @ V.T
        C = half @ np.linalg.inv(M.entries) @ half
        assert gen_eig_max(G, M) == pytest.approx(power_method(C), rel=1e-8)


def test_gen_eig_max_diagonal_ratio(rng):
    g = rng.uniform(0.5, 5, 5)
    m = rng.uniform(0.5, 5, 5)
    assert gen_eig_max(SpdMatrix.diag(g), SpdMatrix.diag(m)) == pytest.approx(np.max(g / m), rel=1e-13)


# -- waterfilling ----------------------------------------------------------------------------------


def test_waterfill_examples():
    assert waterfill_phi(SpdMatrix.identity(2), 2.0) == pytest.approx(2 * math.log(2), abs=1e-12)
    assert waterfill_phi(SpdMatrix.diag([1.0, 3.0]), 1.0) == pytest.approx(math.log(2), abs=1e-12)
    assert waterfill_phi(SpdMatrix.diag([1.0, 3.0]), 0.0) == 0.0
    assert waterfill_level([1.0, 3.0], 1.0) == (2.0, 1)


def test_waterfill_negative_budget():
    with pytest.raises(InputError):
        waterfill_phi(SpdMatrix.identity(2), -0.1)


def test_waterfill_level_solves_equation(rng):
    for _ in range(100):
        g = rng.uniform(0.1, 10, int(rng.integers(1, 7)))
        B = float(rng.uniform(0, 30))
        tau, k = waterfill_level(g, B)
        assert np.sum(np.maximum(tau - g, 0.0)) == pytest.approx(B, abs=1e-10)
        assert k == int(np.sum(g < tau)) or B == 0


def test_waterfill_concave_and_monotone(rng):
    G = SpdMatrix.diag(rng.uniform(0.5, 4, 4))
    Bs = np.linspace(0, 30, 61)
    vals = [waterfill_phi(G, B) for B in Bs]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    for i, j in itertools.combinations(range(0, 61, 5), 2):
        mid = waterfill_phi(G, (Bs[i] + Bs[j]) / 2)
        assert mid >= (vals[i] + vals[j]) / 2 - 1e-9


def test_waterfill_bounds_log_det_gain(rng):
    for _ in range(50):
        d = int(rng.integers(1, 6))
        G = random_spd(rng, d)
        X = rng.standard_normal((int(rng.integers(1, 20)), d))
        X /= np.maximum(np.linalg.norm(X, axis=1, keepdims=True), 1.0)
        gain = log_det(G.entries + X.T @ X) - log_det(G)
        assert gain <= waterfill_phi(G, float(np.sum(X * X))) + 1e-9


# -- text format ------------------------------------------------------------------------------------


def test_matrix_text_round_trip(rng):
    m = random_spd(rng, 4).entries
    buf = io.StringIO()
    spd.write_matrix(buf, m)
    text = buf.getvalue()
    assert text.splitlines()[0] == "4"
    back = spd.read_matrix(io.StringIO(text))
    assert np.array_equal(back, m)


def test_vector_text_round_trip(tmp_path, rng):
    v = rng.standard_normal(6) * 1e-7
    path = tmp_path / "v.txt"
    spd.write_vector(path, v)
    assert np.array_equal(spd.read_vector(path), v)


def test_parse_matrix_rejects_bad_header():
    with pytest.raises(DimensionError):
        spd.parse_matrix("3\n1 0\n0 1\n")
    with pytest.raises(InputError):
        spd.parse_matrix("two\n1 0\n")
