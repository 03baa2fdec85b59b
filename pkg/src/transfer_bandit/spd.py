"""Dense symmetric positive-definite linear algebra.

Every solve against an SPD matrix goes through its lower Cholesky factor
with two triangular solves; no explicit inverse is ever formed.  The
LAPACK routines are called directly because the matrices here are small
(``d`` of a few to a hundred) and wrapper overhead would dominate.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.linalg import lapack

from .errors import DimensionError, InputError, NumericalError

__all__ = [
    "SYMMETRY_TOL",
    "REFACTOR_TOL",
    "JITTER_SCALE",
    "MAX_CONDITION",
    "SpdMatrix",
    "as_spd",
    "elliptic_norm",
    "inv_norm",
    "rank_one_update",
    "log_det",
    "parallel_sum",
    "gen_eig_max",
    "waterfill_level",
    "waterfill_phi",
    "format_matrix",
    "parse_matrix",
    "write_matrix",
    "read_matrix",
    "write_vector",
    "read_vector",
]

# Global tolerances; module-level constants so tests and callers agree.
SYMMETRY_TOL = 1e-12
REFACTOR_TOL = 1e-9
JITTER_SCALE = 1e-10
MAX_CONDITION = 1e12


def cholesky_lower(a: np.ndarray) -> tuple[np.ndarray, bool]:
    """Lower Cholesky factor of ``a`` with a single jitter retry.

    Returns ``(L, jittered)``.  Raises NumericalError when the matrix is not
    numerically positive definite or its pivot spread exceeds
    ``MAX_CONDITION``.
    """
    factor, info = lapack.dpotrf(a, lower=1, clean=1)
    jittered = False
    if info != 0:
        d = a.shape[0]
        bump = JITTER_SCALE * max(float(np.trace(a)) / d, 1.0)
        factor, info = lapack.dpotrf(a + bump * np.eye(d), lower=1, clean=1)
        jittered = True
        if info != 0:
            raise NumericalError(
                f"matrix is not positive definite (dpotrf info={info})"
            )
    pivots = np.diagonal(factor).tolist()
    lo = min(pivots)
    if not lo > 0.0 or (max(pivots) / lo) ** 2 > MAX_CONDITION:
        raise NumericalError("factorization is singular or too ill-conditioned")
    return factor, jittered


def forward_solve(factor: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``L y = rhs`` for lower-triangular ``L``."""
    y, info = lapack.dtrtrs(factor, rhs, lower=1)
    if info != 0:
        raise NumericalError(f"triangular solve failed (dtrtrs info={info})")
    return y


def backward_solve(factor: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``L^T y = rhs`` for lower-triangular ``L``."""
    y, info = lapack.dtrtrs(factor, rhs, lower=1, trans=1)
    if info != 0:
        raise NumericalError(f"triangular solve failed (dtrtrs info={info})")
    return y


class SpdMatrix:
    """Immutable SPD matrix together with its lower Cholesky factor.

    Parameters
    ----------
    entries : array_like, shape (d, d)
        Symmetric positive-definite matrix.  It is copied.
    check : bool
        Validate finiteness and symmetry.  Internal callers that construct
        exactly symmetric sums skip this.
    """

    __slots__ = ("_entries", "_factor", "_jittered", "_log_det")

    def __init__(self, entries, *, check: bool = True):
        a = np.array(entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DimensionError(f"expected a non-empty square matrix, got {a.shape}")
        if check:
            if not np.all(np.isfinite(a)):
                raise InputError("matrix has non-finite entries")
            asym = np.abs(a - a.T)
            if np.any(asym > SYMMETRY_TOL * np.maximum(1.0, np.abs(a))):
                raise InputError("matrix is not symmetric")
        self._adopt(a)

    def _adopt(self, a: np.ndarray) -> None:
        a.flags.writeable = False
        factor, jittered = cholesky_lower(a)
        factor.flags.writeable = False
        self._entries = a
        self._factor = factor
        self._jittered = jittered
        self._log_det = None

    @classmethod
    def _trusted(cls, a: np.ndarray) -> "SpdMatrix":
        """Take ownership of a freshly built, exactly symmetric float array."""
        obj = cls.__new__(cls)
        obj._adopt(a)
        return obj

    @classmethod
    def identity(cls, d: int) -> "SpdMatrix":
        return cls(np.eye(d), check=False)

    @classmethod
    def diag(cls, values) -> "SpdMatrix":
        values = np.asarray(values, dtype=float)
        if values.ndim != 1 or np.any(~(values > 0)):
            raise InputError("diagonal entries must be positive")
        return cls(np.diag(values), check=False)

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def factor(self) -> np.ndarray:
        """Lower-triangular ``L`` with ``L L^T = entries`` (up to jitter)."""
        return self._factor

    @property
    def jittered(self) -> bool:
        return self._jittered

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._entries.copy()
        return self._entries.astype(dtype)

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim or x.ndim > 2:
            raise DimensionError(
                f"vector of shape {x.shape} does not match matrix dim {self.dim}"
            )
        return x

    def half_solve(self, x) -> np.ndarray:
        """``L^{-1} x``; for 2-D input each row is a vector."""
        x = self._check(x)
        if x.ndim == 1:
            return forward_solve(self._factor, x)
        return forward_solve(self._factor, x.T).T

    def solve(self, x) -> np.ndarray:
        """``M^{-1} x`` via two triangular solves; rows for 2-D input."""
        x = self._check(x)
        rhs = x if x.ndim == 1 else x.T
        y, info = lapack.dpotrs(self._factor, rhs, lower=1)
        if info != 0:
            raise NumericalError(f"Cholesky solve failed (dpotrs info={info})")
        return y if x.ndim == 1 else y.T

    def quad(self, x) -> np.ndarray | float:
        """``x^T M x`` (row-wise for 2-D input)."""
        x = self._check(x)
        if x.ndim == 1:
            return float(x @ self._entries @ x)
        return np.einsum("ij,jk,ik->i", x, self._entries, x)

    def log_det(self) -> float:
        if self._log_det is None:
            self._log_det = 2.0 * math.fsum(map(math.log, np.diagonal(self._factor).tolist()))
        return self._log_det


def as_spd(m) -> SpdMatrix:
    return m if isinstance(m, SpdMatrix) else SpdMatrix(m)


def _row_scale(x: np.ndarray) -> np.ndarray:
    # per-vector max magnitude, so squares neither underflow nor overflow
    s = np.max(np.abs(x), axis=-1, keepdims=x.ndim > 1)
    return np.where(s > 0, s, 1.0)


def elliptic_norm(x, M) -> float | np.ndarray:
    """``sqrt(x^T M x)``.  Rows of a 2-D ``x`` are treated as vectors."""
    M = as_spd(M)
    x = M._check(x)
    s = _row_scale(x)
    q = M.quad(x / s)
    if np.ndim(q) == 0:
        return float(s) * math.sqrt(max(q, 0.0))
    return s.ravel() * np.sqrt(np.maximum(q, 0.0))


def inv_norm(x, M) -> float | np.ndarray:
    """``sqrt(x^T M^{-1} x)`` through a forward triangular solve."""
    M = as_spd(M)
    x = M._check(x)
    s = _row_scale(x)
    z = M.half_solve(x / s)
    if z.ndim == 1:
        return float(s) * math.sqrt(z @ z)
    return s.ravel() * np.sqrt(np.einsum("ij,ij->i", z, z))


def rank_one_update(M, x) -> SpdMatrix:
    """Return the new matrix ``M + x x^T``."""
    M = as_spd(M)
    x = M._check(x)
    if x.ndim != 1:
        raise DimensionError("rank_one_update expects a single vector")
    # np.outer(x, x) is exactly symmetric, so the sum is too.
    return SpdMatrix._trusted(M.entries + np.outer(x, x))


def log_det(M) -> float:
    return as_spd(M).log_det()


def parallel_sum(A, B) -> SpdMatrix:
    """Parallel sum ``(A^{-1} + B^{-1})^{-1}`` computed as ``B (A+B)^{-1} A``."""
    A, B = as_spd(A), as_spd(B)
    if A.dim != B.dim:
        raise DimensionError(f"dims differ: {A.dim} vs {B.dim}")
    total = SpdMatrix._trusted(A.entries + B.entries)
    r = B.entries @ total.solve(A.entries.T).T
    return SpdMatrix._trusted(0.5 * (r + r.T))


def gen_eig_max(G, M) -> float:
    """Largest eigenvalue of ``G^{1/2} M^{-1} G^{1/2}``.

    Evaluated as the top eigenvalue of ``L_G^T M^{-1} L_G``, which is similar
    to the target matrix.
    """
    G, M = as_spd(G), as_spd(M)
    if G.dim != M.dim:
        raise DimensionError(f"dims differ: {G.dim} vs {M.dim}")
    w = M.half_solve(G.factor.T)  # rows: L_M^{-1} (columns of L_G)
    c = w @ w.T
    try:
        vals = np.linalg.eigvalsh(0.5 * (c + c.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalError("symmetric eigen-solve did not converge") from exc
    return float(vals[-1])


def waterfill_level(eigenvalues, budget: float) -> tuple[float, int]:
    """Water level ``tau`` with ``sum_j (tau - g_j)_+ = budget``.

    Returns ``(tau, k)`` where the ``k`` smallest eigenvalues are submerged.
    The level is exact on the active segment of the piecewise-linear
    equation.
    """
    if budget < 0:
        raise InputError(f"budget must be nonnegative, got {budget}")
    g = np.sort(np.asarray(eigenvalues, dtype=float))
    d = g.size
    if d == 0 or g[0] <= 0:
        raise InputError("eigenvalues must be positive")
    running = 0.0
    for k in range(1, d + 1):
        running += g[k - 1]
        tau = (budget + running) / k
        if k == d or tau <= g[k]:
            return tau, k
    raise AssertionError("unreachable")


def waterfill_phi(G, budget: float) -> float:
    """Maximal log-information gain ``Phi_G(B)`` over eigenvalues of ``G``."""
    if budget < 0:
        raise InputError(f"budget must be nonnegative, got {budget}")
    if budget == 0:
        return 0.0
    g = np.linalg.eigvalsh(as_spd(G).entries)
    tau, k = waterfill_level(g, budget)
    g = np.sort(g)[:k]
    return float(np.sum(np.log(tau / g)))


# -- text fixtures -----------------------------------------------------------


def format_matrix(m) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    lines = [str(m.shape[1])]
    lines += [" ".join(format(v, ".17g") for v in row) for row in m]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    rows = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    if not rows:
        raise InputError("empty matrix text")
    try:
        d = int(rows[0][0])
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise InputError(f"malformed matrix text: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != d:
        raise DimensionError(f"header says d={d}, rows have shape {data.shape}")
    return data


def _open_text(target, mode):
    if isinstance(target, (str, os.PathLike)):
        return open(target, mode, encoding="utf-8")
    return target


def write_matrix(target, m) -> None:
    """Write ``d`` then ``d`` rows of 17-significant-digit decimals."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected square matrix, got {m.shape}")
    fh = _open_text(target, "w")
    try:
        fh.write(format_matrix(m))
    finally:
        if fh is not target:
            fh.close()


def read_matrix(source) -> np.ndarray:
    fh = _open_text(source, "r")
    try:
        m = parse_matrix(fh.read())
    finally:
        if fh is not source:
            fh.close()
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected {m.shape[1]} rows, got {m.shape[0]}")
    return m


def write_vector(target, x) -> None:
    """Vectors use the same layout with a single data row."""
    x = np.asarray(x, dtype=float).reshape(1, -1)
    fh = _open_text(target, "w")
    try:
        fh.write(format_matrix(x))
    finally:
        if fh is not target:
            fh.close()


def read_vector(source) -> np.ndarray:
    fh = _open_text(source, "r")
    try:
        m = parse_matrix(fh.read())
    finally:
        if fh is not source:
            fh.close()
    if m.shape[0] != 1:
        raise DimensionError(f"expected one data row, got {m.shape[0]}")
    return m[0]
