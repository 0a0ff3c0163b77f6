"""Dense symmetric/SPD matrix algebra shared by the estimation modules.

Conventions used throughout the package:

* Symmetric matrices are plain ``(d, d)`` float ndarrays; every public
  entry point symmetrizes via ``(A + A.T) / 2`` so downstream arithmetic
  cannot accumulate asymmetry.
* ``vecp`` stacks the columns of the upper triangle,
  ``(X11, X12, X22, X13, X23, X33, ...)``, a vector of length
  ``r(d) = d (d + 1) / 2``.
* Eigenvalues are always reported in descending order.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from .errors import DimensionError, DomainError, NumericError

__all__ = [
    "half_dim",
    "tri_dim",
    "symmetrize",
    "sym_eigen",
    "is_spd",
    "assert_spd",
    "spd_logdet",
    "matrix_log",
    "matrix_exp",
    "vecp",
    "vecp_inv",
    "vecp_indices",
    "transition_matrix",
    "vecp_kron_form",
    "multigamma_ln",
    "log_sum_exp",
]

# Relative floor for calling a symmetric matrix positive definite.
SPD_EIG_RTOL = 1e-12


def half_dim(d: int) -> int:
    """Length r(d) = d(d+1)/2 of the half-vectorization of a d x d matrix."""
    return d * (d + 1) // 2


def tri_dim(length: int) -> int:
    """Matrix dimension d such that d(d+1)/2 == length.

    Raises
    ------
    DimensionError
        If ``length`` is not a triangular number.
    """
    d = int((math.isqrt(8 * length + 1) - 1) // 2)
    if d * (d + 1) // 2 != length:
        raise DimensionError(f"length {length} is not a triangular number")
    return d


def symmetrize(a) -> np.ndarray:
    """Return (A + A.T)/2 as a float array, validating shape and finiteness."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("matrix has non-finite entries")
    return (a + a.T) / 2.0


def sym_eigen(s) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns ``(w, v)`` with eigenvalues ``w`` sorted in descending order and
    orthonormal eigenvectors as the columns of ``v``, so that
    ``v @ diag(w) @ v.T`` reconstructs the symmetrized input.
    """
    s = symmetrize(s)
    w, v = np.linalg.eigh(s)
    return w[::-1].copy(), v[:, ::-1].copy()


def _spd_eigen(s) -> tuple[np.ndarray, np.ndarray]:
    w, v = sym_eigen(s)
    if w[-1] <= SPD_EIG_RTOL * max(1.0, w[0]):
        raise DomainError(
            f"matrix is not positive definite (eigenvalues {w.min():.3e}..{w.max():.3e})"
        )
    return w, v


def is_spd(s) -> bool:
    """True if the symmetrized input passes the positive-definiteness test."""
    try:
        _spd_eigen(s)
    except (DomainError, NumericError, DimensionError):
        return False
    return True


def assert_spd(s) -> np.ndarray:
    """Symmetrize and return the input, raising DomainError if not SPD."""
    s = symmetrize(s)
    _spd_eigen(s)
    return s


def spd_logdet(s) -> float:
    """Log-determinant of an SPD matrix, computed from its eigenvalues."""
    w, _ = _spd_eigen(s)
    return float(np.sum(np.log(w)))


def matrix_log(s) -> np.ndarray:
    """Matrix logarithm of an SPD matrix via its eigendecomposition."""
    w, v = _spd_eigen(s)
    return symmetrize((v * np.log(w)) @ v.T)


def matrix_exp(y) -> np.ndarray:
    """Matrix exponential of a symmetric matrix via its eigendecomposition."""
    w, v = sym_eigen(y)
    return symmetrize((v * np.exp(w)) @ v.T)


def vecp_indices(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column indices (i, j) with i <= j in vecp order.

    The k-th entry of ``vecp(X)`` is ``X[rows[k], cols[k]]``.
    """
    # Lower-triangular indices in row-major order enumerate (j, i) pairs in
    # exactly the column order of the upper triangle.
    cols, rows = np.tril_indices(d)
    return rows, cols


def vecp(s) -> np.ndarray:
    """Half-vectorization stacking the columns of the upper triangle."""
    s = symmetrize(s)
    rows, cols = vecp_indices(s.shape[0])
    return s[rows, cols].copy()


def vecp_inv(v) -> np.ndarray:
    """Symmetric matrix with ``vecp(vecp_inv(v)) == v`` exactly."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {v.shape}")
    d = tri_dim(v.shape[0])
    rows, cols = vecp_indices(d)
    out = np.zeros((d, d))
    out[rows, cols] = v
    out[cols, rows] = v
    return out


def transition_matrix(d: int) -> np.ndarray:
    """0/1 matrix B_d with ``vec(X) == B_d @ vecp(X)`` for symmetric X.

    ``vec`` stacks full columns, so B_d has shape ``(d*d, d(d+1)/2)`` and each
    row carries a single 1 pointing at the upper-triangle coordinate that
    stores the entry.
    """
    if d < 1:
        raise DimensionError("d must be >= 1")
    r = half_dim(d)
    b = np.zeros((d * d, r))
    rows, cols = vecp_indices(d)
    for k in range(r):
        i, j = rows[k], cols[k]
        b[j * d + i, k] = 1.0
        b[i * d + j, k] = 1.0
    return b


def vecp_kron_form(s) -> np.ndarray:
    """Half-vectorized second-moment form of a symmetric matrix.

    Returns the ``r(d) x r(d)`` matrix ``C`` with entries

        C[(i,j),(k,l)] = (S_ik S_jl + S_il S_jk) / 2,

    indexed in vecp order.  For a Wishart(nu, Sigma) matrix W this is the
    exact shape of the half-vectorized covariance,
    ``Cov(vecp(W)) = 2 nu C(Sigma)``; it equals the projection of the
    Kronecker square ``S (x) S`` onto vecp coordinates.
    """
    s = symmetrize(s)
    rows, cols = vecp_indices(s.shape[0])
    i, j = rows[:, None], cols[:, None]
    k, l = rows[None, :], cols[None, :]
    return (s[i, k] * s[j, l] + s[i, l] * s[j, k]) / 2.0


def multigamma_ln(d: int, alpha) -> np.ndarray | float:
    """Log of the multivariate gamma function.

    Uses the product form
    ``ln Gamma_d(a) = d(d-1)/4 ln(pi) + sum_i ln Gamma(a - (i-1)/2)``.
    ``alpha`` may be a scalar or an array; the domain requirement is
    ``alpha > (d - 1) / 2``.
    """
    if d < 1:
        raise DimensionError("d must be >= 1")
    alpha = np.asarray(alpha, dtype=float)
    if np.any(alpha <= (d - 1) / 2.0):
        raise DomainError(f"multigamma_ln requires alpha > (d-1)/2 = {(d - 1) / 2}")
    out = d * (d - 1) / 4.0 * math.log(math.pi)
    out = out + sum(gammaln(alpha - i / 2.0) for i in range(d))
    return float(out) if np.isscalar(out) or out.ndim == 0 else out


def log_sum_exp(values, axis=None):
    """log(sum(exp(values))) with the usual max-shift stabilization.

    Values of -inf are legal and drop out of the sum; a slice that is all
    -inf yields -inf.  An empty input raises ValueError.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("log_sum_exp of an empty collection")
    m = np.max(v, axis=axis, keepdims=True)
    # Guard the subtraction when an entire slice is -inf.
    shift = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(v - shift), axis=axis, keepdims=True)) + shift
    out = np.where(np.isfinite(m), out, m)
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
