"""Wishart density, sampling, and the smoothing-kernel parametrization.

The smoothing kernel anchored at an SPD matrix ``S`` with bandwidth ``b`` is
the Wishart density with degrees of freedom ``nu(b, d) = 1/b + d + 1`` and
scale ``b S``; this choice places the kernel's mode exactly at ``S``.  The
module also exposes the analytic envelope quantities (supremum bound, L^q
norms, pointwise difference bound, eigenvalue tail bounds) used to validate
the estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .errors import DimensionError, DomainError

__all__ = [
    "WishartParams",
    "KernelParams",
    "wishart_logpdf",
    "wishart_logpdf_many",
    "sample_wishart",
    "kernel_params",
    "kernel_moments",
    "kernel_sup_bound",
    "kernel_lq_norm_sq",
    "kernel_diff_bound",
    "eigen_tail_bounds",
]

LN2 = math.log(2.0)


@dataclass(frozen=True, eq=False)
class WishartParams:
    """Degrees of freedom and scale matrix of a Wishart distribution."""

    dof: float
    scale: np.ndarray
    # Derived, filled in __post_init__.
    dim: int = field(init=False)
    scale_inv: np.ndarray = field(init=False)
    scale_logdet: float = field(init=False)

    def __post_init__(self):
        scale = matcore.assert_spd(self.scale)
        d = scale.shape[0]
        if not self.dof > d - 1:
            raise DomainError(f"Wishart dof must exceed d - 1 = {d - 1}, got {self.dof}")
        w, v = matcore.sym_eigen(scale)
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "scale_inv", matcore.symmetrize((v / w) @ v.T))
        object.__setattr__(self, "scale_logdet", float(np.sum(np.log(w))))

    @property
    def log_norm(self) -> float:
        """Log normalizing constant ln{|2 Sigma|^(nu/2) Gamma_d(nu/2)}."""
        d, nu = self.dim, self.dof
        return (nu / 2.0) * (d * LN2 + self.scale_logdet) + matcore.multigamma_ln(d, nu / 2.0)


@dataclass(frozen=True, eq=False)
class KernelParams:
    """Smoothing-kernel parameters derived from a bandwidth and anchor point."""

    bandwidth: float
    anchor: np.ndarray
    wishart: WishartParams = field(init=False)

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        anchor = matcore.assert_spd(self.anchor)
        d = anchor.shape[0]
        object.__setattr__(self, "anchor", anchor)
        object.__setattr__(
            self,
            "wishart",
            WishartParams(dof=1.0 / self.bandwidth + d + 1, scale=self.bandwidth * anchor),
        )

    @property
    def dof(self) -> float:
        return self.wishart.dof

    @property
    def scale(self) -> np.ndarray:
        return self.wishart.scale


def kernel_params(b: float, s) -> KernelParams:
    """Kernel parameters nu = 1/b + d + 1 and scale bS anchored at S."""
    return KernelParams(bandwidth=float(b), anchor=s)


def wishart_logpdf(params: WishartParams, x) -> float:
    """Log density of the Wishart distribution at an SPD matrix."""
    x = matcore.assert_spd(x)
    if x.shape != params.scale.shape:
        raise DimensionError(
            f"dimension mismatch: X is {x.shape}, scale is {params.scale.shape}"
        )
    return float(wishart_logpdf_many(params, x[None, :, :])[0])


def wishart_logpdf_many(params: WishartParams, xs: np.ndarray) -> np.ndarray:
    """Vectorized log density over a stack of SPD matrices, shape (m, d, d).

    No per-matrix SPD validation is performed here; callers own that.
    """
    xs = np.asarray(xs, dtype=float)
    d, nu = params.dim, params.dof
    sign, logdet = np.linalg.slogdet(xs)
    if np.any(sign <= 0):
        raise DomainError("encountered a non-positive-definite matrix in the batch")
    trace = np.einsum("ij,mij->m", params.scale_inv, xs)
    return (nu - d - 1) / 2.0 * logdet - trace / 2.0 - params.log_norm


def sample_wishart(params: WishartParams, rng: np.random.Generator, size: int | None = None):
    """Draw from the Wishart distribution by the Bartlett construction.

    The lower-triangular factor L has chi-square diagonal entries
    ``L_ii^2 ~ chi2(nu - i + 1)`` and standard normal strict lower triangle;
    the draw is ``A L L^T A^T`` with ``A`` the symmetric square root of the
    scale.  Non-integer degrees of freedom are supported.  With ``size=None``
    a single (d, d) matrix is returned, otherwise a (size, d, d) stack.
    """
    d, nu = params.dim, params.dof
    m = 1 if size is None else int(size)
    ell = np.zeros((m, d, d))
    rows, cols = np.tril_indices(d, -1)
    if rows.size:
        ell[:, rows, cols] = rng.standard_normal((m, rows.size))
    dofs = nu - np.arange(d)
    diag = np.sqrt(rng.chisquare(dofs, size=(m, d)))
    ell[:, np.arange(d), np.arange(d)] = diag
    w, v = matcore.sym_eigen(params.scale)
    root = (v * np.sqrt(w)) @ v.T
    al = np.einsum("ij,mjk->mik", root, ell)
    out = np.einsum("mik,mjk->mij", al, al)
    out = (out + np.swapaxes(out, 1, 2)) / 2.0
    return out[0] if size is None else out


def kernel_moments(b: float, s) -> tuple[np.ndarray, np.ndarray]:
    """Mean and leading half-vectorized covariance of the smoothing kernel.

    The mean is exact, ``(1 + b (d + 1)) S``; the covariance is the leading
    term ``2 b C(S)`` of the second-moment expansion, with ``C`` the
    half-vectorized Kronecker-square form of S.
    """
    if not b > 0:
        raise ValueError("bandwidth must be positive")
    s = matcore.assert_spd(s)
    d = s.shape[0]
    mean = (1.0 + b * (d + 1)) * s
    cov = 2.0 * b * matcore.vecp_kron_form(s)
    return mean, cov


def kernel_sup_bound(b: float, s) -> float:
    """Leading upper bound on the supremum of the smoothing kernel.

    Returns ``b^{-r/2} |S|^{-(d+1)/2} / (2^{r/2 + d/2} pi^{r/2})`` with
    ``r = d(d+1)/2``; the true supremum exceeds this by at most a
    ``1 + O(b)`` factor.
    """
    s = matcore.assert_spd(s)
    d = s.shape[0]
    r = matcore.half_dim(d)
    log_bound = (
        -(r / 2.0) * math.log(b)
        - (d + 1) / 2.0 * matcore.spd_logdet(s)
        - (r / 2.0 + d / 2.0) * LN2
        - (r / 2.0) * math.log(math.pi)
    )
    return math.exp(log_bound)


def kernel_lq_norm_sq(b: float, s, q: float) -> float:
    """Leading value of the squared L^q norm of the smoothing kernel.

    For conjugate exponents 1/p + 1/q = 1 the value is
    ``b^{-r/p} |S|^{-(d+1)/p} / (2^{(r+d)/p} q^{r/q} pi^{r/p})``, again up to
    a ``1 + O(b)`` factor.
    """
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    s = matcore.assert_spd(s)
    d = s.shape[0]
    r = matcore.half_dim(d)
    p = q / (q - 1.0)
    log_val = (
        -(r / p) * math.log(b)
        - (d + 1) / p * matcore.spd_logdet(s)
        - (r + d) / p * LN2
        - (r / q) * math.log(q)
        - (r / p) * math.log(math.pi)
    )
    return math.exp(log_val)


def kernel_diff_bound(b: float, s, s2, x) -> float:
    """Pointwise bound on |K_{nu, bS'}(X) - K_{nu, bS}(X)|.

    Combines the supremum bound at the smaller determinant with a Lipschitz
    factor in the Frobenius distance of the anchors; used to property-test
    the continuity of the estimator in its evaluation point.
    """
    s = matcore.assert_spd(s)
    s2 = matcore.assert_spd(s2)
    x = matcore.assert_spd(x)
    d = s.shape[0]
    nu = 1.0 / b + d + 1
    lam_min = min(np.linalg.eigvalsh(s)[0], np.linalg.eigvalsh(s2)[0])
    lam1_x = np.linalg.eigvalsh(x)[-1]
    logdet_min = min(matcore.spd_logdet(s), matcore.spd_logdet(s2))
    r = matcore.half_dim(d)
    sup = math.exp(
        -(r / 2.0) * math.log(b)
        - (d + 1) / 2.0 * logdet_min
        - (r / 2.0 + d / 2.0) * LN2
        - (r / 2.0) * math.log(math.pi)
    )
    lipschitz = (
        math.sqrt(d)
        * (nu + lam1_x / (b * lam_min))
        / (2.0 * lam_min)
        * float(np.linalg.norm(s - s2))
    )
    return sup * lipschitz


def eigen_tail_bounds(params: WishartParams, delta: float) -> tuple[float, float]:
    """Exponential tail bounds for the extreme eigenvalues of a Wishart draw.

    Returns ``(upper, lower)`` with
    ``P(lambda_1 >= 1/delta) <= upper = exp(-1 / (4 delta lambda_1(Sigma)))``
    and ``P(lambda_d <= delta) <= lower = 1 - exp(-delta tr(Sigma^{-1}) / 2)``.
    The upper bound requires ``delta < 1 / (6 nu d lambda_1(Sigma))``, the
    lower one ``nu >= d + 1``.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    d, nu = params.dim, params.dof
    lam1 = float(np.linalg.eigvalsh(params.scale)[-1])
    if not delta < 1.0 / (6.0 * nu * d * lam1):
        raise DomainError(
            "upper tail bound requires delta < 1/(6 nu d lambda_1(Sigma)) = "
            f"{1.0 / (6.0 * nu * d * lam1):.3e}"
        )
    if not nu >= d + 1:
        raise DomainError(f"lower tail bound requires nu >= d + 1 = {d + 1}")
    upper = math.exp(-1.0 / (4.0 * delta * lam1))
    lower = -math.expm1(-delta * float(np.trace(params.scale_inv)) / 2.0)
    return upper, lower
