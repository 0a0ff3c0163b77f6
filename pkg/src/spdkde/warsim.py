"""Wishart autoregressive benchmark process.

A WAR(1) series is the sum of outer products of ``kappa`` independent
Gaussian VAR(1) chains sharing an autoregressive matrix M and innovation
covariance Sigma.  Its stationary marginal is the Wishart distribution with
``kappa`` degrees of freedom and the scale solving the discrete Lyapunov
equation ``S = M S M' + Sigma``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .errors import DomainError, NumericError
from .estimators import SpdSeries
from .wishart import WishartParams, wishart_logpdf, wishart_logpdf_many

__all__ = [
    "WarModel",
    "lyapunov_stationary",
    "war1_simulate",
    "stationary_density",
    "preset_models",
]

DEFAULT_BURNIN = 200


@dataclass(frozen=True, eq=False)
class WarModel:
    """WAR(1) parameters: AR matrix M, innovation covariance, dof kappa."""

    ar: np.ndarray
    sigma: np.ndarray
    kappa: int
    stationary_scale: np.ndarray = field(init=False)

    def __post_init__(self):
        ar = np.asarray(self.ar, dtype=float)
        sigma = matcore.assert_spd(self.sigma)
        if ar.shape != sigma.shape:
            raise DomainError(f"shape mismatch: M is {ar.shape}, Sigma is {sigma.shape}")
        if self.kappa < 1:
            raise DomainError("kappa must be a positive integer")
        rho = np.max(np.abs(np.linalg.eigvals(ar)))
        if not rho < 1.0:
            raise DomainError(f"spectral radius of M must be < 1, got {rho:.6f}")
        if self.kappa < ar.shape[0]:
            warnings.warn(
                f"kappa={self.kappa} < d={ar.shape[0]}: simulated matrices may be singular",
                stacklevel=2,
            )
        object.__setattr__(self, "ar", ar)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "stationary_scale", lyapunov_stationary(ar, sigma))

    @property
    def dim(self) -> int:
        return self.ar.shape[0]


def lyapunov_stationary(m, sigma) -> np.ndarray:
    """Solve ``S = M S M' + Sigma`` as a linear system in vecp coordinates.

    With B the 0/1 transition matrix between vec and vecp, the fixed point
    satisfies ``(I - L (M (x) M) B) vecp(S) = vecp(Sigma)`` where
    ``L = (B'B)^{-1} B'`` extracts vecp from vec.
    """
    m = np.asarray(m, dtype=float)
    sigma = matcore.assert_spd(sigma)
    rho = np.max(np.abs(np.linalg.eigvals(m)))
    if not rho < 1.0:
        raise DomainError(f"spectral radius of M must be < 1, got {rho:.6f}")
    d = m.shape[0]
    b = matcore.transition_matrix(d)
    # (B'B) is diagonal with entries 1 (diagonal coords) or 2 (off-diagonal).
    extract = b.T / b.sum(axis=0)[:, None]
    a = np.eye(matcore.half_dim(d)) - extract @ np.kron(m, m) @ b
    x = np.linalg.solve(a, matcore.vecp(sigma))
    fixed = matcore.vecp_inv(x)
    residual = np.linalg.norm(fixed - m @ fixed @ m.T - sigma)
    if residual > 1e-12 * max(1.0, np.linalg.norm(fixed)):
        raise NumericError(f"Lyapunov solve residual too large: {residual:.3e}")
    return matcore.assert_spd(fixed)


def _sym_sqrt(s) -> np.ndarray:
    w, v = matcore.sym_eigen(s)
    return (v * np.sqrt(w)) @ v.T


def war1_simulate(
    model: WarModel,
    n: int,
    burnin: int = DEFAULT_BURNIN,
    rng: np.random.Generator | None = None,
) -> SpdSeries:
    """Simulate n steps of the WAR(1) process.

    The kappa Gaussian chains are initialized from the exact stationary law
    N(0, S_inf) and a further ``burnin`` steps are discarded, so the emitted
    series is stationary from the first observation.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if burnin < 0:
        raise ValueError("burnin must be >= 0")
    rng = np.random.default_rng() if rng is None else rng
    d, kappa = model.dim, model.kappa
    root_inf = _sym_sqrt(model.stationary_scale)
    root_inno = _sym_sqrt(model.sigma)
    z = rng.standard_normal((kappa, d)) @ root_inf
    out = np.empty((n, d, d))
    mt = model.ar.T
    for t in range(burnin + n):
        z = z @ mt + rng.standard_normal((kappa, d)) @ root_inno
        if t >= burnin:
            out[t - burnin] = z.T @ z
    return SpdSeries(out, meta={"kappa": kappa}, validate=kappa >= d)


class StationaryDensity:
    """Callable log density of the WAR(1) stationary marginal."""

    def __init__(self, params: WishartParams):
        self.params = params

    def __call__(self, s) -> float:
        return wishart_logpdf(self.params, s)

    def many(self, points: np.ndarray) -> np.ndarray:
        return wishart_logpdf_many(self.params, points)


def stationary_density(model: WarModel) -> StationaryDensity:
    """Log density S -> ln K_{kappa, S_inf}(S) of the stationary marginal."""
    if not model.kappa > model.dim - 1:
        raise DomainError("stationary density requires kappa > d - 1")
    return StationaryDensity(WishartParams(dof=float(model.kappa), scale=model.stationary_scale))


def preset_models() -> dict[str, WarModel]:
    """The nine benchmark configurations (M_i, Sigma_j) with kappa = 4."""
    ms = {
        "M1": np.array([[0.9, 0.0], [1.0, 0.0]]),
        "M2": np.array([[0.3, -0.3], [-0.3, 0.3]]),
        "M3": np.array([[0.5, 0.0], [0.0, 0.5]]),
    }
    sigmas = {
        "S1": np.eye(2),
        "S2": np.array([[1.0, 0.5], [0.5, 1.0]]),
        "S3": np.array([[1.0, 0.9], [0.9, 1.0]]),
    }
    out = {}
    for mi, m in ms.items():
        for sj, sig in sigmas.items():
            out[f"{mi}{sj}"] = WarModel(ar=m, sigma=sig, kappa=4)
    return out
