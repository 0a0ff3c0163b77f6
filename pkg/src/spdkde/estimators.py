"""Density estimators on the SPD cone.

Two kernel density estimators are provided for a sample of SPD matrices:

* the Wishart KDE, which smooths directly on the cone with a kernel whose
  mode sits at the evaluation point, and
* the log-Gaussian KDE, which smooths the matrix logarithms of the data with
  a Gaussian kernel on the space of symmetric matrices and transports the
  result back through the matrix exponential (Jacobian included).

All densities are computed in log space; sums of kernels go through
``log_sum_exp``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import matcore
from .errors import DimensionError, DomainError
from .wishart import kernel_params, wishart_logpdf_many

__all__ = [
    "SpdSeries",
    "KdeSpec",
    "wishart_kde_log_eval",
    "loggauss_kde_log_eval",
    "kde_log_eval_many",
    "matrix_log_jacobian_ln",
    "eval_grid",
    "grid_to_csv",
    "grid_to_json",
]

KERNELS = ("wishart", "loggauss")

# Eigenvalue-gap threshold below which the matrix-log Jacobian switches to
# its equal-eigenvalue branch.
_EIG_EQUAL_RTOL = 1e-10


class SpdSeries:
    """An ordered sample of same-dimension SPD matrices.

    Parameters
    ----------
    matrices : array_like, shape (n, d, d)
        The observations.  Each matrix is symmetrized on construction.
    timestamps : sequence, optional
        Per-observation labels (dates, integers, ...); kept as-is.
    meta : dict, optional
        Free-form metadata (e.g. the degrees of freedom of a generator).
    validate : bool
        If True (default), every observation must pass the SPD test.
    """

    def __init__(self, matrices, timestamps=None, meta=None, validate=True):
        arr = np.asarray(matrices, dtype=float)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise DimensionError(f"expected shape (n, d, d), got {arr.shape}")
        if arr.shape[0] < 1:
            raise DimensionError("a series needs at least one observation")
        if not np.all(np.isfinite(arr)):
            raise DomainError("series contains non-finite entries")
        arr = (arr + np.swapaxes(arr, 1, 2)) / 2.0
        if validate:
            eigs = np.linalg.eigvalsh(arr)
            bad = eigs[:, 0] <= matcore.SPD_EIG_RTOL * np.maximum(1.0, eigs[:, -1])
            if np.any(bad):
                idx = int(np.nonzero(bad)[0][0])
                raise DomainError(f"observation {idx} is not positive definite")
        if timestamps is not None and len(timestamps) != arr.shape[0]:
            raise DimensionError("timestamps length does not match the sample size")
        self.matrices = arr
        self.timestamps = list(timestamps) if timestamps is not None else None
        self.meta = dict(meta) if meta else {}

    def __len__(self) -> int:
        return self.matrices.shape[0]

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    @cached_property
    def logdets(self) -> np.ndarray:
        sign, logdet = np.linalg.slogdet(self.matrices)
        return logdet

    @cached_property
    def inverses(self) -> np.ndarray:
        return np.linalg.inv(self.matrices)

    @cached_property
    def logmats(self) -> np.ndarray:
        """Matrix logarithms of the observations, shape (n, d, d)."""
        w, v = np.linalg.eigh(self.matrices)
        out = np.einsum("nik,nk,njk->nij", v, np.log(w), v)
        return (out + np.swapaxes(out, 1, 2)) / 2.0

    @cached_property
    def logmat_sqnorms(self) -> np.ndarray:
        """Squared Frobenius norms of the matrix logarithms."""
        y = self.logmats
        return np.einsum("nij,nij->n", y, y)

    @cached_property
    def vecps(self) -> np.ndarray:
        rows, cols = matcore.vecp_indices(self.dim)
        return self.matrices[:, rows, cols]

    def subset(self, index) -> "SpdSeries":
        ts = None
        if self.timestamps is not None:
            ts = [self.timestamps[i] for i in np.atleast_1d(np.arange(len(self))[index])]
        return SpdSeries(self.matrices[index], timestamps=ts, meta=self.meta, validate=False)

    # -- CSV round trip -----------------------------------------------------

    def to_csv(self, path) -> None:
        """Write vecp rows with a metadata header line."""
        d = self.dim
        rows, cols = matcore.vecp_indices(d)
        names = [f"x{r + 1}{c + 1}" for r, c in zip(rows, cols)]
        meta = " ".join(f"{k}={v}" for k, v in sorted(self.meta.items()))
        with open(path, "w", newline="") as fh:
            fh.write(f"# spdkde-series d={d}" + (f" {meta}" if meta else "") + "\n")
            writer = csv.writer(fh)
            writer.writerow(names)
            for row in self.vecps:
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path) -> "SpdSeries":
        with open(path, newline="") as fh:
            first = fh.readline().strip()
            meta = {}
            if first.startswith("#"):
                for tok in first.lstrip("# ").split():
                    if "=" in tok:
                        k, v = tok.split("=", 1)
                        meta[k] = v
            else:
                raise DomainError(f"{path}: missing series header line")
            reader = csv.reader(fh)
            header = next(reader)
            d = matcore.tri_dim(len(header))
            mats = []
            for row in reader:
                if not row:
                    continue
                mats.append(matcore.vecp_inv([float(x) for x in row]))
        meta.pop("d", None)
        for key, val in meta.items():
            try:
                meta[key] = int(val)
            except ValueError:
                try:
                    meta[key] = float(val)
                except ValueError:
                    pass
        return cls(np.array(mats), meta=meta)


@dataclass(frozen=True)
class KdeSpec:
    """A fitted kernel density estimator: kernel kind, sample, bandwidth."""

    kernel: str
    sample: SpdSeries
    bandwidth: float

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    def log_eval(self, s) -> float:
        if self.kernel == "wishart":
            return wishart_kde_log_eval(self, s)
        return loggauss_kde_log_eval(self, s)


def matrix_log_jacobian_ln(s) -> float:
    """Log Jacobian determinant of the matrix-log transformation at S."""
    s = matcore.assert_spd(s)
    lam, _ = matcore.sym_eigen(s)
    return float(_jacobian_ln_from_eigs(lam[None, :])[0])


def _jacobian_ln_from_eigs(lams: np.ndarray) -> np.ndarray:
    """Vectorized log-Jacobian from per-matrix eigenvalue rows (m, d)."""
    m, d = lams.shape
    out = -np.sum(np.log(lams), axis=1)
    for i in range(d):
        for j in range(i + 1, d):
            li, lj = lams[:, i], lams[:, j]
            big, small = np.maximum(li, lj), np.minimum(li, lj)
            gap = big - small
            equal = gap < _EIG_EQUAL_RTOL * np.maximum(1.0, big)
            # log(log(li) - log(lj)) - log(li - lj), written via log1p so the
            # near-equal regime does not cancel catastrophically.
            ratio = np.where(equal, 1.0, np.log1p(gap / small))
            term = np.where(
                equal,
                -np.log(big),
                np.log(np.where(equal, 1.0, ratio)) - np.log(np.where(equal, 1.0, gap)),
            )
            out = out + term
    return out


def _check_point(spec: KdeSpec, s) -> np.ndarray:
    s = matcore.assert_spd(s)
    if s.shape[0] != spec.sample.dim:
        raise DimensionError(
            f"evaluation point is {s.shape[0]}x{s.shape[0]}, sample is "
            f"{spec.sample.dim}x{spec.sample.dim}"
        )
    return s


def wishart_kde_log_eval(spec: KdeSpec, s) -> float:
    """Log of the Wishart KDE at an SPD matrix S."""
    if spec.kernel != "wishart":
        raise ValueError("spec.kernel must be 'wishart'")
    s = _check_point(spec, s)
    params = kernel_params(spec.bandwidth, s).wishart
    logs = wishart_logpdf_many(params, spec.sample.matrices)
    return matcore.log_sum_exp(logs) - math.log(len(spec.sample))


def loggauss_kde_log_eval(spec: KdeSpec, s) -> float:
    """Log of the log-Gaussian KDE at an SPD matrix S."""
    if spec.kernel != "loggauss":
        raise ValueError("spec.kernel must be 'loggauss'")
    s = _check_point(spec, s)
    return float(_loggauss_kde_log_many(spec, s[None, :, :])[0])


def _gauss_log_norm(d: int, b: float) -> float:
    """Log normalizer of the symmetric-matrix Gaussian kernel."""
    r = matcore.half_dim(d)
    return (r / 2.0) * math.log(2.0 * math.pi * b) - (d * (d - 1) / 4.0) * math.log(2.0)


def _wishart_kde_log_many(spec: KdeSpec, points: np.ndarray) -> np.ndarray:
    """Wishart KDE logs over a stack of evaluation points, shape (m, d, d)."""
    sample = spec.sample
    b = spec.bandwidth
    n, d = len(sample), sample.dim
    nu = 1.0 / b + d + 1
    half_exp = 1.0 / (2.0 * b)

    v_all, vec_all = np.linalg.eigh(points)
    if np.any(v_all[:, 0] <= 0):
        raise DomainError("evaluation points must be positive definite")
    inv_pts = np.einsum("mik,mk,mjk->mij", vec_all, 1.0 / v_all, vec_all)
    logdet_pts = np.sum(np.log(v_all), axis=1)

    # tr(S^{-1} X_t) for every (point, observation) pair.
    trace = np.einsum("mij,tij->mt", inv_pts, sample.matrices)
    log_norm = (nu / 2.0) * (d * math.log(2.0 * b) + logdet_pts) + matcore.multigamma_ln(
        d, nu / 2.0
    )
    logs = half_exp * sample.logdets[None, :] - half_exp * trace - log_norm[:, None]
    return matcore.log_sum_exp(logs, axis=1) - math.log(n)


def _loggauss_kde_log_many(spec: KdeSpec, points: np.ndarray) -> np.ndarray:
    sample = spec.sample
    b = spec.bandwidth
    n, d = len(sample), sample.dim
    w, v = np.linalg.eigh(points)
    if np.any(w[:, 0] <= 0):
        raise DomainError("evaluation points must be positive definite")
    logs_pts = np.einsum("mik,mk,mjk->mij", v, np.log(w), v)
    # ||Y - Y_t||_F^2 expanded so the (m, t) pair table is a single matmul.
    pts_sq = np.einsum("mij,mij->m", logs_pts, logs_pts)
    cross = np.einsum("mij,tij->mt", logs_pts, sample.logmats)
    sq = pts_sq[:, None] + sample.logmat_sqnorms[None, :] - 2.0 * cross
    logs = -np.maximum(sq, 0.0) / (2.0 * b) - _gauss_log_norm(d, b)
    jac = _jacobian_ln_from_eigs(w[:, ::-1])
    return matcore.log_sum_exp(logs, axis=1) - math.log(n) + jac


def kde_log_eval_many(spec: KdeSpec, points, chunk: int = 4096) -> np.ndarray:
    """Vectorized log-density of either KDE over a stack of points (m, d, d).

    Evaluation is chunked so the (chunk, n) kernel matrix stays small; each
    point's kernel sum is reduced in the fixed sample order, so results are
    identical regardless of the chunk size.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 3 or pts.shape[1] != pts.shape[2] or pts.shape[1] != spec.sample.dim:
        raise DimensionError(f"expected shape (m, {spec.sample.dim}, {spec.sample.dim})")
    pts = (pts + np.swapaxes(pts, 1, 2)) / 2.0
    fn = _wishart_kde_log_many if spec.kernel == "wishart" else _loggauss_kde_log_many
    out = np.empty(pts.shape[0])
    for start in range(0, pts.shape[0], chunk):
        out[start : start + chunk] = fn(spec, pts[start : start + chunk])
    return out


def eval_grid(spec: KdeSpec, grid) -> list[tuple[np.ndarray, float]]:
    """Evaluate the KDE on a list of SPD matrices, preserving order.

    A failure at any grid point is re-raised with the offending index in the
    message.
    """
    grid = list(grid)
    if not grid:
        return []
    out = []
    for idx, point in enumerate(grid):
        try:
            out.append((matcore.symmetrize(point), spec.log_eval(point)))
        except Exception as exc:
            raise type(exc)(f"grid point {idx}: {exc}") from exc
    return out


def grid_to_csv(results, path) -> None:
    """Write grid results as CSV with vecp coordinates and the log density."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if not results:
            return
        d = results[0][0].shape[0]
        rows, cols = matcore.vecp_indices(d)
        writer.writerow([f"x{r + 1}{c + 1}" for r, c in zip(rows, cols)] + ["log_density"])
        for point, value in results:
            writer.writerow([repr(float(x)) for x in matcore.vecp(point)] + [repr(float(value))])


def grid_to_json(results, path) -> None:
    payload = [
        {"vecp": [float(x) for x in matcore.vecp(point)], "log_density": float(value)}
        for point, value in results
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
