"""Asymptotic diagnostics and the Monte Carlo benchmark harness.

This module carries the theory side of the estimator: the variance
coefficient psi, the bias coefficient g assembled from derivatives of the
target in half-vectorized coordinates, the MSE-optimal bandwidth, the MAE
upper bound, the standardized statistic of the central limit theorem, the
root integrated squared error (RISE) between two densities on the cone of
2x2 SPD matrices via the eigenvalue-rotation integration formula, and the
replicated simulation study that benchmarks the bandwidth selectors on
WAR(1) data.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import matcore
from .bandwidth import CvConfig, default_lag, select_bandwidth
from .errors import DimensionError, DomainError, NumericError
from .estimators import KdeSpec, kde_log_eval_many
from .warsim import WarModel, stationary_density, war1_simulate
from .wishart import WishartParams, wishart_logpdf_many

__all__ = [
    "TargetDensity",
    "wishart_target",
    "psi",
    "bias_coefficient_g",
    "mse_optimal_bandwidth",
    "mse_theory",
    "mae_upper_bound",
    "clt_standardize",
    "QuadConfigD2",
    "weyl_nodes_d2",
    "integrate_weyl_d2",
    "rise_d2",
    "StudyConfig",
    "StudyResult",
    "simulation_study",
    "study_to_csv",
    "study_to_markdown",
]

THREADS_ENV = "SPDKDE_THREADS"


# ---------------------------------------------------------------------------
# Target densities and derivative machinery
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TargetDensity:
    """A target density on the SPD cone, with derivative access.

    ``log_pdf`` maps a (d, d) SPD matrix to its log density.  If analytic
    ``gradient``/``hessian`` callables (in vecp coordinates) are not given,
    central finite differences with the configured relative steps are used;
    off-diagonal perturbations move both symmetric entries together.
    """

    dim: int
    log_pdf: object
    batch_log_pdf: object = None
    gradient_fn: object = None
    hessian_fn: object = None
    fd_grad_step: float = 1e-5
    fd_hess_step: float = 1e-3

    def pdf(self, s) -> float:
        return math.exp(self.log_pdf(matcore.symmetrize(s)))

    def many(self, points: np.ndarray) -> np.ndarray:
        if self.batch_log_pdf is not None:
            return np.asarray(self.batch_log_pdf(points), dtype=float)
        return np.array([self.log_pdf(p) for p in points])

    def gradient(self, s) -> np.ndarray:
        s = matcore.symmetrize(s)
        if self.gradient_fn is not None:
            return np.asarray(self.gradient_fn(s), dtype=float)
        return _fd_gradient(self.pdf, s, self.fd_grad_step)

    def hessian(self, s) -> np.ndarray:
        s = matcore.symmetrize(s)
        if self.hessian_fn is not None:
            return np.asarray(self.hessian_fn(s), dtype=float)
        return _fd_hessian(self.pdf, s, self.fd_hess_step)


def wishart_target(nu: float, scale) -> TargetDensity:
    """Analytic Wishart benchmark target (derivatives by finite differences)."""
    params = WishartParams(dof=nu, scale=scale)

    def log_pdf(s):
        return float(wishart_logpdf_many(params, np.asarray(s, float)[None])[0])

    def batch(points):
        return wishart_logpdf_many(params, points)

    return TargetDensity(dim=params.dim, log_pdf=log_pdf, batch_log_pdf=batch)


def _coord_step(s: np.ndarray, k: int, rows, cols, h: float) -> np.ndarray:
    """Symmetric perturbation of the k-th vecp coordinate."""
    out = s.copy()
    i, j = rows[k], cols[k]
    out[i, j] += h
    if i != j:
        out[j, i] += h
    return out


def _fd_gradient(fn, s: np.ndarray, rel_step: float) -> np.ndarray:
    d = s.shape[0]
    rows, cols = matcore.vecp_indices(d)
    v = matcore.vecp(s)
    out = np.empty(v.size)
    for k in range(v.size):
        h = rel_step * max(1.0, abs(v[k]))
        out[k] = (fn(_coord_step(s, k, rows, cols, h)) - fn(_coord_step(s, k, rows, cols, -h))) / (
            2.0 * h
        )
    if not np.all(np.isfinite(out)):
        raise NumericError("finite-difference gradient produced non-finite values")
    return out


def _fd_hessian(fn, s: np.ndarray, rel_step: float) -> np.ndarray:
    d = s.shape[0]
    rows, cols = matcore.vecp_indices(d)
    v = matcore.vecp(s)
    r = v.size
    steps = rel_step * np.maximum(1.0, np.abs(v))
    out = np.empty((r, r))
    f0 = fn(s)
    for k in range(r):
        hk = steps[k]
        fp = fn(_coord_step(s, k, rows, cols, hk))
        fm = fn(_coord_step(s, k, rows, cols, -hk))
        out[k, k] = (fp - 2.0 * f0 + fm) / hk**2
        for l in range(k + 1, r):
            hl = steps[l]
            spp = fn(_coord_step(_coord_step(s, k, rows, cols, hk), l, rows, cols, hl))
            spm = fn(_coord_step(_coord_step(s, k, rows, cols, hk), l, rows, cols, -hl))
            smp = fn(_coord_step(_coord_step(s, k, rows, cols, -hk), l, rows, cols, hl))
            smm = fn(_coord_step(_coord_step(s, k, rows, cols, -hk), l, rows, cols, -hl))
            out[k, l] = out[l, k] = (spp - spm - smp + smm) / (4.0 * hk * hl)
    if not np.all(np.isfinite(out)):
        raise NumericError("finite-difference Hessian produced non-finite values")
    return out


# ---------------------------------------------------------------------------
# Pointwise asymptotic quantities
# ---------------------------------------------------------------------------


def psi(s) -> float:
    """Variance coefficient |S|^{-(d+1)/2} / (2^{r + d/2} pi^{r/2})."""
    s = matcore.assert_spd(s)
    d = s.shape[0]
    r = matcore.half_dim(d)
    log_val = (
        -(d + 1) / 2.0 * matcore.spd_logdet(s)
        - (r + d / 2.0) * math.log(2.0)
        - (r / 2.0) * math.log(math.pi)
    )
    return math.exp(log_val)


def bias_coefficient_g(target: TargetDensity, s) -> float:
    """Leading bias coefficient of the cone KDE at S.

    Assembles ``(d+1) grad_f(S)' vecp(S) + tr{hess_f(S) C(S)}`` where the
    derivatives are taken in vecp coordinates and C is the half-vectorized
    Kronecker-square form of S (the shape of the kernel's covariance).
    """
    s = matcore.assert_spd(s)
    d = s.shape[0]
    grad = target.gradient(s)
    hess = target.hessian(s)
    c = matcore.vecp_kron_form(s)
    return float((d + 1) * grad @ matcore.vecp(s) + np.sum(hess * c))


def mse_optimal_bandwidth(n: int, s, target: TargetDensity, g: float | None = None) -> float:
    """Asymptotically MSE-optimal bandwidth at S.

    ``b* = n^{-2/(r+4)} [ (r/4) psi(S) f(S) / g(S)^2 ]^{2/(r+4)}``.  Raises
    DomainError when the bias coefficient vanishes (the formula conditions on
    ``g(S)^2`` being finite and positive).
    """
    s = matcore.assert_spd(s)
    d = s.shape[0]
    r = matcore.half_dim(d)
    f_val = target.pdf(s)
    if not f_val > 0:
        raise DomainError("target density must be positive at S")
    g_val = bias_coefficient_g(target, s) if g is None else g
    if g_val == 0 or not np.isfinite(g_val):
        raise DomainError("degenerate bias: g(S)^2 must lie in (0, inf)")
    ratio = (r / 4.0) * psi(s) * f_val / g_val**2
    return float(n ** (-2.0 / (r + 4)) * ratio ** (2.0 / (r + 4)))


def mse_theory(n: int, b: float, s, target: TargetDensity, g: float | None = None) -> float:
    """Leading mean-squared-error value n^{-1} b^{-r/2} psi f + b^2 g^2."""
    s = matcore.assert_spd(s)
    r = matcore.half_dim(s.shape[0])
    f_val = target.pdf(s)
    g_val = bias_coefficient_g(target, s) if g is None else g
    return psi(s) * f_val / (n * b ** (r / 2.0)) + (b * g_val) ** 2


def mae_upper_bound(n: int, b: float, s, target: TargetDensity, g: float | None = None) -> float:
    """Leading upper bound on the mean absolute error at S."""
    s = matcore.assert_spd(s)
    r = matcore.half_dim(s.shape[0])
    f_val = target.pdf(s)
    g_val = bias_coefficient_g(target, s) if g is None else g
    return math.sqrt(2.0 / math.pi * psi(s) * f_val) / (math.sqrt(n) * b ** (r / 4.0)) + b * abs(
        g_val
    )


def clt_standardize(
    fhat_value: float, n: int, b: float, s, target: TargetDensity, g: float | None = None
) -> float:
    """Standardized estimator value that is asymptotically standard normal.

    Returns ``sqrt(n) b^{r/4} (fhat - f(S) - b g(S)) / sqrt(psi(S) f(S))``:
    the estimate is centered at the target plus its leading bias ``b g(S)``
    and scaled by the leading standard deviation.  At the theorem's bandwidth
    ``b = n^{-2/(r+4)}`` the bias term equals ``n^{-1/2} b^{-r/4} g(S)``.
    """
    s = matcore.assert_spd(s)
    r = matcore.half_dim(s.shape[0])
    f_val = target.pdf(s)
    if not f_val > 0:
        raise DomainError("target density must be positive at S")
    g_val = bias_coefficient_g(target, s) if g is None else g
    centered = fhat_value - f_val - b * g_val
    return float(math.sqrt(n) * b ** (r / 4.0) * centered / math.sqrt(psi(s) * f_val))


# ---------------------------------------------------------------------------
# RISE quadrature on 2x2 SPD matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class QuadConfigD2:
    """Gauss-Legendre quadrature over the eigenvalue-rotation chart.

    Eigenvalues run over ``[0, lam_max]`` with ``n_lam`` nodes per axis and
    the rotation angle over ``[0, 2 pi)`` with ``n_theta`` nodes.  If
    ``whiten`` is an SPD matrix A... the integration runs over
    ``X = A^{1/2} Y A^{1/2}`` with the exact change-of-variables weight, so a
    fixed eigenvalue box covers targets of any scale or conditioning.
    """

    lam_max: float = 30.0
    n_lam: int = 64
    n_theta: int = 32
    whiten: np.ndarray | None = None

    def __post_init__(self):
        if not (self.lam_max > 0 and self.n_lam >= 2 and self.n_theta >= 2):
            raise ValueError("invalid quadrature configuration")
        if self.whiten is not None:
            object.__setattr__(self, "whiten", matcore.assert_spd(self.whiten))


def weyl_nodes_d2(quad: QuadConfigD2) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (m, 2, 2) and weights (m,) integrating functions on the cone.

    The weights include the ``|lam_1 - lam_2| / 4`` chart factor, so
    ``sum(w * fn(X))`` approximates the integral of ``fn`` over 2x2 SPD
    matrices with eigenvalues below ``lam_max`` (after unwhitening).
    """
    xl, wl = np.polynomial.legendre.leggauss(quad.n_lam)
    lam = 0.5 * quad.lam_max * (xl + 1.0)
    wlam = 0.5 * quad.lam_max * wl
    xt, wt = np.polynomial.legendre.leggauss(quad.n_theta)
    theta = math.pi * (xt + 1.0)
    wtheta = math.pi * wt

    l1, l2, th = np.meshgrid(lam, lam, theta, indexing="ij")
    w = np.einsum("i,j,k->ijk", wlam, wlam, wtheta) * np.abs(l1 - l2) / 4.0
    c, s = np.cos(th), np.sin(th)
    x11 = c**2 * l1 + s**2 * l2
    x22 = s**2 * l1 + c**2 * l2
    x12 = c * s * (l1 - l2)
    pts = np.stack(
        [np.stack([x11, x12], axis=-1), np.stack([x12, x22], axis=-1)], axis=-2
    ).reshape(-1, 2, 2)
    w = w.ravel().copy()
    if quad.whiten is not None:
        root = _sym_sqrt22(quad.whiten)
        pts = np.einsum("ij,mjk,kl->mil", root, pts, root)
        # dX = |A|^{(d+1)/2} dY for X = A^{1/2} Y A^{1/2}, d = 2.
        w = w * float(np.linalg.det(quad.whiten)) ** 1.5
    return pts, w


def _sym_sqrt22(s: np.ndarray) -> np.ndarray:
    w, v = matcore.sym_eigen(s)
    return (v * np.sqrt(w)) @ v.T


def integrate_weyl_d2(fn, quad: QuadConfigD2) -> float:
    """Integral of ``fn`` (batched over (m, 2, 2) matrices) over the cone."""
    pts, w = weyl_nodes_d2(quad)
    return float(np.sum(w * np.asarray(fn(pts), dtype=float)))


def rise_d2(estimate_log, target_log, quad: QuadConfigD2 | None = None) -> float:
    """Root integrated squared error between two log densities (d = 2).

    Both arguments must accept a stacked array of shape (m, 2, 2) and return
    the log densities as an (m,) array.
    """
    quad = quad or QuadConfigD2()
    pts, w = weyl_nodes_d2(quad)
    diff = np.exp(np.asarray(estimate_log(pts), float)) - np.exp(
        np.asarray(target_log(pts), float)
    )
    return float(math.sqrt(np.sum(w * diff**2)))


# ---------------------------------------------------------------------------
# Simulation study
# ---------------------------------------------------------------------------

METHOD_SPECS = {
    "w_lscv": ("wishart", "lscv"),
    "w_lcv": ("wishart", "lcv"),
    "lg_lscv": ("loggauss", "lscv"),
    "lg_lcv": ("loggauss", "lcv"),
}


@dataclass(frozen=True)
class StudyConfig:
    """Configuration of the replicated WAR(1) benchmark.

    ``models`` maps labels to WarModel instances.  Unless an explicit
    quadrature is supplied, each model integrates over eigenvalue boxes
    whitened by its stationary scale, which keeps a single box adequate for
    every preset.
    """

    models: dict
    sample_sizes: tuple = (100, 300)
    methods: tuple = ("w_lscv", "w_lcv", "lg_lscv", "lg_lcv")
    replications: int = 100
    seed: int = 0
    quad: QuadConfigD2 | None = None
    burnin: int = 200
    threads: int | None = None
    b_lo: float = 1e-4
    b_hi: float = 10.0
    coarse: int = 25

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        unknown = [m for m in self.methods if m not in METHOD_SPECS]
        if unknown:
            raise ValueError(f"unknown methods: {unknown}")


@dataclass
class StudyCell:
    model: str
    n: int
    method: str
    median_rise: float
    iqr_rise: float
    mean_bandwidth_seconds: float
    failures: int
    rises: np.ndarray


@dataclass
class StudyResult:
    cells: list
    config: StudyConfig

    def cell(self, model: str, n: int, method: str) -> StudyCell:
        for c in self.cells:
            if (c.model, c.n, c.method) == (model, n, method):
                return c
        raise KeyError((model, n, method))


def resolve_threads(threads: int | None) -> int:
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _model_quad(model: WarModel, quad: QuadConfigD2 | None) -> QuadConfigD2:
    if quad is not None:
        return quad
    return QuadConfigD2(whiten=model.stationary_scale)


def _study_task(args):
    """One (model, n) cell for a contiguous block of replications."""
    label, model, n, methods, reps, cfg = args
    quad = _model_quad(model, cfg.quad)
    pts, w = weyl_nodes_d2(quad)
    target = stationary_density(model)
    target_vals = np.exp(target.many(pts))
    out = []
    for rep in reps:
        rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(hash_label(label), n, rep)))
        try:
            series = war1_simulate(model, n, burnin=cfg.burnin, rng=rng)
            rec = {}
            for method in methods:
                kernel, crit = METHOD_SPECS[method]
                cv = CvConfig(
                    method=crit,
                    kernel=kernel,
                    b_lo=cfg.b_lo,
                    b_hi=cfg.b_hi,
                    coarse=cfg.coarse,
                )
                t0 = time.perf_counter()
                sel = select_bandwidth(series, cv)
                seconds = time.perf_counter() - t0
                spec = KdeSpec(kernel=kernel, sample=series, bandwidth=sel.bandwidth)
                est_vals = np.exp(kde_log_eval_many(spec, pts))
                rise = math.sqrt(float(np.sum(w * (est_vals - target_vals) ** 2)))
                rec[method] = (rise, seconds)
            out.append((rep, rec, None))
        except Exception as exc:  # recorded, replication skipped
            out.append((rep, None, f"{type(exc).__name__}: {exc}"))
    return label, n, out


def hash_label(label: str) -> int:
    """Stable small integer for seeding, independent of PYTHONHASHSEED."""
    return sum((i + 1) * ord(ch) for i, ch in enumerate(label)) % 100003


def simulation_study(cfg: StudyConfig) -> StudyResult:
    """Run the replicated benchmark and aggregate RISE and timing per cell.

    Replications are deterministic functions of (seed, model label, n,
    replication index), so results are identical for any thread count.
    """
    threads = resolve_threads(cfg.threads)
    tasks = []
    for label, model in cfg.models.items():
        for n in cfg.sample_sizes:
            blocks = np.array_split(np.arange(cfg.replications), min(threads * 2, cfg.replications))
            for block in blocks:
                if block.size:
                    tasks.append((label, model, int(n), tuple(cfg.methods), block.tolist(), cfg))

    results = {}
    if threads == 1 or len(tasks) == 1:
        raw = [_study_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(_study_task, tasks))
    for label, n, block_out in raw:
        results.setdefault((label, n), []).extend(block_out)

    cells = []
    for label, model in cfg.models.items():
        for n in cfg.sample_sizes:
            recs = sorted(results[(label, int(n))], key=lambda t: t[0])
            failures = sum(1 for _, rec, err in recs if rec is None)
            for method in cfg.methods:
                rises = np.array([rec[method][0] for _, rec, _ in recs if rec is not None])
                times = np.array([rec[method][1] for _, rec, _ in recs if rec is not None])
                if rises.size == 0:
                    raise NumericError(f"every replication failed for {label}, n={n}")
                q25, q50, q75 = np.percentile(rises, [25.0, 50.0, 75.0])
                cells.append(
                    StudyCell(
                        model=label,
                        n=int(n),
                        method=method,
                        median_rise=float(q50),
                        iqr_rise=float(q75 - q25),
                        mean_bandwidth_seconds=float(times.mean()),
                        failures=failures,
                        rises=rises,
                    )
                )
    return StudyResult(cells=cells, config=cfg)


def study_to_csv(result: StudyResult, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model", "n", "method", "median_rise", "iqr_rise", "mean_bandwidth_ms", "failures"]
        )
        for c in result.cells:
            writer.writerow(
                [
                    c.model,
                    c.n,
                    c.method,
                    repr(c.median_rise),
                    repr(c.iqr_rise),
                    repr(c.mean_bandwidth_seconds * 1000.0),
                    c.failures,
                ]
            )


def study_to_markdown(result: StudyResult) -> str:
    """Markdown table with one row per (model, method), medians/IQRs by n."""
    sizes = list(result.config.sample_sizes)
    head = (
        "| Model | Method | "
        + " | ".join(f"Median n={n}" for n in sizes)
        + " | "
        + " | ".join(f"IQR n={n}" for n in sizes)
        + " |"
    )
    sep = "|" + "---|" * (2 + 2 * len(sizes))
    lines = [head, sep]
    for label in result.config.models:
        for method in result.config.methods:
            meds, iqrs = [], []
            for n in sizes:
                c = result.cell(label, n, method)
                meds.append(f"{c.median_rise:.3e}")
                iqrs.append(f"{c.iqr_rise:.3e}")
            lines.append(
                f"| {label} | {method} | " + " | ".join(meds) + " | " + " | ".join(iqrs) + " |"
            )
    return "\n".join(lines) + "\n"
