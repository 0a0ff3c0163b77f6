"""Boundary-aware kernel density estimation on the SPD-matrix cone.

The package estimates densities of d x d symmetric positive definite
matrices with a mode-anchored Wishart kernel, alongside a log-Gaussian
competitor, data-driven bandwidth selection, a Wishart-autoregressive
benchmark generator, asymptotic diagnostics, and a realized-covariance
ingestion pipeline.
"""

from .bandwidth import (
    BandwidthResult,
    CvConfig,
    default_lag,
    lcv_criterion,
    lscv_criterion,
    select_bandwidth,
    squared_integral_loggauss,
    squared_integral_wishart,
)
from .estimators import (
    KdeSpec,
    SpdSeries,
    eval_grid,
    kde_log_eval_many,
    loggauss_kde_log_eval,
    matrix_log_jacobian_ln,
    wishart_kde_log_eval,
)
from .evaluation import (
    QuadConfigD2,
    StudyConfig,
    StudyResult,
    TargetDensity,
    bias_coefficient_g,
    clt_standardize,
    mae_upper_bound,
    mse_optimal_bandwidth,
    mse_theory,
    psi,
    rise_d2,
    simulation_study,
    wishart_target,
)
from .matcore import (
    log_sum_exp,
    matrix_exp,
    matrix_log,
    multigamma_ln,
    sym_eigen,
    transition_matrix,
    vecp,
    vecp_inv,
    vecp_kron_form,
)
from .rcov import (
    RcSeries,
    intraday_log_returns,
    parse_price_csv,
    rc_to_spd_series,
    realized_cov_daily,
    series_stats,
)
from .warsim import WarModel, lyapunov_stationary, preset_models, stationary_density, war1_simulate
from .wishart import (
    KernelParams,
    WishartParams,
    eigen_tail_bounds,
    kernel_diff_bound,
    kernel_lq_norm_sq,
    kernel_moments,
    kernel_params,
    kernel_sup_bound,
    sample_wishart,
    wishart_logpdf,
)

__version__ = "0.1.0"
