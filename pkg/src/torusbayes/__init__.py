"""Bayesian inversion for PDEs on the torus with surrogate likelihoods.

Spectral forward solvers (reaction-diffusion, projected 2D Navier-Stokes,
Oseen linearizations), Gaussian series priors, pCN sampling, Tikhonov MAP
estimation, and diagnostics for noise/model misspecification conditions
and empirical contraction rates.
"""

from ._kernels import BACKEND as kernel_backend
from .spectral import (
    ConfigurationError,
    ModeIndex,
    NumericsError,
    SpectralField,
    TorusGrid,
    dealias,
    enumerate_modes,
    l2_norm,
    leray_project,
    sobolev_norm,
)
from .forward import (
    NseParams,
    OseenConvergenceError,
    OseenResult,
    PreconditionError,
    ReactionTerm,
    SolverDivergenceError,
    Trajectory,
    evaluate_forward,
    evaluate_forward_batch,
    oseen_solve,
    solve_nse,
    solve_rde,
    stability_gap_nse,
)
from .priors import (
    PriorSpec,
    StokesBasisElement,
    contraction_rate,
    prior_tail_probe,
    rkhs_norm,
    sample_prior,
)
from .observation import (
    AuxiliaryPanel,
    Dataset,
    Design,
    NoiseModel,
    generate_dataset,
    generate_panel,
    proxy_assignment,
    variance_proxy,
)
from .inference import (
    Chain,
    MapResult,
    SurrogateSpec,
    credible_band,
    log_likelihood,
    pcn_chain,
    posterior_mean,
    test_statistic,
    tikhonov_functional,
    tikhonov_map,
)
from .diagnostics import (
    ConditionReport,
    RateFit,
    check_model_condition,
    check_noise_condition,
    fit_rate,
    information_gap,
)

__version__ = "0.1.0"
