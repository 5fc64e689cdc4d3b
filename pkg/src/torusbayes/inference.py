"""Surrogate likelihoods, pCN sampling over sieve coefficients, and the
Tikhonov-regularized MAP estimator.

The sampler is preconditioned Crank-Nicolson: proposals theta' =
sqrt(1-beta^2) theta + beta xi with xi a fresh draw from the (rescaled)
Gaussian prior, accepted with probability min(1, exp(loglik' - loglik)).
The proposal is prior-reversible, so with a constant likelihood the chain
leaves the prior invariant — the key correctness handle used by the
tests.  Everything runs in sieve-coefficient space.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .forward import (
    DesignEvaluator,
    OseenConvergenceError,
    SolverDivergenceError,
)
from .observation import Dataset
from .priors import PriorSpec, get_basis, prior_stream, rkhs_norm_coeffs
from .spectral import ConfigurationError, SpectralField

_CHAIN_STREAM = 11
_START_STREAM = 13
_CERT_STREAM = 17
_QUAD_STREAM = 19

_SOLVER_FAILURES = (SolverDivergenceError, OseenConvergenceError)
_FAIL_OBJECTIVE = 1e15


@dataclass(frozen=True)
class SurrogateSpec:
    """Proxy variances plus the (possibly approximate) forward map.

    ``model`` exposes ``predict(theta, ts, xs)`` and, for the PDE-backed
    maps, ``trajectory(theta)``; ``s0_floor`` is the configured variance
    floor of condition [NM1].
    """

    proxy_variances: np.ndarray
    model: object
    s0_floor: float = 1e-8

    def __post_init__(self):
        s2 = np.asarray(self.proxy_variances, dtype=float)
        if np.any(s2 <= 0):
            raise ConfigurationError("proxy variances must be positive")
        if s2.min() < self.s0_floor:
            raise ConfigurationError(
                f"min proxy variance {s2.min():.3g} is below the floor "
                f"{self.s0_floor:.3g}"
            )
        object.__setattr__(self, "proxy_variances", s2)


class Predictor:
    """Binds a forward model to a fixed design; caches the evaluator."""

    def __init__(self, model, ts, xs):
        self.model = model
        self.ts = np.asarray(ts, dtype=float)
        self.xs = np.asarray(xs, dtype=float)
        self._evaluator = None

    def __call__(self, theta: SpectralField) -> np.ndarray:
        if not hasattr(self.model, "trajectory"):
            return np.atleast_2d(self.model.predict(theta, self.ts, self.xs))
        traj = self.model.trajectory(theta)
        if self._evaluator is None:
            self._evaluator = DesignEvaluator(
                traj.times, traj.dim, traj.resolution, self.ts, self.xs
            )
        return self._evaluator(traj)


def weighted_sse(y: np.ndarray, pred: np.ndarray, variances: np.ndarray) -> float:
    resid = np.atleast_2d(y) - pred
    # fixed summation order for cross-run determinism
    return float(np.sum(np.sum(resid ** 2, axis=1) / variances))


def log_likelihood(dataset: Dataset, theta: SpectralField, model,
                   variances) -> float:
    """-(1/2) sum_i v_i^-1 ||y_i - F(theta)(t_i, x_i)||^2.

    Solver failures propagate with the offending theta attached.
    """
    variances = np.asarray(variances, dtype=float)
    if np.any(variances <= 0):
        raise ConfigurationError("likelihood variances must be positive")
    try:
        pred = Predictor(model, dataset.t, dataset.x)(theta)
    except _SOLVER_FAILURES as err:
        err.theta = theta
        raise
    return -0.5 * weighted_sse(dataset.y, pred, variances)


class LikelihoodEngine:
    """Repeated surrogate log-likelihood evaluations against one dataset."""

    def __init__(self, dataset: Dataset, surrogate: SurrogateSpec):
        if len(surrogate.proxy_variances) != dataset.n:
            raise ConfigurationError("need one proxy variance per record")
        self.dataset = dataset
        self.variances = surrogate.proxy_variances
        self.predict = Predictor(surrogate.model, dataset.t, dataset.x)

    def __call__(self, theta: SpectralField) -> float:
        try:
            pred = self.predict(theta)
        except _SOLVER_FAILURES as err:
            err.theta = theta
            raise
        return -0.5 * weighted_sse(self.dataset.y, pred, self.variances)


# ---------------------------------------------------------------------------
# pCN sampling
# ---------------------------------------------------------------------------

@dataclass
class Chain:
    """Thinned pCN sample record in coefficient space."""

    samples: np.ndarray
    log_liks: np.ndarray
    accept_rate: float
    beta: float
    seed: int
    burn_in: int
    thinning: int
    n_steps: int
    accepts: int
    proposals: int
    failures: int
    prior: PriorSpec
    steps: np.ndarray = None
    accepted_flags: np.ndarray = None

    @property
    def failure_fraction(self) -> float:
        return self.failures / max(self.n_steps, 1)


def pcn_chain(dataset: Dataset, prior: PriorSpec, surrogate: SurrogateSpec,
              beta: float, n_steps: int, burn_in: int = 0, thinning: int = 1,
              seed: int = 0, adapt_beta: bool = False,
              theta_init: np.ndarray = None) -> Chain:
    """Run a pCN chain targeting the surrogate posterior.

    The prior's ``rescale`` should already carry the experiment's
    N*delta_N^2.  Solver failures at a proposal are auto-rejected and
    tallied (the experiment runner enforces the 1% budget).  With
    ``adapt_beta`` the step size is tuned toward 25% acceptance during
    burn-in only, so the recorded samples come from a fixed kernel.
    """
    if not 0.0 <= beta <= 1.0:
        raise ConfigurationError("beta must lie in [0, 1]")
    if burn_in >= n_steps:
        raise ConfigurationError("burn_in must be smaller than n_steps")
    basis = get_basis(prior)
    dim_c = basis.dim_coeff
    engine = LikelihoodEngine(dataset, surrogate)
    rng = np.random.Generator(np.random.Philox(key=[int(seed), _CHAIN_STREAM]))
    coeff_std = basis.coefficient_std()

    def loglik(c):
        return engine(basis.field_from_coeffs(c))

    if theta_init is None:
        current = coeff_std * rng.standard_normal(dim_c)
    else:
        current = np.asarray(theta_init, dtype=float).copy()
        if current.shape != (dim_c,):
            raise ConfigurationError("theta_init has the wrong dimension")
    try:
        ell = loglik(current)
    except _SOLVER_FAILURES:
        current = np.zeros(dim_c)
        ell = loglik(current)

    beta_t = float(beta)
    samples, logs, rec_steps, rec_flags = [], [], [], []
    accepts = proposals = failures = 0
    for step in range(1, n_steps + 1):
        xi = coeff_std * rng.standard_normal(dim_c)
        proposal = math.sqrt(max(0.0, 1.0 - beta_t ** 2)) * current + beta_t * xi
        u = rng.uniform()
        try:
            ell_prop = loglik(proposal)
            accept = math.log(u) < min(0.0, ell_prop - ell)
        except _SOLVER_FAILURES:
            failures += 1
            accept = False
            ell_prop = -math.inf
        post_burn = step > burn_in
        if post_burn:
            proposals += 1
        if accept:
            current, ell = proposal, ell_prop
            if post_burn:
                accepts += 1
        if adapt_beta and not post_burn:
            # Robbins-Monro on log(beta) toward 25% acceptance
            beta_t = float(np.clip(beta_t * math.exp(0.05 * (int(accept) - 0.25)),
                                   1e-4, 1.0))
        if post_burn and (step - burn_in) % thinning == 0:
            samples.append(current.copy())
            logs.append(ell)
            rec_steps.append(step)
            rec_flags.append(bool(accept))
    if not samples:
        raise ConfigurationError("chain recorded no samples; check thinning")
    return Chain(
        samples=np.array(samples),
        log_liks=np.array(logs),
        accept_rate=accepts / max(proposals, 1),
        beta=beta_t,
        seed=int(seed),
        burn_in=burn_in,
        thinning=thinning,
        n_steps=n_steps,
        accepts=accepts,
        proposals=proposals,
        failures=failures,
        prior=prior,
        steps=np.array(rec_steps, dtype=np.int64),
        accepted_flags=np.array(rec_flags, dtype=bool),
    )


def posterior_mean(chain: Chain, prior: PriorSpec) -> SpectralField:
    """Coefficientwise average of the retained samples, as a field."""
    if chain.samples.size == 0:
        raise ConfigurationError("empty chain")
    return get_basis(prior).field_from_coeffs(chain.samples.mean(axis=0))


@dataclass(frozen=True)
class CredibleBand:
    level: float
    lower: np.ndarray
    upper: np.ndarray


def credible_band(chain: Chain, prior: PriorSpec, level: float) -> CredibleBand:
    """Pointwise empirical quantile envelopes on the physical grid."""
    if not 0.0 < level < 1.0:
        raise ConfigurationError("level must lie strictly inside (0, 1)")
    if chain.samples.size == 0:
        raise ConfigurationError("empty chain")
    basis = get_basis(prior)
    fields = np.stack([
        basis.field_from_coeffs(c).to_physical() for c in chain.samples
    ])
    lo = (1.0 - level) / 2.0
    lower = np.quantile(fields, lo, axis=0)
    upper = np.quantile(fields, 1.0 - lo, axis=0)
    return CredibleBand(level=level, lower=lower, upper=upper)


# ---------------------------------------------------------------------------
# Tikhonov MAP
# ---------------------------------------------------------------------------

class NonConvergenceError(RuntimeError):
    def __init__(self, trace):
        self.trace = trace
        super().__init__(f"no optimizer start converged: {trace}")


@dataclass(frozen=True)
class OptimizerConfig:
    n_starts: int = 5
    seed: int = 0
    gtol: float = 1e-6
    maxiter: int = 300
    fd_step: float = 1e-5
    certify_draws: int = 50


@dataclass
class MapResult:
    theta_hat: SpectralField
    coeffs: np.ndarray
    objective: float
    grad_norm: float
    iterations: int
    d_delta2: float
    converged: bool
    certificate_ok: bool
    delta: float


def tikhonov_functional(dataset: Dataset, prior: PriorSpec,
                        surrogate: SurrogateSpec, delta: float,
                        fd_step: float = 1e-5):
    """Objective and central-FD gradient of the Tikhonov functional.

    J[c] = -(2N)^-1 sum_i s_i^-2 ||y_i - G(theta_c)(Z_i)||^2
           - (delta^2/2) sum_j w_j c_j^2,  w_j = lambda_j^alpha (x rescale).
    The FD step per coordinate is fd_step * (1 + |c_j|); solver failures
    map to a large negative objective.
    """
    basis = get_basis(prior)
    engine = LikelihoodEngine(dataset, surrogate)
    weights = basis.lambdas ** prior.alpha
    if prior.rescale > 0:
        weights = weights * prior.rescale

    def objective(coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        try:
            ll = engine(basis.field_from_coeffs(coeffs))
        except _SOLVER_FAILURES:
            return -_FAIL_OBJECTIVE
        penalty = 0.5 * delta ** 2 * np.sum(weights * coeffs ** 2)
        return float(ll / dataset.n - penalty)

    def gradient(coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        g = np.empty_like(coeffs)
        for j in range(len(coeffs)):
            h = fd_step * (1.0 + abs(coeffs[j]))
            cp, cm = coeffs.copy(), coeffs.copy()
            cp[j] += h
            cm[j] -= h
            g[j] = (objective(cp) - objective(cm)) / (2.0 * h)
        return g

    return objective, gradient


def tikhonov_map(dataset: Dataset, prior: PriorSpec, surrogate: SurrogateSpec,
                 delta: float, theta_init: np.ndarray = None,
                 optimizer: OptimizerConfig = None,
                 theta0: SpectralField = None) -> MapResult:
    """Maximize the Tikhonov functional over sieve coefficients.

    J[theta] = -(2N)^-1 sum_i s_i^-2 ||y_i - G(theta)(Z_i)||^2
               - (delta^2/2) ||theta||_H^2,

    by L-BFGS ascent with central finite-difference gradients (step
    h_j = fd_step * (1 + |c_j|)), multi-started from prior draws; the best
    objective wins.  The returned optimum is certified against 50 fresh
    prior draws (and theta0's sieve projection when given); a better
    candidate triggers one re-polish from that point.
    """
    if delta <= 0:
        raise ConfigurationError("delta must be positive")
    opt = optimizer or OptimizerConfig()
    basis = get_basis(prior)
    objective, gradient = tikhonov_functional(dataset, prior, surrogate, delta,
                                              fd_step=opt.fd_step)

    def neg_obj(c):
        return -objective(c)

    def neg_grad(c):
        return -gradient(c)

    starts = []
    if theta_init is not None:
        starts.append(np.asarray(theta_init, dtype=float))
    rng_std = basis.coefficient_std()
    for s in range(opt.n_starts):
        g = prior_stream(opt.seed, _START_STREAM + s).standard_normal(basis.dim_coeff)
        starts.append(rng_std * g)

    trace = []
    best = None
    for c0 in starts:
        res = minimize(neg_obj, c0, jac=neg_grad, method="L-BFGS-B",
                       options={"gtol": opt.gtol, "maxiter": opt.maxiter})
        gnorm = float(np.max(np.abs(res.jac))) if res.jac is not None else math.inf
        solver_broke = -res.fun <= -_FAIL_OBJECTIVE / 2  # stuck on failures
        ok = (bool(res.success) or gnorm <= 10 * opt.gtol) and not solver_broke
        trace.append({"objective": float(-res.fun), "grad_norm": gnorm,
                      "converged": ok, "iterations": int(res.nit)})
        if ok and (best is None or -res.fun > best[0]):
            best = (-res.fun, res.x.copy(), gnorm, int(res.nit))
    if best is None:
        raise NonConvergenceError(trace)

    obj_val, c_hat, gnorm, nit = best

    # optimality certificate: the optimum must dominate fresh prior draws
    candidates = []
    cert_rng = prior_stream(opt.seed, _CERT_STREAM)
    for _ in range(opt.certify_draws):
        candidates.append(rng_std * cert_rng.standard_normal(basis.dim_coeff))
    if theta0 is not None:
        candidates.append(basis.coeffs_from_field(theta0))
    best_candidate = -math.inf
    for cand in candidates:
        val = objective(cand)
        best_candidate = max(best_candidate, val)
        if val > obj_val + 1e-12:
            res = minimize(neg_obj, cand, jac=neg_grad, method="L-BFGS-B",
                           options={"gtol": opt.gtol, "maxiter": opt.maxiter})
            if -res.fun > obj_val:
                obj_val = float(-res.fun)
                c_hat = res.x.copy()
                gnorm = float(np.max(np.abs(res.jac)))
                nit += int(res.nit)
    certificate_ok = best_candidate <= obj_val + 1e-10
    obj_val = objective(c_hat)  # invariant: stored objective == J(theta_hat)
    return MapResult(
        theta_hat=basis.field_from_coeffs(c_hat),
        coeffs=c_hat,
        objective=obj_val,
        grad_norm=gnorm,
        iterations=nit,
        d_delta2=-2.0 * obj_val,
        converged=True,
        certificate_ok=certificate_ok,
        delta=delta,
    )


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_chain(chain: Chain, path) -> None:
    """Chain file: one JSON header line, then the float64 sample matrix."""
    import json

    header = {
        "n_samples": int(len(chain.samples)),
        "dim": int(chain.samples.shape[1]),
        "accept_rate": chain.accept_rate,
        "beta": chain.beta,
        "seed": chain.seed,
        "burn_in": chain.burn_in,
        "thinning": chain.thinning,
        "n_steps": chain.n_steps,
        "accepts": chain.accepts,
        "proposals": chain.proposals,
        "failures": chain.failures,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(np.ascontiguousarray(chain.samples, dtype="<f8").tobytes())


def save_chain_summary(chain: Chain, path) -> None:
    """Per-retained-sample CSV: step, log_lik, accepted."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,log_lik,accepted\n")
        for step, ll, acc in zip(chain.steps, chain.log_liks,
                                 chain.accepted_flags):
            fh.write(f"{int(step)},{repr(float(ll))},{int(acc)}\n")


def load_chain_samples(path):
    import json

    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    samples = raw.reshape(header["n_samples"], header["dim"])
    return header, samples


def map_result_to_dict(result: MapResult) -> dict:
    return {
        "coeffs": [float(c) for c in result.coeffs],
        "objective": result.objective,
        "grad_norm": result.grad_norm,
        "iterations": result.iterations,
        "d_delta2": result.d_delta2,
        "converged": result.converged,
        "certificate_ok": result.certificate_ok,
        "delta": result.delta,
    }


# ---------------------------------------------------------------------------
# Appendix-style test statistic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestStatistic:
    value: float
    threshold: float
    reject: bool
    forward_term: float
    penalty_term: float
    std_error: float


def test_statistic(map_result: MapResult, theta0: SpectralField, delta: float,
                   model, design, horizon: float, prior: PriorSpec,
                   c1: float = None, quad_draws: int = 10_000,
                   seed: int = 0) -> TestStatistic:
    """S = ||G(theta_hat) - G(theta0)||^2_{L2(design)} + delta^2 ||theta_hat||_H^2.

    The forward term is a fixed-seed Monte-Carlo quadrature over the
    design law; the flag compares against c1 * delta^2 (c1 defaults to
    10 * ||theta0||_H^2).
    """
    from .observation import draw_design

    basis = get_basis(prior)
    rng = np.random.Generator(np.random.Philox(key=[int(seed), _QUAD_STREAM]))
    ts, xs, _ = draw_design(design, quad_draws, horizon, theta0.dim, rng)
    predictor = Predictor(model, ts, xs)
    gap = predictor(map_result.theta_hat) - predictor(theta0)
    sq = np.sum(np.atleast_2d(gap) ** 2, axis=1)
    forward_term = float(sq.mean())
    se = float(sq.std(ddof=1) / math.sqrt(quad_draws))
    penalty = rkhs_norm_coeffs(map_result.coeffs, basis) ** 2
    value = forward_term + delta ** 2 * penalty
    if c1 is None:
        c1 = 10.0 * max(rkhs_norm_coeffs(basis.coeffs_from_field(theta0), basis) ** 2,
                        1e-12)
    threshold = c1 * delta ** 2
    return TestStatistic(value=value, threshold=threshold,
                         reject=bool(value >= threshold),
                         forward_term=forward_term,
                         penalty_term=penalty, std_error=se)
