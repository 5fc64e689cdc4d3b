import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from torusbayes.forward import ReactionTerm, RdeModel, SolverDivergenceError
from torusbayes.inference import (
    NonConvergenceError,
    OptimizerConfig,
    SurrogateSpec,
    credible_band,
    log_likelihood,
    pcn_chain,
    posterior_mean,
    tikhonov_functional,
    tikhonov_map,
)
from torusbayes.inference import test_statistic as compute_statistic
from torusbayes.observation import Dataset, Design
from torusbayes.priors import (
    PriorSpec,
    get_basis,
    prior_stream,
    rkhs_norm,
    sample_prior,
    sample_prior_coeffs,
)
from torusbayes.spectral import ConfigurationError, l2_norm

PRIOR = PriorSpec(alpha=2.0, sieve_dim=4, basis="torus_scalar", dim=1,
                  resolution=16)
BASIS = get_basis(PRIOR)


class ReadoutModel:
    """Test forward: prediction i reads the coefficient indexed by x_i."""

    def __init__(self, prior):
        self.basis = get_basis(prior)

    def predict(self, theta, ts, xs):
        c = self.basis.coeffs_from_field(theta)
        idx = np.minimum((np.atleast_2d(xs)[:, 0] * len(c)).astype(int),
                         len(c) - 1)
        return c[idx][:, None]


class ConstantModel:
    """Predictions independent of theta: constant likelihood."""

    def predict(self, theta, ts, xs):
        return np.zeros((len(np.atleast_1d(ts)), 1))


class FailingModel:
    """Raises a solver failure whenever the first coefficient is negative."""

    def __init__(self, prior):
        self.basis = get_basis(prior)

    def predict(self, theta, ts, xs):
        c = self.basis.coeffs_from_field(theta)
        if c[0] < 0:
            raise SolverDivergenceError(0.1, "stub")
        return np.zeros((len(np.atleast_1d(ts)), 1))


def readout_dataset(y, indices, sigma2=1.0, prior=PRIOR):
    d = get_basis(prior).dim_coeff
    n = len(y)
    return Dataset(
        t=np.zeros(n),
        x=(np.asarray(indices)[:, None] + 0.5) / d,
        y=np.asarray(y, dtype=float)[:, None],
        sensor=np.full(n, -1, dtype=np.int64),
        true_sigma2=np.full(n, float(sigma2)),
        design=Design(kind="uniform_time_space"),
        seed=0,
        horizon=1.0,
    )


# ---------------------------------------------------------------------------
# log-likelihood
# ---------------------------------------------------------------------------

def test_loglik_zero_for_exact_predictions():
    theta = sample_prior(PRIOR, 0)
    c = BASIS.coeffs_from_field(theta)
    ds = readout_dataset(c[[0, 1, 2]], [0, 1, 2])
    model = ReadoutModel(PRIOR)
    assert log_likelihood(ds, theta, model, ds.true_sigma2) == 0.0


def test_loglik_single_record_half():
    theta = BASIS.field_from_coeffs(np.zeros(4))
    ds = readout_dataset([1.0], [0], sigma2=1.0)
    val = log_likelihood(ds, theta, ReadoutModel(PRIOR), np.array([1.0]))
    assert val == pytest.approx(-0.5)


def test_loglik_surrogate_identity_bitwise():
    theta = sample_prior(PRIOR, 1)
    rng = np.random.default_rng(0)
    ds = readout_dataset(rng.standard_normal(6), [0, 1, 2, 3, 0, 1],
                         sigma2=0.7)
    model = ReadoutModel(PRIOR)
    exact = log_likelihood(ds, theta, model, ds.true_sigma2)
    surrogate = log_likelihood(ds, theta, model, ds.true_sigma2.copy())
    assert exact == surrogate  # bitwise


def test_loglik_monotone_in_observations():
    theta = sample_prior(PRIOR, 2)
    c = BASIS.coeffs_from_field(theta)
    model = ReadoutModel(PRIOR)
    base = readout_dataset([c[0]], [0])
    ell0 = log_likelihood(base, theta, model, base.true_sigma2)
    extended_zero = readout_dataset([c[0], c[1]], [0, 1])
    ell1 = log_likelihood(extended_zero, theta, model, extended_zero.true_sigma2)
    assert ell1 == ell0  # zero-residual record leaves the value unchanged
    extended_bad = readout_dataset([c[0], c[1] + 1.0], [0, 1])
    ell2 = log_likelihood(extended_bad, theta, model, extended_bad.true_sigma2)
    assert ell2 < ell0


def test_loglik_rejects_bad_variances():
    theta = sample_prior(PRIOR, 0)
    ds = readout_dataset([0.0], [0])
    with pytest.raises(ConfigurationError):
        log_likelihood(ds, theta, ReadoutModel(PRIOR), np.array([0.0]))


def test_surrogate_spec_floor():
    with pytest.raises(ConfigurationError):
        SurrogateSpec(proxy_variances=np.array([1e-12]), model=None,
                      s0_floor=1e-6)
    with pytest.raises(ConfigurationError):
        SurrogateSpec(proxy_variances=np.array([-1.0]), model=None)


# ---------------------------------------------------------------------------
# pCN sampler
# ---------------------------------------------------------------------------

def flat_surrogate(n):
    return SurrogateSpec(proxy_variances=np.ones(n), model=ConstantModel())


def test_pcn_beta_zero_constant_chain():
    ds = readout_dataset([0.0, 0.0], [0, 1])
    chain = pcn_chain(ds, PRIOR, flat_surrogate(2), beta=0.0, n_steps=50,
                      burn_in=0, thinning=1, seed=0)
    assert chain.accept_rate == 1.0
    assert np.ptp(chain.samples, axis=0).max() == 0.0


def test_pcn_prior_invariance_moments():
    ds = readout_dataset([0.0], [0])
    chain = pcn_chain(ds, PRIOR, flat_surrogate(1), beta=0.7, n_steps=20_000,
                      burn_in=500, thinning=5, seed=1)
    target_sd = BASIS.coefficient_std()
    n = len(chain.samples)
    for j in range(4):
        xs = chain.samples[:, j]
        se_mean = target_sd[j] / math.sqrt(n / 3)
        assert abs(xs.mean()) <= 4 * se_mean
        se_var = target_sd[j] ** 2 * math.sqrt(2.0 / (n / 3))
        assert abs(xs.var() - target_sd[j] ** 2) <= 4 * se_var


def test_pcn_detailed_balance_ks():
    ds = readout_dataset([0.0], [0])
    chain = pcn_chain(ds, PRIOR, flat_surrogate(1), beta=0.8, n_steps=20_000,
                      burn_in=1000, thinning=10, seed=2)
    fresh = np.stack([sample_prior_coeffs(PRIOR, 10_000 + s)
                      for s in range(2000)])
    alpha = 0.01 / PRIOR.sieve_dim  # Bonferroni over coefficients
    for j in range(PRIOR.sieve_dim):
        stat = ks_2samp(chain.samples[:, j], fresh[:, j])
        assert stat.pvalue > alpha, (j, stat)


def test_pcn_beta_one_matches_conjugate_posterior():
    # independence sampler on a 2-coefficient conjugate problem
    prior = PriorSpec(alpha=2.0, sieve_dim=2, basis="torus_scalar", dim=1,
                      resolution=16)
    basis = get_basis(prior)
    tau2 = basis.coefficient_std() ** 2
    sigma2 = 0.5
    y = np.array([0.8, 0.6, -0.4, -0.2])
    idx = np.array([0, 0, 1, 1])
    ds = readout_dataset(y, idx, sigma2=sigma2, prior=prior)
    surr = SurrogateSpec(proxy_variances=ds.true_sigma2, model=ReadoutModel(prior))
    chain = pcn_chain(ds, prior, surr, beta=1.0, n_steps=40_000, burn_in=2000,
                      thinning=4, seed=3)
    # closed-form Gaussian posterior per coefficient
    for j in range(2):
        n_j = np.sum(idx == j)
        prec = 1.0 / tau2[j] + n_j / sigma2
        mean = (y[idx == j].sum() / sigma2) / prec
        sd = math.sqrt(1.0 / prec)
        est = chain.samples[:, j].mean()
        assert abs(est - mean) <= 0.2 * sd, (j, est, mean)
        assert chain.samples[:, j].std() == pytest.approx(sd, rel=0.2)


def test_pcn_failure_tally():
    prior = PriorSpec(alpha=2.0, sieve_dim=2, basis="torus_scalar", dim=1,
                      resolution=16)
    ds = readout_dataset([0.0], [0], prior=prior)
    surr = SurrogateSpec(proxy_variances=np.ones(1), model=FailingModel(prior))
    chain = pcn_chain(ds, prior, surr, beta=0.9, n_steps=400, seed=4,
                      theta_init=np.array([1.0, 0.0]))
    assert chain.failures > 0
    # failed proposals were rejected: first coefficient stayed nonnegative
    assert chain.samples[:, 0].min() >= 0.0


def test_pcn_determinism_and_validation():
    ds = readout_dataset([0.0], [0])
    a = pcn_chain(ds, PRIOR, flat_surrogate(1), beta=0.5, n_steps=200, seed=5)
    b = pcn_chain(ds, PRIOR, flat_surrogate(1), beta=0.5, n_steps=200, seed=5)
    assert np.array_equal(a.samples, b.samples)
    with pytest.raises(ConfigurationError):
        pcn_chain(ds, PRIOR, flat_surrogate(1), beta=1.5, n_steps=10)
    with pytest.raises(ConfigurationError):
        pcn_chain(ds, PRIOR, flat_surrogate(1), beta=0.5, n_steps=10, burn_in=10)


def test_pcn_adaptation_only_during_burn_in():
    ds = readout_dataset([5.0, -3.0], [0, 1], sigma2=0.01)
    surr = SurrogateSpec(proxy_variances=ds.true_sigma2, model=ReadoutModel(PRIOR))
    chain = pcn_chain(ds, PRIOR, surr, beta=0.9, n_steps=4000, burn_in=2000,
                      thinning=2, seed=6, adapt_beta=True)
    assert chain.beta < 0.9  # tuned down toward 25% acceptance
    assert 0.05 <= chain.accept_rate <= 0.65


# ---------------------------------------------------------------------------
# posterior summaries
# ---------------------------------------------------------------------------

def test_posterior_mean_symmetry():
    theta = sample_prior_coeffs(PRIOR, 0)
    chain = _chain_from_samples(np.stack([theta, -theta]))
    mean = posterior_mean(chain, PRIOR)
    assert np.abs(mean.coeffs).max() <= 1e-15


def test_posterior_mean_constant_chain():
    theta = sample_prior_coeffs(PRIOR, 1)
    chain = _chain_from_samples(np.stack([theta, theta, theta]))
    mean = posterior_mean(chain, PRIOR)
    assert np.array_equal(mean.coeffs, BASIS.field_from_coeffs(theta).coeffs)


def _chain_from_samples(samples):
    from torusbayes.inference import Chain

    return Chain(samples=samples, log_liks=np.zeros(len(samples)),
                 accept_rate=1.0, beta=0.5, seed=0, burn_in=0, thinning=1,
                 n_steps=len(samples), accepts=len(samples),
                 proposals=len(samples), failures=0, prior=PRIOR)


def test_posterior_mean_clt_bound_flat_chain():
    ds = readout_dataset([0.0], [0])
    chain = pcn_chain(ds, PRIOR, flat_surrogate(1), beta=0.6, n_steps=30_000,
                      burn_in=1000, thinning=5, seed=7)
    mean = posterior_mean(chain, PRIOR)
    prior_l2_sd = math.sqrt(np.sum(BASIS.coefficient_std() ** 2))
    # effective sample size from lag autocorrelation of the first coefficient
    xs = chain.samples[:, 0] - chain.samples[:, 0].mean()
    acf = [1.0]
    for lag in range(1, 50):
        c = np.sum(xs[lag:] * xs[:-lag]) / np.sum(xs * xs)
        if c < 0.05:
            break
        acf.append(c)
    ess = len(xs) / (1 + 2 * sum(acf[1:]))
    assert l2_norm(mean) <= 4 * prior_l2_sd / math.sqrt(ess)


def test_posterior_mean_empty_chain():
    chain = _chain_from_samples(np.zeros((0, 4)))
    with pytest.raises(ConfigurationError):
        posterior_mean(chain, PRIOR)


def test_credible_band_symmetric_two_state():
    theta = sample_prior_coeffs(PRIOR, 3)
    chain = _chain_from_samples(np.stack([theta, -theta]))
    band = credible_band(chain, PRIOR, level=0.5)
    phys = BASIS.field_from_coeffs(theta).to_physical()
    # the band is pinned by the two states: symmetric about the pointwise
    # median (zero) and contained in their envelope
    assert np.abs(band.lower + band.upper).max() <= 1e-12
    assert np.all(band.lower >= np.minimum(phys, -phys) - 1e-12)
    assert np.all(band.upper <= np.maximum(phys, -phys) + 1e-12)


def test_credible_band_constant_chain_zero_width():
    theta = sample_prior_coeffs(PRIOR, 4)
    chain = _chain_from_samples(np.stack([theta] * 5))
    band = credible_band(chain, PRIOR, level=0.9)
    assert np.abs(band.upper - band.lower).max() <= 1e-14


def test_credible_band_level_validation():
    chain = _chain_from_samples(np.stack([sample_prior_coeffs(PRIOR, 0)]))
    for bad in (0.0, 1.0, -0.2, 1.4):
        with pytest.raises(ConfigurationError):
            credible_band(chain, PRIOR, level=bad)


def test_credible_band_coverage_flat_chain():
    ds = readout_dataset([0.0], [0])
    chain = pcn_chain(ds, PRIOR, flat_surrogate(1), beta=0.7, n_steps=40_000,
                      burn_in=1000, thinning=5, seed=8)
    level = 0.8
    band = credible_band(chain, PRIOR, level=level)
    inside = []
    for s in range(1000):
        draw = sample_prior(PRIOR, 50_000 + s).to_physical()
        inside.append(np.mean((draw >= band.lower) & (draw <= band.upper)))
    coverage = np.mean(inside)
    assert abs(coverage - level) <= 0.05


# ---------------------------------------------------------------------------
# Tikhonov MAP
# ---------------------------------------------------------------------------

def ridge_oracle(ds, prior, delta):
    """Closed-form maximizer for the linear readout forward."""
    basis = get_basis(prior)
    d = basis.dim_coeff
    w = basis.lambdas ** prior.alpha * (prior.rescale if prior.rescale > 0 else 1.0)
    num = np.zeros(d)
    den = delta ** 2 * w.copy()
    idx = np.minimum((ds.x[:, 0] * d).astype(int), d - 1)
    for i in range(ds.n):
        num[idx[i]] += ds.y[i, 0] / ds.true_sigma2[i] / ds.n
        den[idx[i]] += 1.0 / ds.true_sigma2[i] / ds.n
    return num / den


def test_tikhonov_matches_ridge_oracle():
    rng = np.random.default_rng(0)
    y = rng.standard_normal(12)
    idx = rng.integers(0, 4, 12)
    ds = readout_dataset(y, idx, sigma2=0.8)
    surr = SurrogateSpec(proxy_variances=ds.true_sigma2, model=ReadoutModel(PRIOR))
    delta = 0.3
    result = tikhonov_map(ds, PRIOR, surr, delta,
                          optimizer=OptimizerConfig(gtol=1e-12, n_starts=3))
    oracle = ridge_oracle(ds, PRIOR, delta)
    assert np.abs(result.coeffs - oracle).max() <= 1e-8
    assert result.converged and result.certificate_ok


def test_tikhonov_penalty_dominance():
    rng = np.random.default_rng(1)
    ds = readout_dataset(rng.standard_normal(8), rng.integers(0, 4, 8))
    surr = SurrogateSpec(proxy_variances=ds.true_sigma2, model=ReadoutModel(PRIOR))
    result = tikhonov_map(ds, PRIOR, surr, delta=1e6,
                          optimizer=OptimizerConfig(n_starts=2))
    assert rkhs_norm(result.theta_hat, PRIOR) <= 1e-3


def test_tikhonov_perfect_recovery_zero_noise():
    truth = sample_prior_coeffs(PRIOR, 11)
    idx = np.tile(np.arange(4), 5)
    ds = readout_dataset(truth[idx], idx, sigma2=1.0)
    surr = SurrogateSpec(proxy_variances=ds.true_sigma2, model=ReadoutModel(PRIOR))
    result = tikhonov_map(ds, PRIOR, surr, delta=1e-6,
                          optimizer=OptimizerConfig(gtol=1e-12))
    truth_field = BASIS.field_from_coeffs(truth)
    assert l2_norm(result.theta_hat - truth_field) <= 1e-3


def test_tikhonov_objective_consistency_invariant():
    rng = np.random.default_rng(2)
    ds = readout_dataset(rng.standard_normal(6), rng.integers(0, 4, 6))
    surr = SurrogateSpec(proxy_variances=ds.true_sigma2, model=ReadoutModel(PRIOR))
    result = tikhonov_map(ds, PRIOR, surr, delta=0.5)
    objective, _ = tikhonov_functional(ds, PRIOR, surr, 0.5)
    assert result.objective == pytest.approx(objective(result.coeffs), abs=1e-10)
    assert result.d_delta2 == pytest.approx(-2 * result.objective, abs=1e-12)


def test_tikhonov_certificate_against_prior_draws():
    rng = np.random.default_rng(3)
    ds = readout_dataset(rng.standard_normal(10), rng.integers(0, 4, 10))
    surr = SurrogateSpec(proxy_variances=ds.true_sigma2, model=ReadoutModel(PRIOR))
    result = tikhonov_map(ds, PRIOR, surr, delta=0.2,
                          theta0=sample_prior(PRIOR, 99))
    objective, _ = tikhonov_functional(ds, PRIOR, surr, 0.2)
    cert = prior_stream(0, 17)
    for _ in range(50):
        cand = BASIS.coefficient_std() * cert.standard_normal(4)
        assert objective(cand) <= result.objective + 1e-10
    assert result.certificate_ok


def test_fd_gradient_matches_directional_derivative():
    # RDE-backed functional: directional derivative vs assembled FD gradient
    prior = PriorSpec(alpha=2.5, sieve_dim=4, basis="torus_scalar", dim=1,
                      resolution=16)
    basis = get_basis(prior)
    theta0 = sample_prior(prior, 0)
    model = RdeModel(ReactionTerm(), horizon=0.1, dt=5e-3)
    traj = model.trajectory(theta0)
    rng = np.random.default_rng(4)
    ts = rng.uniform(0, 0.1, 12)
    xs = rng.uniform(0, 1, (12, 1))
    from torusbayes.forward import evaluate_forward_batch

    y = evaluate_forward_batch(traj, ts, xs) + 0.05 * rng.standard_normal((12, 1))
    ds = Dataset(t=ts, x=xs, y=y, sensor=np.full(12, -1, dtype=np.int64),
                 true_sigma2=np.full(12, 0.05 ** 2),
                 design=Design(kind="uniform_time_space"), seed=0, horizon=0.1)
    surr = SurrogateSpec(proxy_variances=ds.true_sigma2, model=model)
    objective, gradient = tikhonov_functional(ds, prior, surr, delta=0.1)
    c = basis.coeffs_from_field(theta0)
    g = gradient(c)
    for seed in range(3):
        v = np.random.default_rng(seed).standard_normal(4)
        v /= np.linalg.norm(v)
        h = 1e-5
        directional = (objective(c + h * v) - objective(c - h * v)) / (2 * h)
        assert directional == pytest.approx(float(g @ v), rel=1e-4)


def test_tikhonov_all_starts_fail():
    class AlwaysFailing:
        def predict(self, theta, ts, xs):
            raise SolverDivergenceError(0.0, "stub")

    ds = readout_dataset([1.0], [0])
    surr = SurrogateSpec(proxy_variances=ds.true_sigma2, model=AlwaysFailing())
    with pytest.raises(NonConvergenceError):
        tikhonov_map(ds, PRIOR, surr, delta=0.5,
                     optimizer=OptimizerConfig(n_starts=2, certify_draws=0))


# ---------------------------------------------------------------------------
# test statistic
# ---------------------------------------------------------------------------

def _statistic_setup():
    prior = PriorSpec(alpha=2.5, sieve_dim=4, basis="torus_scalar", dim=1,
                      resolution=16)
    basis = get_basis(prior)
    theta0 = sample_prior(prior, 5)
    model = RdeModel(ReactionTerm(kind="zero"), horizon=0.2, dt=5e-3)
    design = Design(kind="uniform_time_space")
    return prior, basis, theta0, model, design


def _map_like(coeffs, basis, delta):
    from torusbayes.inference import MapResult

    return MapResult(theta_hat=basis.field_from_coeffs(coeffs), coeffs=coeffs,
                     objective=0.0, grad_norm=0.0, iterations=0, d_delta2=0.0,
                     converged=True, certificate_ok=True, delta=delta)


def test_statistic_at_truth():
    prior, basis, theta0, model, design = _statistic_setup()
    delta = 1e-3
    res = _map_like(basis.coeffs_from_field(theta0), basis, delta)
    stat = compute_statistic(res, theta0, delta, model, design, horizon=0.2,
                          prior=prior, quad_draws=2000, seed=0)
    h_norm2 = rkhs_norm(theta0, prior) ** 2
    assert stat.value == pytest.approx(delta ** 2 * h_norm2, rel=1e-6)
    assert not stat.reject  # value = delta^2 ||theta0||^2 < 10 delta^2 ||theta0||^2


def test_statistic_far_from_truth_rejects():
    prior, basis, theta0, model, design = _statistic_setup()
    delta = 1e-3
    opposite = -basis.coeffs_from_field(theta0)
    opposite /= np.linalg.norm(opposite)
    res = _map_like(opposite, basis, delta)
    stat = compute_statistic(res, theta0, delta, model, design, horizon=0.2,
                          prior=prior, quad_draws=2000, seed=0)
    assert stat.reject


def test_statistic_quadrature_stability():
    prior, basis, theta0, model, design = _statistic_setup()
    delta = 0.01
    res = _map_like(basis.coeffs_from_field(theta0) * 0.5, basis, delta)
    a = compute_statistic(res, theta0, delta, model, design, horizon=0.2,
                       prior=prior, quad_draws=4000, seed=1)
    b = compute_statistic(res, theta0, delta, model, design, horizon=0.2,
                       prior=prior, quad_draws=8000, seed=1)
    assert abs(a.value - b.value) <= 3 * (a.std_error + b.std_error)


def test_solver_failure_carries_offending_theta():
    prior = PriorSpec(alpha=2.0, sieve_dim=2, basis="torus_scalar", dim=1,
                      resolution=16)
    ds = readout_dataset([0.0], [0], prior=prior)

    class AlwaysFailing:
        def predict(self, theta, ts, xs):
            raise SolverDivergenceError(0.25, "stub")

    theta = sample_prior(prior, 0)
    with pytest.raises(SolverDivergenceError) as err:
        log_likelihood(ds, theta, AlwaysFailing(), ds.true_sigma2)
    assert err.value.theta is theta
    assert err.value.time == 0.25


def test_chain_persistence_round_trip(tmp_path):
    from torusbayes.inference import load_chain_samples, save_chain, save_chain_summary

    ds = readout_dataset([0.0], [0])
    chain = pcn_chain(ds, PRIOR, flat_surrogate(1), beta=0.5, n_steps=100,
                      burn_in=20, thinning=4, seed=9)
    path = tmp_path / "chain.bin"
    save_chain(chain, path)
    header, samples = load_chain_samples(path)
    assert np.array_equal(samples, chain.samples)
    assert header["accepts"] == chain.accepts
    assert header["beta"] == chain.beta
    csv_path = tmp_path / "chain.csv"
    save_chain_summary(chain, csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "step,log_lik,accepted"
    assert len(lines) == 1 + len(chain.samples)
    step0 = int(lines[1].split(",")[0])
    assert step0 == chain.steps[0]
