"""End-to-end acceptance suite.

Each test enforces one acceptance criterion at its stated tolerance and
prints a PASS line; the slow studies (criteria 8 and 9) are full
config-driven experiment runs.  Run the whole module with

    pytest tests/test_acceptance.py -v -s
"""

import copy
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import ks_2samp

from torusbayes.diagnostics import fit_rate, information_gap
from torusbayes.experiments import (
    build_design,
    build_exact_model,
    load_config,
    median_errors_by_n,
    run_experiment,
)
from torusbayes.forward import (
    NseModel,
    NseParams,
    OseenModel,
    RdeModel,
    ReactionTerm,
    oseen_solve,
    solve_nse,
    solve_rde,
    stability_gap_nse,
    trajectory_gap,
)
from torusbayes.inference import (
    OptimizerConfig,
    SurrogateSpec,
    pcn_chain,
    tikhonov_map,
)
from torusbayes.observation import AuxiliaryPanel, Design, variance_proxy
from torusbayes.priors import PriorSpec, get_basis, sample_prior, sample_prior_coeffs
from torusbayes.spectral import SpectralField, l2_norm, sobolev_norm

FOUR_PI_SQ = 4.0 * np.pi ** 2
CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


def _report(criterion, detail):
    print(f"\nACCEPTANCE {criterion}: PASS ({detail})")


def zero_forcing(m):
    return SpectralField.zeros(2, m, components=2)


def smooth_divfree(m, seed, alpha=3.5, dims=8, h2=1.0):
    spec = PriorSpec(alpha=alpha, sieve_dim=dims, basis="stokes_divfree",
                     dim=2, resolution=m)
    theta = sample_prior(spec, seed)
    return theta * (h2 / sobolev_norm(theta, 2.0, "homogeneous"))


# -- 1. heat-decay oracle ----------------------------------------------------

def test_criterion_1_heat_decay():
    start = time.perf_counter()
    m, dt, t_end = 64, 1e-3, 0.1
    x = np.arange(m) / m
    theta = SpectralField.from_physical(np.cos(2 * np.pi * x), dim=1)
    traj = solve_rde(theta, ReactionTerm(kind="zero"), t_end, dt)
    exact = np.exp(-FOUR_PI_SQ * t_end) * np.cos(2 * np.pi * x)
    err = np.abs(traj.states[-1].to_physical() - exact).max()
    elapsed = time.perf_counter() - start
    assert err <= 1e-8
    assert elapsed < 5.0
    _report(1, f"max error {err:.2e}, {elapsed:.2f}s")


# -- 2. Taylor-Green oracle ----------------------------------------------------

def test_criterion_2_taylor_green():
    start = time.perf_counter()
    m, nu, t_end = 64, 0.01, 0.5
    x = np.arange(m) / m
    xx, yy = np.meshgrid(x, x, indexing="ij")
    theta = SpectralField.from_physical(np.stack([
        np.sin(2 * np.pi * xx) * np.cos(2 * np.pi * yy),
        -np.cos(2 * np.pi * xx) * np.sin(2 * np.pi * yy),
    ]), dim=2)
    params = NseParams(viscosity=nu, forcing=zero_forcing(m), horizon=t_end)
    traj = solve_nse(theta, params, dt=5e-3)
    exact = theta * math.exp(-8 * np.pi ** 2 * nu * t_end)
    rel = l2_norm(traj.states[-1] - exact) / l2_norm(exact)
    elapsed = time.perf_counter() - start
    assert rel <= 1e-6
    assert elapsed < 60.0
    _report(2, f"relative L2 error {rel:.2e}, {elapsed:.1f}s")


# -- 3. Oseen fixed point ------------------------------------------------------

def test_criterion_3_oseen_fixed_point():
    start = time.perf_counter()
    m = 32
    # (a) initializing at the NSE solution: one iteration stays within 10x
    # the solver tolerance
    tol = 1e-4
    params = NseParams(viscosity=0.1, forcing=zero_forcing(m), horizon=0.2)
    theta = smooth_divfree(m, seed=8, h2=1.0)
    nse = solve_nse(theta, params, dt=1e-3)
    res = oseen_solve(theta, params, dt=1e-3, iterations=1, initializer=nse)
    gap_one = res.successive_gaps[0]
    assert gap_one <= 10 * tol
    # (b) zero initializer at nu = 0.5: successive gaps decay at ratio <= 0.8
    params_v = NseParams(viscosity=0.5, forcing=zero_forcing(m), horizon=0.3)
    res0 = oseen_solve(smooth_divfree(m, seed=0, h2=1.0), params_v, dt=2e-3,
                       iterations=5)
    gaps = res0.successive_gaps
    ratios = [b / a for a, b in zip(gaps, gaps[1:])]
    elapsed = time.perf_counter() - start
    assert all(r <= 0.8 for r in ratios), ratios
    assert elapsed < 120.0
    _report(3, f"one-step gap {gap_one:.2e} <= {10 * tol:.0e}, "
               f"max gap ratio {max(ratios):.2e}, {elapsed:.1f}s")


# -- 4. variance-proxy consistency ---------------------------------------------

def test_criterion_4_variance_proxy():
    start = time.perf_counter()
    sigma2, l_t = 4.0, 10_000
    sensors = np.array([[0.3]])
    times = np.linspace(0.0, 1e-4, l_t)
    clean = np.zeros((l_t, 1))  # constant trajectory: bias-free window
    hits = 0
    for rep in range(100):
        rng = np.random.Generator(np.random.Philox(key=[rep, 7401]))
        obs = clean + math.sqrt(sigma2) * rng.standard_normal((l_t, 1))
        panel = AuxiliaryPanel(sensors=sensors, window_times=times,
                               observations=obs, sigma2=np.array([sigma2]))
        s2 = variance_proxy(panel).s2[0]
        hits += abs(s2 - sigma2) <= 5 * sigma2 / math.sqrt(l_t)
    elapsed = time.perf_counter() - start
    assert hits >= 95
    assert elapsed < 10.0
    _report(4, f"{hits}/100 within the 5 sigma^2 L_T^-1/2 band, {elapsed:.1f}s")


# -- 5. pCN prior invariance ---------------------------------------------------

def test_criterion_5_pcn_prior_invariance():
    start = time.perf_counter()
    prior = PriorSpec(alpha=2.0, sieve_dim=8, basis="torus_scalar", dim=1,
                      resolution=16)

    class ConstantModel:
        def predict(self, theta, ts, xs):
            return np.zeros((len(np.atleast_1d(ts)), 1))

    from torusbayes.observation import Dataset

    ds = Dataset(t=np.zeros(1), x=np.zeros((1, 1)), y=np.zeros((1, 1)),
                 sensor=np.full(1, -1, dtype=np.int64),
                 true_sigma2=np.ones(1),
                 design=Design(kind="uniform_time_space"), seed=0, horizon=1.0)
    surrogate = SurrogateSpec(proxy_variances=np.ones(1), model=ConstantModel())
    chain = pcn_chain(ds, prior, surrogate, beta=0.7, n_steps=50_000,
                      burn_in=2000, thinning=25, seed=5)
    fresh = np.stack([sample_prior_coeffs(prior, 90_000 + s)
                      for s in range(2000)])
    alpha = 0.01 / prior.sieve_dim  # 1% level, Bonferroni over coefficients
    worst = 1.0
    for j in range(prior.sieve_dim):
        stat = ks_2samp(chain.samples[:, j], fresh[:, j])
        worst = min(worst, stat.pvalue)
        assert stat.pvalue > alpha, (j, stat)
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    _report(5, f"min KS p-value {worst:.4f} > {alpha:.4f}, {elapsed:.1f}s")


# -- 6. ridge oracle -------------------------------------------------------------

def test_criterion_6_ridge_oracle():
    start = time.perf_counter()
    prior = PriorSpec(alpha=2.0, sieve_dim=4, basis="torus_scalar", dim=1,
                      resolution=16)
    basis = get_basis(prior)

    class ReadoutModel:
        def predict(self, theta, ts, xs):
            c = basis.coeffs_from_field(theta)
            idx = np.minimum((np.atleast_2d(xs)[:, 0] * 4).astype(int), 3)
            return c[idx][:, None]

    from torusbayes.observation import Dataset

    rng = np.random.default_rng(0)
    n = 12
    idx = rng.integers(0, 4, n)
    y = rng.standard_normal(n)
    sigma2 = 0.8
    ds = Dataset(t=np.zeros(n), x=(idx[:, None] + 0.5) / 4, y=y[:, None],
                 sensor=np.full(n, -1, dtype=np.int64),
                 true_sigma2=np.full(n, sigma2),
                 design=Design(kind="uniform_time_space"), seed=0, horizon=1.0)
    surrogate = SurrogateSpec(proxy_variances=ds.true_sigma2,
                              model=ReadoutModel())
    delta = 0.3
    result = tikhonov_map(ds, prior, surrogate, delta,
                          optimizer=OptimizerConfig(gtol=1e-12, n_starts=3))
    # closed-form ridge solution, coefficient by coefficient
    w = basis.lambdas ** prior.alpha
    num = np.zeros(4)
    den = delta ** 2 * w.copy()
    for i in range(n):
        num[idx[i]] += y[i] / sigma2 / n
        den[idx[i]] += 1.0 / sigma2 / n
    oracle = num / den
    err = np.abs(result.coeffs - oracle).max()
    elapsed = time.perf_counter() - start
    assert err <= 1e-8
    assert elapsed < 5.0
    _report(6, f"max coefficient gap vs ridge oracle {err:.2e}, {elapsed:.1f}s")


# -- 7. information inequality ----------------------------------------------------

def test_criterion_7_information_inequality():
    start = time.perf_counter()
    design = Design(kind="uniform_time_space")

    # well-specified reaction-diffusion configuration
    prior_1d = PriorSpec(alpha=3.0, sieve_dim=6, basis="torus_scalar", dim=1,
                         resolution=32)
    model_rde = RdeModel(ReactionTerm(), horizon=0.2, dt=5e-3, store_every=2)
    theta0 = sample_prior(prior_1d, 0)
    holds_well = 0
    for k in range(20):
        theta = sample_prior(prior_1d, 1000 + k)
        gap = information_gap(
            theta=theta, theta0=theta0, design=design, horizon=0.2, n_obs=50,
            sigma2_draw=lambda idx, sensor: np.full(len(idx), 1.0),
            s2_draw=lambda idx, sensor: np.full(len(idx), 1.0),
            model_exact=model_rde, model_proxy=model_rde,
            mc_draws=2000, seed=k, quad_draws=2000)
        holds_well += gap.holds
    assert holds_well == 20

    # Oseen-misspecified Navier-Stokes configuration
    m = 32
    params = NseParams(viscosity=0.4, forcing=zero_forcing(m), horizon=0.15)
    exact = NseModel(params, dt=2e-3, store_every=2)
    proxy = OseenModel(params, dt=2e-3, tolerance=1e-3, store_every=2)
    prior_2d = PriorSpec(alpha=3.5, sieve_dim=8, basis="stokes_divfree",
                         dim=2, resolution=m)
    theta0_2d = sample_prior(prior_2d, 0) * 0.5
    holds_mis = 0
    for k in range(20):
        theta = sample_prior(prior_2d, 2000 + k) * 0.5
        gap = information_gap(
            theta=theta, theta0=theta0_2d, design=design, horizon=0.15,
            n_obs=50,
            sigma2_draw=lambda idx, sensor: np.full(len(idx), 1.0),
            s2_draw=lambda idx, sensor: np.full(len(idx), 1.0),
            model_exact=exact, model_proxy=proxy,
            mc_draws=1000, seed=k, quad_draws=1000)
        holds_mis += gap.holds
    elapsed = time.perf_counter() - start
    assert holds_mis == 20
    assert elapsed < 300.0
    _report(7, f"lhs <= bound + 3 SE in {holds_well}/20 well-specified and "
               f"{holds_mis}/20 Oseen probes, {elapsed:.0f}s")


# -- 8. contraction study ----------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_contraction_study(tmp_path):
    start = time.perf_counter()
    config = load_config(CONFIG_DIR / "rde_noise.json")
    config["output_dir"] = str(tmp_path / "rde_noise")
    rows, summary = run_experiment(config)
    ns, medians = median_errors_by_n(rows, "l2_mean")
    assert ns == [250, 1000, 4000]
    assert medians[0] > medians[1] > medians[2], medians
    slope = summary["rate"]["slope"]
    elapsed = time.perf_counter() - start
    assert slope <= -0.2, summary["rate"]
    assert elapsed < 1800.0
    _report(8, f"medians {['%.3e' % m for m in medians]}, slope {slope:.3f}, "
               f"{elapsed:.0f}s")


# -- 9. misspecification robustness --------------------------------------------------

@pytest.mark.slow
def test_criterion_9_misspecification_robustness(tmp_path):
    start = time.perf_counter()
    config = load_config(CONFIG_DIR / "rde_noise.json")
    config["Ns"] = [1000]
    config["seeds_per_n"] = 5
    config["sampler"]["n_steps"] = 8000
    config["sampler"]["burn_in"] = 2000
    config["output_dir"] = str(tmp_path / "proxy")
    rows_proxy, _ = run_experiment(config)

    exact_cfg = copy.deepcopy(config)
    exact_cfg["surrogate"]["variances"] = "true"
    exact_cfg["output_dir"] = str(tmp_path / "exact")
    rows_exact, _ = run_experiment(exact_cfg)

    # the proxies must actually satisfy the condition flags
    flag_ok = sum(r["nm1"] and r["nm2"] and r["mm2"] for r in rows_proxy)
    assert flag_ok >= 3, rows_proxy

    med_proxy = float(np.median([r["l2_mean"] for r in rows_proxy]))
    med_exact = float(np.median([r["l2_mean"] for r in rows_exact]))
    ratio = med_proxy / med_exact
    elapsed = time.perf_counter() - start
    assert ratio <= 2.0, (med_proxy, med_exact)
    assert elapsed < 1200.0
    _report(9, f"surrogate/exact median error ratio {ratio:.3f} "
               f"({med_proxy:.3e} vs {med_exact:.3e}), flags in "
               f"{flag_ok}/5 cells, {elapsed:.0f}s")


# -- 10. stability lemmas -------------------------------------------------------------

def test_criterion_10_stability_lemmas():
    start = time.perf_counter()
    m = 32
    theta = smooth_divfree(m, seed=2, h2=1.5)
    nu = 0.1

    def gap_for(eps_nu):
        pa = NseParams(viscosity=nu, forcing=zero_forcing(m), horizon=0.25)
        pb = NseParams(viscosity=nu * (1 + eps_nu), forcing=zero_forcing(m),
                       horizon=0.25)
        return stability_gap_nse(theta, pa, pb, dt=2e-3)

    r_nu = gap_for(1e-2) / gap_for(5e-3)
    assert 1.5 <= r_nu <= 2.5, r_nu

    g = smooth_divfree(m, seed=12, h2=1.0)

    def gap_forcing(delta):
        pa = NseParams(viscosity=nu, forcing=zero_forcing(m), horizon=0.25)
        pb = NseParams(viscosity=nu, forcing=g * delta, horizon=0.25)
        return stability_gap_nse(theta, pa, pb, dt=2e-3)

    r_f = gap_forcing(1e-2) / gap_forcing(5e-3)
    assert 1.5 <= r_f <= 2.5, r_f

    # reaction-term analogue (Lipschitz stability in the C^1 distance)
    spec = PriorSpec(alpha=3.0, sieve_dim=6, basis="torus_scalar", dim=1,
                     resolution=32)
    theta_s = sample_prior(spec, 4)
    theta_s = theta_s * (1.0 / l2_norm(theta_s))
    base = ReactionTerm(amplitude=1.0)

    def gap_reaction(eps):
        other = ReactionTerm(amplitude=1.0 + eps)
        ua = solve_rde(theta_s, base, 0.25, 2e-3)
        ub = solve_rde(theta_s, other, 0.25, 2e-3)
        return trajectory_gap(ua, ub, order=2.0)

    r_r = gap_reaction(2e-1) / gap_reaction(1e-1)
    elapsed = time.perf_counter() - start
    assert 1.5 <= r_r <= 2.5, r_r
    assert elapsed < 300.0
    _report(10, f"halving ratios: viscosity {r_nu:.3f}, forcing {r_f:.3f}, "
                f"reaction {r_r:.3f}, {elapsed:.0f}s")


# -- 11. determinism -------------------------------------------------------------------

def test_criterion_11_determinism(tmp_path):
    start = time.perf_counter()
    config = load_config(CONFIG_DIR / "smoke_rde.json")
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    cfg_a = copy.deepcopy(config)
    cfg_a["output_dir"] = str(out_a)
    cfg_b = copy.deepcopy(config)
    cfg_b["output_dir"] = str(out_b)
    run_experiment(cfg_a)
    run_experiment(cfg_b)
    bytes_a = (out_a / "results.csv").read_bytes()
    bytes_b = (out_b / "results.csv").read_bytes()
    elapsed = time.perf_counter() - start
    assert bytes_a == bytes_b
    assert (out_a / "summary.json").read_bytes() == \
        (out_b / "summary.json").read_bytes()
    _report(11, f"byte-identical CSV and summary over two smoke runs, "
                f"{elapsed:.0f}s")
