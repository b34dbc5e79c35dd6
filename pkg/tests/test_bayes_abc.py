import math

import numpy as np
import pytest
from scipy import stats

from transparent_dp.bayes_abc import (
    DiscreteToy,
    PriorSpec,
    abc_exact_posterior,
    abc_toy_posterior,
    grid_posterior_oracle,
    misreported_mechanism_bias,
    mixture_posterior_oracle,
    posterior_fit,
    random_toy,
    samples_to_csv,
    table_to_csv,
    toy_privatized_observation,
)
from transparent_dp.errors import InfeasibleABCError
from transparent_dp.mechanisms import (
    Family,
    MechanismSpec,
    PrivacyBudget,
    double_geometric_log_pmf,
)
from transparent_dp.rng import stream
from transparent_dp.simulate import PrivatizedDataset


def dg_spec(eps):
    return MechanismSpec(Family.DOUBLE_GEOMETRIC, 1.0, PrivacyBudget(eps))


def small_toy(eps=0.5, prior_weights=None):
    return DiscreteToy(
        beta_grid=np.round(np.linspace(-1.0, 2.0, 7), 3),
        x_support=np.arange(0, 4),
        y_support=np.arange(-4, 9),
        n=2,
        mechanism=dg_spec(eps),
        beta0=0.5,
        sigma=1.2,
        lam=1.5,
        prior_weights=prior_weights,
    )


def test_prior_spec_uniform_box():
    prior = PriorSpec("uniform_box", bounds=((-1.0, 1.0), (2.0, 5.0)))
    draws = prior.sample(stream(80, "prior"), 500)
    assert draws.shape == (500, 2)
    assert draws[:, 0].min() >= -1.0 and draws[:, 0].max() <= 1.0
    assert draws[:, 1].min() >= 2.0 and draws[:, 1].max() <= 5.0


def test_prior_spec_point_mass_coordinate():
    prior = PriorSpec("uniform_box", bounds=((3.0, 3.0), (0.0, 1.0)))
    draws = prior.sample(stream(81, "prior-pm"), 100)
    assert np.all(draws[:, 0] == 3.0)


def test_prior_spec_independent_normal():
    prior = PriorSpec("independent_normal", means=(1.0, -2.0), sds=(0.5, 2.0))
    draws = prior.sample(stream(82, "prior-n"), 20000)
    assert abs(draws[:, 0].mean() - 1.0) < 0.02
    assert abs(draws[:, 1].std() - 2.0) < 0.05


def test_prior_spec_validation():
    with pytest.raises(ValueError):
        PriorSpec("uniform_box")
    with pytest.raises(ValueError):
        PriorSpec("uniform_box", bounds=((1.0, 0.0), (0.0, 1.0)))
    with pytest.raises(ValueError):
        PriorSpec("uniform_box", bounds=((math.inf, math.inf), (0.0, 1.0)))
    with pytest.raises(ValueError):
        PriorSpec("independent_normal", means=(0.0, 0.0))
    with pytest.raises(ValueError):
        PriorSpec("independent_normal", means=(0.0, 0.0), sds=(1.0, 0.0))
    with pytest.raises(ValueError):
        PriorSpec("jeffreys")


def test_discrete_toy_validation():
    with pytest.raises(ValueError):
        small_toy().__class__(
            beta_grid=np.array([1.0]),
            x_support=np.arange(3),
            y_support=np.arange(3),
            n=5,
            mechanism=dg_spec(0.5),
            beta0=0.0,
            sigma=1.0,
            lam=1.0,
        )
    with pytest.raises(ValueError):
        DiscreteToy(
            beta_grid=np.array([1.0]),
            x_support=np.arange(3),
            y_support=np.arange(3),
            n=2,
            mechanism=MechanismSpec(Family.LAPLACE, 1.0, PrivacyBudget(0.5)),
            beta0=0.0,
            sigma=1.0,
            lam=1.0,
        )
    with pytest.raises(ValueError):
        small_toy(prior_weights=np.array([1.0, 2.0]))


def test_toy_x_pmf_matches_truncated_poisson():
    toy = small_toy()
    p = np.exp(toy.x_log_pmf())
    ref = stats.poisson.pmf(toy.x_support, toy.lam)
    ref = ref / ref.sum()
    np.testing.assert_allclose(p, ref, rtol=1e-10)
    assert abs(p.sum() - 1.0) < 1e-12


def test_toy_y_pmf_rows_normalized_and_gaussian_shaped():
    toy = small_toy()
    p = np.exp(toy.y_log_pmf())
    np.testing.assert_allclose(p.sum(axis=2), 1.0, atol=1e-12)
    # peak at a support value closest to the conditional mean (ties allowed)
    g, xi = 5, 2  # beta = 1.5, x = 2 -> mean 3.5
    mean = toy.beta0 + toy.beta_grid[g] * toy.x_support[xi]
    assert abs(toy.y_support[p[g, xi].argmax()] - mean) <= 0.5


def test_toy_mech_pmf_matches_mechanism_module():
    toy = small_toy(eps=0.5)
    deltas = np.arange(-6, 7)
    expected = [double_geometric_log_pmf(int(d), PrivacyBudget(0.5)) for d in deltas]
    np.testing.assert_allclose(toy.mech_log_pmf(deltas), expected, rtol=1e-12)


def test_grid_posterior_normalizes_and_single_point_case():
    toy = small_toy()
    obs, _ = toy_privatized_observation(toy, 0.5, stream(83, "obs"))
    masses = grid_posterior_oracle(toy, obs)
    assert masses.shape == toy.beta_grid.shape
    assert abs(masses.sum() - 1.0) < 1e-12

    single = DiscreteToy(
        beta_grid=np.array([0.7]),
        x_support=toy.x_support,
        y_support=toy.y_support,
        n=2,
        mechanism=dg_spec(0.5),
        beta0=0.5,
        sigma=1.2,
        lam=1.5,
    )
    np.testing.assert_array_equal(grid_posterior_oracle(single, obs), [1.0])


def test_grid_posterior_noise_free_limit_is_confidential_posterior():
    # at eps=40 the mechanism is numerically the identity, so the
    # posterior must match the direct prior-times-likelihood table
    toy = small_toy(eps=40.0)
    x_t = np.array([1, 3])
    y_t = np.array([2, 5])
    masses = grid_posterior_oracle(toy, (x_t, y_t))

    lpx = toy.x_log_pmf()
    lpy = toy.y_log_pmf()
    ix = np.searchsorted(toy.x_support, x_t)
    iy = np.searchsorted(toy.y_support, y_t)
    log_direct = toy.log_prior() + (lpx[ix][None, :] + lpy[:, ix, iy]).sum(axis=1)
    direct = np.exp(log_direct - log_direct.max())
    direct /= direct.sum()
    np.testing.assert_allclose(masses, direct, atol=1e-10)


def test_grid_and_mixture_oracles_agree():
    for sd in (84, 85, 86):
        toy, obs = random_toy(stream(sd, "pair"))
        a = grid_posterior_oracle(toy, obs)
        b = mixture_posterior_oracle(toy, obs)
        assert abs(b.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(a, b, atol=1e-8)


def test_oracles_reject_bad_observation_shape():
    toy = small_toy()
    with pytest.raises(ValueError):
        grid_posterior_oracle(toy, (np.array([1]), np.array([2, 3])))


def test_misreport_zero_discrepancy_when_budget_correct():
    for sd in (87, 88):
        toy, obs = random_toy(stream(sd, "mis0"))
        eps = toy.mechanism.budget.epsilon
        rep = misreported_mechanism_bias(toy, obs, eps, eps)
        assert abs(rep.discrepancy) < 1e-10
        assert rep.mean_true == rep.mean_assumed


def attenuation_toy():
    return DiscreteToy(
        beta_grid=np.linspace(0.0, 4.0, 9),
        x_support=np.arange(0, 15),
        y_support=np.arange(-12, 62),
        n=3,
        mechanism=dg_spec(0.7),
        beta0=0.0,
        sigma=1.0,
        lam=3.0,
    )


def test_misreport_face_value_attenuates_on_average():
    # prior grid centered at the generating slope 2, so prior shrinkage
    # cancels and the remaining face-value bias is pure attenuation;
    # measured over these seeds: avg true 2.083, avg face-value 1.718
    toy = attenuation_toy()
    t_means, a_means = [], []
    for r in range(60):
        (xt, yt), _ = toy_privatized_observation(toy, 2.0, stream(172, "dir", r))
        if not (np.isin(xt, toy.x_support).all() and np.isin(yt, toy.y_support).all()):
            continue
        rep = misreported_mechanism_bias(toy, (xt, yt), 0.7, math.inf)
        t_means.append(rep.mean_true)
        a_means.append(rep.mean_assumed)
    assert len(t_means) > 30
    assert np.mean(a_means) < np.mean(t_means) - 0.2
    assert np.mean(a_means) < 1.9


def test_misreport_prior_dominated_discrepancy_vanishes():
    weights = np.full(7, 1e-9)
    weights[3] = 1.0
    toy = small_toy(prior_weights=weights)
    obs, _ = toy_privatized_observation(toy, 0.5, stream(89, "mis-pm"))
    rep = misreported_mechanism_bias(toy, obs, 0.5, 2.0)
    assert abs(rep.discrepancy) < 1e-6


def test_misreport_argument_validation():
    toy = small_toy()
    obs = (np.array([1, 2]), np.array([0, 3]))
    with pytest.raises(ValueError):
        misreported_mechanism_bias(toy, obs, math.inf, 1.0)
    with pytest.raises(ValueError):
        misreported_mechanism_bias(toy, obs, 0.5, 0.0)


def test_misreport_face_value_needs_in_support_release():
    toy = small_toy()
    out = (np.array([-7, 1]), np.array([0, 3]))  # x outside the support
    with pytest.raises(ValueError):
        misreported_mechanism_bias(toy, out, 0.5, math.inf)


def test_abc_exact_point_mass_prior_accepts_at_mode():
    # prior concentrated on the generating point and a release equal to
    # the noise-free data makes the acceptance probability 1 whenever the
    # proposal reproduces the confidential draw
    prior = PriorSpec("uniform_box", bounds=((2.0, 2.0), (0.5, 0.5)))
    spec = MechanismSpec(Family.LAPLACE, 1.0, PrivacyBudget(1.0))
    priv = PrivatizedDataset(
        x_tilde=np.zeros(3), y_tilde=np.full(3, 2.0), spec_x=spec, spec_y=spec,
        parent_seed=0,
    )
    res = abc_exact_posterior(
        priv, prior, 200, stream(90, "abc-pm"), lam=0.01, sigma=1e-9,
        batch_size=2000,
    )
    assert res.samples.shape == (200, 2)
    assert np.all(res.samples == [2.0, 0.5])
    assert res.acceptance_rate > 0.9


def test_abc_toy_posterior_matches_oracle():
    toy = small_toy()
    obs, _ = toy_privatized_observation(toy, 0.5, stream(160, "tv"))
    oracle = grid_posterior_oracle(toy, obs)
    res = abc_toy_posterior(toy, obs, 20000, stream(160, "tv-abc"))
    hist = np.array([(res.samples == b).mean() for b in toy.beta_grid])
    tv = 0.5 * np.abs(hist - oracle).sum()
    assert tv < 0.02
    assert res.samples.shape == (20000,)
    assert np.isin(res.samples, toy.beta_grid).all()
    assert res.proposals >= 20000
    assert 0.0 < res.acceptance_rate <= 1.0


def test_abc_se_halves_when_draws_double():
    toy = small_toy()
    obs, _ = toy_privatized_observation(toy, 0.5, stream(91, "se"))
    r1 = abc_toy_posterior(toy, obs, 5000, stream(91, "se-a"))
    r2 = abc_toy_posterior(toy, obs, 10000, stream(91, "se-b"))
    se1 = r1.samples.std(ddof=1) / math.sqrt(r1.samples.size)
    se2 = r2.samples.std(ddof=1) / math.sqrt(r2.samples.size)
    assert math.sqrt(2.0) / 1.5 < se1 / se2 < math.sqrt(2.0) * 1.5


def test_abc_infeasible_prior_raises():
    prior = PriorSpec("uniform_box", bounds=((1000.0, 1001.0), (0.0, 0.0)))
    spec = MechanismSpec(Family.LAPLACE, 1.0, PrivacyBudget(50.0))
    priv = PrivatizedDataset(
        x_tilde=np.array([1.0]), y_tilde=np.array([0.0]), spec_x=spec, spec_y=spec,
        parent_seed=0,
    )
    with pytest.raises(InfeasibleABCError):
        abc_exact_posterior(
            priv, prior, 5, stream(7, "inf"), lam=1.0, sigma=0.5,
            batch_size=1_000_000,
        )


def test_abc_argument_validation():
    toy = small_toy()
    obs, _ = toy_privatized_observation(toy, 0.5, stream(92, "val"))
    with pytest.raises(ValueError):
        abc_toy_posterior(toy, obs, 0, stream(92, "val-a"))
    prior = PriorSpec("uniform_box", bounds=((0.0, 1.0), (0.0, 1.0)))
    spec = MechanismSpec(Family.LAPLACE, 1.0, PrivacyBudget(1.0))
    priv = PrivatizedDataset(
        x_tilde=np.array([1.0]), y_tilde=np.array([0.0]), spec_x=spec, spec_y=spec,
        parent_seed=0,
    )
    with pytest.raises(ValueError):
        abc_exact_posterior(priv, prior, 0, stream(92, "val-b"), lam=1.0, sigma=1.0)
    with pytest.raises(ValueError):
        abc_exact_posterior(
            priv, prior, 5, stream(92, "val-c"), lam=1.0, sigma=1.0, batch_size=0
        )


def test_abc_deterministic_per_stream():
    toy = small_toy()
    obs, _ = toy_privatized_observation(toy, 0.5, stream(93, "det"))
    a = abc_toy_posterior(toy, obs, 2000, stream(93, "det-a"))
    b = abc_toy_posterior(toy, obs, 2000, stream(93, "det-a"))
    np.testing.assert_array_equal(a.samples, b.samples)
    assert a.proposals == b.proposals


def test_toy_privatized_observation_requires_grid_beta():
    toy = small_toy()
    with pytest.raises(ValueError):
        toy_privatized_observation(toy, 0.123, stream(94, "grid"))


def test_posterior_fit_summary():
    rng = stream(95, "fit")
    samples = rng.normal([1.0, 2.0], [0.1, 0.2], (5000, 2))
    fit = posterior_fit(samples, n=7, sigma_sq=4.0)
    assert fit.method == "abc"
    assert fit.n == 7
    assert fit.residual_variance == 4.0
    assert fit.beta0_hat == pytest.approx(samples[:, 0].mean())
    assert fit.beta1_hat == pytest.approx(samples[:, 1].mean())
    np.testing.assert_allclose(fit.covariance, np.cov(samples.T), rtol=1e-10)
    with pytest.raises(ValueError):
        posterior_fit(samples[:1], n=7, sigma_sq=4.0)
    with pytest.raises(ValueError):
        posterior_fit(samples[:, :1], n=7, sigma_sq=4.0)


def test_samples_csv_round_trip():
    samples = np.array([[0.5, -1.25], [2.0, 3.5]])
    lines = samples_to_csv(samples).splitlines()
    assert lines[0] == "draw,beta0,beta1"
    assert lines[1].split(",") == ["0", "0.5", "-1.25"]
    assert float(lines[2].split(",")[2]) == 3.5


def test_table_csv_round_trip():
    lines = table_to_csv(np.array([0.1, 0.2]), np.array([0.25, 0.75])).splitlines()
    assert lines[0] == "beta,mass"
    assert [float(v) for v in lines[1].split(",")] == [0.1, 0.25]
    assert [float(v) for v in lines[2].split(",")] == [0.2, 0.75]
