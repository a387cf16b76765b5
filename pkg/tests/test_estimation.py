import numpy as np
import pytest

from gmed.data import Dataset, ModelConfig
from gmed.estimation import (
    bootstrap_variance,
    fit_nuisance_bias_reduced,
    fit_nuisance_ml,
    g_estimate,
    x_bar_oracle,
)
from gmed.exceptions import TooManyFailures, ZeroResidualVariance
from gmed.linalg import expit, weighted_least_squares
from gmed.moments import TargetParams, g_moments

CFG_BR = ModelConfig("bernoulli-logit", False, "bias-reduced")
CFG_ML = ModelConfig("bernoulli-logit", False, "maximum-likelihood")
CFG_GAUSS = ModelConfig("gaussian-identity", False, "maximum-likelihood")


def dgp_a(seed, n, beta=(0.8, 0.5, 0.3)):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=n)
    x = (rng.uniform(size=n) < expit(z)).astype(float)
    m = beta[0] * x + z + rng.normal(size=n)
    y = beta[1] * m + beta[2] * x + z + rng.normal(size=n)
    return Dataset.build(y, m, x, z)


# --- nuisance fitting -------------------------------------------------------


def test_ml_nuisance_exact_linear_recovery():
    rng = np.random.default_rng(0)
    n = 60
    z = np.column_stack([np.ones(n), rng.normal(size=n)])
    x = rng.binomial(1, 0.5, n).astype(float)
    coef = np.array([0.4, -1.1])
    m = 0.9 * x + z @ coef  # exact, no noise
    y = rng.normal(size=n)
    ds = Dataset(outcome=y, mediator=m, exposure=x, confounders=z, weights=np.ones(n))
    gamma = fit_nuisance_ml(ds, TargetParams(0.9, 0.0, 0.0), CFG_BR)
    assert gamma.gamma_m1 == pytest.approx(coef, abs=1e-10)
    assert gamma.gamma_m2 == pytest.approx(coef, abs=1e-10)


def test_ml_nuisance_beta_zero_is_plain_wls():
    ds = dgp_a(1, 200)
    gamma = fit_nuisance_ml(ds, TargetParams(0.0, 0.0, 0.0), CFG_BR)
    direct = weighted_least_squares(ds.confounders, ds.mediator, ds.weights)
    assert gamma.gamma_m2 == pytest.approx(direct.coefficients, abs=1e-12)


def test_ml_nuisance_matches_normal_equation_oracle():
    ds = dgp_a(2, 150)
    beta = TargetParams(0.7, 0.4, 0.2)
    gamma = fit_nuisance_ml(ds, beta, CFG_BR)
    z, w = ds.confounders, ds.weights
    gram = z.T @ (z * w[:, None])
    target = ds.outcome - beta.beta2 * ds.mediator - beta.beta3 * ds.exposure
    oracle = np.linalg.solve(gram, z.T @ (w * target))
    assert gamma.gamma_y1 == pytest.approx(oracle, abs=1e-10)


def test_ml_copies_alias():
    ds = dgp_a(3, 120)
    gamma = fit_nuisance_ml(ds, TargetParams(0.1, 0.2, 0.3), CFG_BR)
    assert np.array_equal(gamma.gamma_m1, gamma.gamma_m2)
    assert np.array_equal(gamma.gamma_y1, gamma.gamma_y2)
    assert np.array_equal(gamma.gamma_x1, gamma.gamma_x2)


def test_bias_reduced_orthogonality_residual():
    ds = dgp_a(4, 300)
    beta = TargetParams(0.5, 0.2, 0.1)
    gamma = fit_nuisance_bias_reduced(ds, beta, CFG_BR)
    ev = g_moments(ds, beta, gamma, CFG_BR)
    assert np.max(np.abs(ev.dU_dgamma)) <= 1e-8


def test_bias_reduced_equals_ml_for_identity_link():
    rng = np.random.default_rng(5)
    n = 500
    z = rng.normal(size=n)
    x = z + rng.normal(size=n)
    m = 0.5 * x + z + rng.normal(size=n)
    y = 0.3 * m + 0.2 * x + z + rng.normal(size=n)
    ds = Dataset.build(y, m, x, z)
    beta = TargetParams(0.5, 0.3, 0.2)
    cfg = ModelConfig("gaussian-identity", False, "bias-reduced")
    br = fit_nuisance_bias_reduced(ds, beta, cfg)
    ml = fit_nuisance_ml(ds, beta, cfg)
    # the identity link makes the slope weights constant: same fits exactly
    assert br.gamma_m1 == pytest.approx(ml.gamma_m2, abs=1e-12)
    assert br.gamma_y2 == pytest.approx(ml.gamma_y1, abs=1e-12)


def test_bias_reduced_intercept_only_matches_hand_algebra():
    rng = np.random.default_rng(6)
    n = 80
    x = rng.binomial(1, 0.55, n).astype(float)
    m = 0.4 * x + rng.normal(size=n)
    y = 0.6 * m + 0.2 * x + rng.normal(size=n)
    ds = Dataset.build(y, m, x, None)  # intercept-only confounders
    beta = TargetParams(0.4, 0.6, 0.2)
    gamma = fit_nuisance_bias_reduced(ds, beta, CFG_BR)
    # intercept-only logit score: gx = logit(mean x); the slope weight is
    # then constant so every block is a plain sample mean
    xbar = x.mean()
    assert gamma.gamma_x1 == pytest.approx([np.log(xbar / (1 - xbar))], abs=1e-8)
    assert gamma.gamma_m1 == pytest.approx([np.mean(m - 0.4 * x)], abs=1e-10)
    assert gamma.gamma_m2 == pytest.approx([np.mean(m - 0.4 * x)], abs=1e-10)
    assert gamma.gamma_y1 == pytest.approx([np.mean(y - 0.6 * m - 0.2 * x)], abs=1e-10)

    # the joint fit then reduces to weighted-covariance algebra
    est = g_estimate(ds, CFG_BR)
    ex = x - xbar_hat(est)
    b1_oracle = np.mean(ex * m) / np.mean(ex * x)
    assert est.beta_hat.beta1 == pytest.approx(b1_oracle, abs=1e-8)


def xbar_hat(est):
    return expit(est.gamma_hat.gamma_x1[0])


# --- joint estimation -------------------------------------------------------


def test_g_estimate_roots_and_orthogonality_at_fit():
    ds = dgp_a(7, 400)
    est = g_estimate(ds, CFG_BR)
    ev = est.moment_eval
    assert np.max(np.abs(ev.U_bar)) <= 1e-8
    assert np.max(np.abs(ev.dU_dgamma)) <= 1e-8
    assert est.solver_report.converged


def test_g_estimate_matches_ols_for_identity_link():
    # with a gaussian exposure model and ML nuisances the moment roots
    # coincide with the OLS product/coefficient estimates (FWL algebra)
    rng = np.random.default_rng(8)
    n = 300
    z = rng.normal(size=n)
    x = 0.5 * z + rng.normal(size=n)
    m = 0.8 * x + z + rng.normal(size=n)
    y = 0.5 * m + 0.3 * x + z + rng.normal(size=n)
    ds = Dataset.build(y, m, x, z)
    est = g_estimate(ds, CFG_GAUSS)
    zfull = ds.confounders
    ols_m = weighted_least_squares(np.column_stack([x, zfull]), m)
    ols_y = weighted_least_squares(np.column_stack([m, x, zfull]), y)
    assert est.beta_hat.beta1 == pytest.approx(ols_m.coefficients[0], abs=1e-6)
    assert est.beta_hat.beta2 == pytest.approx(ols_y.coefficients[0], abs=1e-6)
    assert est.beta_hat.beta3 == pytest.approx(ols_y.coefficients[1], abs=1e-6)


def test_g_estimate_equivariance_outcome_shift():
    ds = dgp_a(9, 250)
    est = g_estimate(ds, CFG_BR)
    shifted = Dataset(
        outcome=ds.outcome + 5.0,
        mediator=ds.mediator,
        exposure=ds.exposure,
        confounders=ds.confounders,
        weights=ds.weights,
    )
    est2 = g_estimate(shifted, CFG_BR)
    assert est2.beta_hat.as_vector() == pytest.approx(est.beta_hat.as_vector(), abs=1e-8)
    # only the outcome-model intercepts move
    assert est2.gamma_hat.gamma_y1[0] == pytest.approx(est.gamma_hat.gamma_y1[0] + 5.0, abs=1e-8)
    assert est2.gamma_hat.gamma_m1 == pytest.approx(est.gamma_hat.gamma_m1, abs=1e-8)


def test_g_estimate_equivariance_mediator_shift():
    ds = dgp_a(10, 250)
    est = g_estimate(ds, CFG_BR)
    shifted = Dataset(
        outcome=ds.outcome,
        mediator=ds.mediator + 3.0,
        exposure=ds.exposure,
        confounders=ds.confounders,
        weights=ds.weights,
    )
    est2 = g_estimate(shifted, CFG_BR)
    assert est2.beta_hat.as_vector() == pytest.approx(est.beta_hat.as_vector(), abs=1e-8)
    assert est2.gamma_hat.gamma_m2[0] == pytest.approx(est.gamma_hat.gamma_m2[0] + 3.0, abs=1e-8)
    # outcome intercept absorbs -beta2 * shift
    assert est2.gamma_hat.gamma_y1[0] == pytest.approx(
        est.gamma_hat.gamma_y1[0] - 3.0 * est.beta_hat.beta2, abs=1e-8
    )


def test_influence_rows_mean_zero_and_se_recompute():
    ds = dgp_a(11, 350)
    for cfg in (CFG_BR, CFG_ML):
        est = g_estimate(ds, cfg)
        w = ds.weights
        col_means = w @ est.influence_rows / w.sum()
        assert np.max(np.abs(col_means)) <= 1e-8
        assert est.nide == est.beta_hat.beta1 * est.beta_hat.beta2
        omega = (
            est.beta_hat.beta1 * est.influence_rows[:, 1]
            + est.beta_hat.beta2 * est.influence_rows[:, 0]
        )
        expected = np.sqrt(np.dot(w, omega**2) / w.sum() / ds.n)
        assert est.nide_se == pytest.approx(expected, rel=1e-12)
        assert est.nde_se == pytest.approx(np.sqrt(est.beta_cov[2, 2]), rel=1e-12)


def test_near_singular_nide_flag():
    # crafted orthogonal patterns make both estimates exactly zero, so the
    # flag (both |t| < 0.1) must fire; a strong-signal fit must not flag
    x = np.array([1.0, 1, 0, 0, 1, 1, 0, 0])
    m = np.array([1.0, -1, 1, -1, -1, 1, -1, 1])
    y = np.array([1.0, 1, -1, -1, -1, -1, 1, 1])
    ds = Dataset.build(y, m, x, None)
    est = g_estimate(ds, CFG_BR)
    assert est.beta_hat.beta1 == pytest.approx(0.0, abs=1e-12)
    assert est.beta_hat.beta2 == pytest.approx(0.0, abs=1e-12)
    assert est.near_singular_nide
    strong = g_estimate(dgp_a(13, 800, beta=(1.0, 1.0, 1.0)), CFG_BR)
    assert not strong.near_singular_nide


def test_interaction_fit_recovers_truth():
    rng = np.random.default_rng(14)
    n = 4000
    z = rng.normal(size=n)
    x = (rng.uniform(size=n) < expit(z)).astype(float)
    m = 1.0 * x + z + rng.normal(size=n)
    y = 1.0 * m + 0.5 * x * m + 1.0 * x + z + rng.normal(size=n)
    ds = Dataset.build(y, m, x, z)
    for strategy in ("bias-reduced", "maximum-likelihood"):
        cfg = ModelConfig("bernoulli-logit", True, strategy)
        est = g_estimate(ds, cfg)
        truth = np.array([1.0, 1.0, 1.0, 0.5])
        err = np.abs(est.beta_hat.as_vector() - truth) / est.beta_se
        assert np.all(err < 4.0)
        assert np.max(np.abs(est.moment_eval.U_bar)) <= 1e-8
        w = ds.weights
        col_means = w @ est.influence_rows / w.sum()
        assert np.max(np.abs(col_means)) <= 1e-8


# --- bootstrap --------------------------------------------------------------


def test_bootstrap_deterministic():
    ds = dgp_a(15, 120)
    rep1 = bootstrap_variance(ds, CFG_BR, replicates=120, seed=3)
    rep2 = bootstrap_variance(ds, CFG_BR, replicates=120, seed=3)
    assert rep1.nide_se_boot == rep2.nide_se_boot
    assert rep1.nde_se_boot == rep2.nde_se_boot
    assert np.array_equal(rep1.beta_draws, rep2.beta_draws)


def test_bootstrap_close_to_influence_se():
    ds = dgp_a(16, 500)
    est = g_estimate(ds, CFG_BR)
    boot = bootstrap_variance(ds, CFG_BR, replicates=400, seed=1)
    assert boot.failures == 0
    assert abs(boot.nide_se_boot - est.nide_se) / est.nide_se < 0.15
    assert abs(boot.nde_se_boot - est.nde_se) / est.nde_se < 0.15


def test_bootstrap_identical_rows_is_degenerate():
    # a dataset of one repeated row has constant exposure, so the moment
    # Jacobian is singular on every resample: the bootstrap reports the
    # failures rather than fabricating a spread
    base = dgp_a(17, 8)
    tiled = base.replace_rows(np.zeros(8, dtype=int))
    with pytest.raises(TooManyFailures) as err:
        bootstrap_variance(tiled, CFG_BR, replicates=100, seed=4)
    assert err.value.failures == 100


def test_bootstrap_too_many_failures():
    rng = np.random.default_rng(19)
    n = 9
    z = rng.normal(size=n)
    x = np.zeros(n)
    x[0] = 1.0  # resamples often drop the single treated row -> separation
    m = z + rng.normal(size=n)
    y = m + z + rng.normal(size=n)
    ds = Dataset.build(y, m, x, z)
    with pytest.raises(TooManyFailures):
        bootstrap_variance(ds, CFG_BR, replicates=200, seed=0)


def test_bootstrap_requires_100_replicates():
    ds = dgp_a(20, 100)
    with pytest.raises(ValueError):
        bootstrap_variance(ds, CFG_BR, replicates=50, seed=0)


# --- x-bar oracle -----------------------------------------------------------


def test_x_bar_homoscedastic_residuals():
    # residuals of constant magnitude: the variance factor cancels and the
    # weighted average of X remains
    x = np.array([0.0, 1, 1, 0, 1, 0, 1, 1])
    m = 2.0 + np.array([0.5, -0.5] * 4)
    ds = Dataset.build(np.zeros(8), m, x, None)
    value = x_bar_oracle(ds, beta1=0.0, gamma_m=np.array([2.0]))
    assert value == pytest.approx(x.mean())


def test_x_bar_constant_exposure():
    x = np.full(8, 3.0)
    rng = np.random.default_rng(21)
    m = rng.normal(size=8)
    ds = Dataset.build(np.zeros(8), m, x, None)
    assert x_bar_oracle(ds, beta1=0.0, gamma_m=np.array([0.0])) == pytest.approx(3.0)


def test_x_bar_zero_residuals():
    x = np.array([0.0, 1, 0, 1, 0, 1])
    m = 0.5 * x + 1.0
    ds = Dataset.build(np.zeros(6), m, x, None)
    with pytest.raises(ZeroResidualVariance):
        x_bar_oracle(ds, beta1=0.5, gamma_m=np.array([1.0]))
