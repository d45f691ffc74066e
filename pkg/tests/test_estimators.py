import csv

import numpy as np
import pytest

from libreparam import estimators
from libreparam.dists import BetaParams, GammaParams
from libreparam.enums import EstimatorKinds, Families, TransformKinds
from libreparam.estimators import EstimatorConfig, Factor
from libreparam.randkit import RngState
from tests.conftest import does_not_raise


@pytest.fixture(scope="function")
def gamma_factors():
    return [Factor("z", Families.GAMMA, GammaParams(shape=2.0, rate=3.0), TransformKinds.GAMMA_STD)]


@pytest.fixture(scope="function")
def beta_factors():
    return [Factor("z", Families.BETA, BetaParams(alpha=3.0, beta=2.0), TransformKinds.BETA_LOGIT_STDDEV)]


def _assert_unbiased(estimates, expected, sigmas=5.0):
    mean = estimates.mean(axis=0)
    standard_error = estimates.std(axis=0, ddof=1) / np.sqrt(estimates.shape[0])
    assert np.all(np.abs(mean - expected) < sigmas * standard_error + 1e-9)


@pytest.mark.parametrize(
    "transform,params,raises",
    [
        (TransformKinds.GAMMA_STD, GammaParams(shape=1.0, rate=1.0), does_not_raise()),
        (TransformKinds.IDENTITY, GammaParams(shape=1.0, rate=1.0), does_not_raise()),
        (TransformKinds.BETA_LOGIT_STDDEV, GammaParams(shape=1.0, rate=1.0), pytest.raises(ValueError)),
        (TransformKinds.GAMMA_STD, BetaParams(alpha=1.0, beta=1.0), pytest.raises(TypeError)),
    ],
)
def test_factor_validation(transform, params, raises):
    # Act & Assert
    with raises:
        Factor("z", Families.GAMMA, params, transform)


@pytest.mark.parametrize(
    "options,raises",
    [
        ({}, does_not_raise()),
        ({"n_samples": 0}, pytest.raises(ValueError)),
        ({"kind": EstimatorKinds.SCORE_FUNCTION_CV, "cv_samples": 1}, pytest.raises(ValueError)),
        ({"kind": EstimatorKinds.SCORE_FUNCTION, "cv_samples": 1}, does_not_raise()),
        ({"entropy": "exact"}, pytest.raises(ValueError)),
        ({"kind": "grep"}, pytest.raises(TypeError)),
    ],
)
def test_estimator_config(options, raises):
    # Act & Assert
    with raises:
        EstimatorConfig(**options)


@pytest.mark.parametrize(
    "config",
    [
        EstimatorConfig(kind=EstimatorKinds.GREP, n_samples=1),
        EstimatorConfig(kind=EstimatorKinds.GREP, n_samples=1, entropy="mc"),
        EstimatorConfig(kind=EstimatorKinds.SCORE_FUNCTION, n_samples=4),
        EstimatorConfig(kind=EstimatorKinds.SCORE_FUNCTION_CV, n_samples=4, cv_samples=10),
    ],
)
def test_gamma_toy_estimators_are_unbiased(gamma_toy, gamma_factors, rng, config):
    # Arrange
    expected = gamma_toy.analytic_elbo_grad(gamma_factors[0].params)

    # Act
    estimates, names = estimators.sample_estimates(gamma_toy, gamma_factors, config, 4000, rng)

    # Assert
    assert names == ["z.shape", "z.rate"]
    _assert_unbiased(estimates, np.array([expected["shape"], expected["rate"]]))


def test_beta_toy_grep_is_unbiased(beta_toy, beta_factors, rng):
    # Arrange
    expected = beta_toy.analytic_elbo_grad(beta_factors[0].params)
    config = EstimatorConfig(kind=EstimatorKinds.GREP, n_samples=1)

    # Act
    estimates, _ = estimators.sample_estimates(beta_toy, beta_factors, config, 4000, rng)

    # Assert
    _assert_unbiased(estimates, np.array([expected["alpha"], expected["beta"]]))


def test_grad_grep_breakdown(gamma_toy, gamma_factors, rng):
    # Act
    estimate = estimators.grad_grep(gamma_toy, gamma_factors, 10, rng)

    # Assert
    assert estimate.kind is EstimatorKinds.GREP
    assert not estimate.biased
    for name in ("shape", "rate"):
        total = sum(estimate.breakdown[part]["z"][name] for part in ("g_rep", "g_corr", "entropy"))
        assert float(estimate.values["z"][name]) == pytest.approx(float(total))
    assert estimate.flatten().shape == (2,)
    assert estimate.norm() == pytest.approx(float(np.linalg.norm(estimate.flatten())))


def test_identity_transform_recovers_score_function(gamma_toy, rng):
    # Arrange
    factors = [Factor("z", Families.GAMMA, GammaParams(shape=2.0, rate=3.0), TransformKinds.IDENTITY)]

    # Act
    terms = estimators.grep_terms(gamma_toy, factors, 20, rng)

    # Assert
    for name in ("shape", "rate"):
        np.testing.assert_array_equal(terms.g_rep["z"][name], 0.0)
        np.testing.assert_allclose(terms.g_corr["z"][name], terms.score["z"][name])


def test_adaptive_beta_is_flagged_biased(beta_toy, rng):
    # Arrange
    factors = [Factor("z", Families.BETA, BetaParams(alpha=3.0, beta=2.0), TransformKinds.BETA_LOGIT_ADAPTIVE)]

    # Act
    estimate = estimators.grad_grep(beta_toy, factors, 5, rng)

    # Assert
    assert estimate.biased
    np.testing.assert_allclose(estimate.breakdown["g_corr"]["z"]["alpha"], 0.0, atol=1e-8)


def test_grep_variance_below_score_function(gamma_toy, gamma_factors, rng):
    # Arrange
    grep = EstimatorConfig(kind=EstimatorKinds.GREP, n_samples=1)
    score = EstimatorConfig(kind=EstimatorKinds.SCORE_FUNCTION, n_samples=1)

    # Act
    grep_report = estimators.estimator_variance(gamma_toy, gamma_factors, grep, 1000, rng)
    score_report = estimators.estimator_variance(gamma_toy, gamma_factors, score, 1000, rng)

    # Assert
    assert grep_report.mean_variance < score_report.mean_variance
    assert grep_report.trials == 1000
    assert grep_report.components == ["z.shape", "z.rate"]


@pytest.mark.parametrize("n_samples", [2, 5, 10, 20])
def test_variance_shrinks_with_sample_count(gamma_toy, gamma_factors, n_samples):
    # Arrange
    rng = RngState.from_seed(8128)
    single = EstimatorConfig(kind=EstimatorKinds.GREP, n_samples=1)
    averaged = EstimatorConfig(kind=EstimatorKinds.GREP, n_samples=n_samples)

    # Act
    single_report = estimators.estimator_variance(gamma_toy, gamma_factors, single, 2000, rng.substream("single"))
    averaged_report = estimators.estimator_variance(gamma_toy, gamma_factors, averaged, 2000, rng.substream("averaged"))

    # Assert
    ratio = averaged_report.variances / (single_report.variances / n_samples)
    assert np.all(ratio > 0.5)
    assert np.all(ratio < 2.0)


def test_gamma_rate_correction_vanishes(gamma_toy, gamma_factors, rng):
    # Act
    terms = estimators.grep_terms(gamma_toy, gamma_factors, 5000, rng)

    # Assert
    correction = np.asarray(terms.g_corr["z"]["rate"])
    assert correction.shape == (5000,)
    assert np.all(np.abs(correction) <= 1e-12 * (1.0 + np.abs(terms.f)))
    assert np.any(np.abs(terms.g_corr["z"]["shape"]) > 1e-6)


def test_variance_needs_100_trials(gamma_toy, gamma_factors, rng):
    # Act & Assert
    with pytest.raises(ValueError):
        estimators.estimator_variance(gamma_toy, gamma_factors, EstimatorConfig(), 99, rng)


def test_control_variate_coefficients():
    # Arrange
    scores = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0], [-2.0, 0.0]])
    weighted = 3.0 * scores + 5.0

    # Act
    coefficients = estimators.control_variate_coefficients(weighted, scores)

    # Assert
    np.testing.assert_allclose(coefficients, [3.0, 0.0])


@pytest.mark.parametrize("n_samples,cv_samples", [(0, 0), (1, 1), (1, -2)])
def test_grad_score_function_arguments(gamma_toy, gamma_factors, rng, n_samples, cv_samples):
    # Act & Assert
    with pytest.raises(ValueError):
        estimators.grad_score_function(gamma_toy, gamma_factors, n_samples, cv_samples, rng)


def test_estimate_gradient_dispatch(gamma_toy, gamma_factors, rng):
    # Act
    plain = estimators.estimate_gradient(
        gamma_toy, gamma_factors, EstimatorConfig(kind=EstimatorKinds.SCORE_FUNCTION, n_samples=3), rng
    )
    controlled = estimators.estimate_gradient(
        gamma_toy, gamma_factors, EstimatorConfig(kind=EstimatorKinds.SCORE_FUNCTION_CV, n_samples=3), rng
    )

    # Assert
    assert plain.kind is EstimatorKinds.SCORE_FUNCTION
    assert controlled.kind is EstimatorKinds.SCORE_FUNCTION_CV
    np.testing.assert_array_equal(plain.breakdown["g_rep"]["z"]["shape"], 0.0)


@pytest.mark.parametrize("entropy", ["analytic", "mc"])
def test_elbo_estimate(gamma_toy, gamma_factors, rng, entropy):
    # Act
    elbo = estimators.elbo_estimate(gamma_toy, gamma_factors, 50000, rng, entropy)

    # Assert
    assert elbo == pytest.approx(gamma_toy.analytic_elbo(gamma_factors[0].params), abs=0.1)


def test_elbo_at_posterior_equals_marginal_likelihood(gamma_toy):
    # Act
    elbo = gamma_toy.analytic_elbo(gamma_toy.posterior())

    # Assert
    assert elbo == pytest.approx(gamma_toy.log_marginal_likelihood(), abs=1e-10)


def test_draw_latents(gamma_factors, beta_factors, rng):
    # Act
    gamma_draws = estimators.draw_latents(gamma_factors, 1000, rng)
    beta_draws = estimators.draw_latents(beta_factors, 1000, rng)

    # Assert
    assert gamma_draws["z"].shape == (1000,)
    assert np.all(gamma_draws["z"] > 0.0)
    assert np.all((beta_draws["z"] > 0.0) & (beta_draws["z"] < 1.0))


def test_component_names():
    # Arrange
    gradient = {"w": {"shape": np.zeros((2, 1)), "rate": np.zeros((2, 1))}, "z": {"alpha": np.float64(0.0)}}

    # Act
    names = estimators.component_names(gradient)

    # Assert
    assert names == ["w.shape[0,0]", "w.shape[1,0]", "w.rate[0,0]", "w.rate[1,0]", "z.alpha"]


def test_write_variance_csv(gamma_toy, gamma_factors, rng, tmp_path):
    # Arrange
    report = estimators.estimator_variance(gamma_toy, gamma_factors, EstimatorConfig(), 100, rng, label="grep-1")
    target = tmp_path / "variance.csv"

    # Act
    estimators.write_variance_csv([report], str(target))

    # Assert
    with open(target, newline="") as csv_file:
        rows = list(csv.DictReader(csv_file))
    assert list(rows[0]) == list(estimators.VARIANCE_CSV_COLUMNS)
    assert [row["component"] for row in rows] == ["z.shape", "z.rate"]
    assert {row["estimator"] for row in rows} == {"grep-1"}
    assert float(rows[0]["variance"]) == pytest.approx(float(report.variances[0]))
