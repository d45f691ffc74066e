import csv

import numpy as np
import pytest

from libreparam import trainer
from libreparam.dists import BetaParams, DirichletParams, GammaParams, LogNormalParams
from libreparam.enums import EstimatorKinds, Families, TransformKinds
from libreparam.estimators import EstimatorConfig, Factor
from libreparam.exceptions import DomainError, NumericalError, TrainingAborted
from libreparam.randkit import RngState
from libreparam.trainer import StepSizeState, TrainTrace
from tests.conftest import does_not_raise


def test_step_size_sequence():
    # Arrange
    state = StepSizeState(eta=1.0)
    gradients = [1.0, 2.0, 0.0, 0.0, 1.0]

    # Act
    history = []
    rates = []
    for gradient in gradients:
        rho, state = trainer.step_size(state, np.array([gradient]))
        history.append(float(state.s[0]))
        rates.append(float(rho[0]))

    # Assert
    np.testing.assert_allclose(history, [1.0, 1.3, 1.17, 1.053, 1.0477], rtol=1e-12)
    assert rates[0] == pytest.approx(0.5)
    assert rates[1] == pytest.approx(2 ** (-0.5 + 1e-16) / (1.0 + np.sqrt(1.3)))
    assert state.iteration == 5


@pytest.mark.parametrize(
    "options,raises",
    [
        ({"eta": 0.1}, does_not_raise()),
        ({"eta": 0.0}, pytest.raises(ValueError)),
        ({"tau": -1.0}, pytest.raises(ValueError)),
        ({"gamma": float("nan")}, pytest.raises(ValueError)),
    ],
)
def test_step_size_state(options, raises):
    # Act & Assert
    with raises:
        StepSizeState(**options)


def test_step_size_rejects_non_finite_gradient():
    # Act & Assert
    with pytest.raises(NumericalError):
        trainer.step_size(StepSizeState(), np.array([1.0, np.inf]))


def test_softplus_round_trip():
    # Arrange
    values = np.array([1e-8, 0.3, 1.0, 25.0, 800.0])

    # Act
    result = trainer.constrain(trainer.unconstrain(values))

    # Assert
    np.testing.assert_allclose(result, values, rtol=1e-10)
    with pytest.raises(DomainError):
        trainer.unconstrain(0.0)


def test_chain_grad():
    # Arrange
    unconstrained = np.array([-1.0, 0.5, 2.0])
    step = 1e-6

    # Act
    result = trainer.chain_grad(np.ones(3), unconstrained)

    # Assert
    expected = (trainer.constrain(unconstrained + step) - trainer.constrain(unconstrained - step)) / (2.0 * step)
    np.testing.assert_allclose(result, expected, rtol=1e-8)


def test_gamma_shape_mean_chain(gamma_toy):
    # Arrange
    shape, mean = 2.0, 0.5
    step = 1e-6
    gradient = gamma_toy.analytic_elbo_grad(GammaParams(shape=shape, rate=shape / mean))

    def elbo(a, m):
        return gamma_toy.analytic_elbo(GammaParams(shape=a, rate=a / m))

    # Act
    grad_shape, grad_mean = trainer.gamma_shape_mean_chain(gradient["shape"], gradient["rate"], shape, mean)

    # Assert
    expected_shape = (elbo(shape + step, mean) - elbo(shape - step, mean)) / (2 * step)
    expected_mean = (elbo(shape, mean + step) - elbo(shape, mean - step)) / (2 * step)
    assert float(grad_shape) == pytest.approx(expected_shape, rel=1e-6)
    assert float(grad_mean) == pytest.approx(expected_mean, rel=1e-6)


def test_trace(tmp_path):
    # Arrange
    trace = TrainTrace()
    for iteration, elbo in enumerate([1.0, 2.0, 3.0, 4.0], start=1):
        trace.append(iteration, elbo, 0.5, 0.0)
    target = tmp_path / "trace.csv"

    # Act
    trace.to_csv(str(target))

    # Assert
    np.testing.assert_allclose(trace.smoothed_elbo(2), [1.0, 1.5, 2.5, 3.5])
    assert trace.tail_mean(0.5) == pytest.approx(3.5)
    with open(target, newline="") as csv_file:
        rows = list(csv.reader(csv_file))
    assert rows[0] == list(trainer.TRACE_COLUMNS)
    assert rows[1] == ["1", "1.0", "0.5", "0.0"]
    with pytest.raises(ValueError):
        trace.append(4, 5.0, 0.5, 0.0)


def test_empty_trace():
    # Act
    trace = TrainTrace()

    # Assert
    assert len(trace) == 0
    assert trace.tail_mean() == float("-inf")
    assert trace.smoothed_elbo().size == 0


def test_fit_zero_iterations(gamma_toy, rng):
    # Arrange
    factors = gamma_toy.initial_factors()

    # Act
    result = trainer.fit(gamma_toy, factors, EstimatorConfig(), 0, rng)

    # Assert
    assert len(result.trace) == 0
    assert result.factors[0] is factors[0]


def test_fit_gamma_toy_reaches_posterior(gamma_toy, rng):
    # Arrange
    factors = gamma_toy.initial_factors()
    config = EstimatorConfig(kind=EstimatorKinds.GREP, n_samples=1)

    # Act
    result = trainer.fit(gamma_toy, factors, config, 2000, rng, eta=0.5)

    # Assert
    params = result.factors[0].params
    assert float(params.shape) == pytest.approx(6.0, rel=0.1)
    assert float(params.shape / params.rate) == pytest.approx(1.0, rel=0.1)
    assert len(result.trace) == 2000
    assert result.trace.iterations[-1] == 2000
    assert all(value == 0.0 for value in result.trace.elapsed_seconds)


def test_fit_is_reproducible(beta_toy):
    # Arrange
    factors = beta_toy.initial_factors()

    # Act
    first = trainer.fit(beta_toy, factors, EstimatorConfig(), 50, RngState.from_seed(3))
    second = trainer.fit(beta_toy, factors, EstimatorConfig(), 50, RngState.from_seed(3))

    # Assert
    assert first.trace.elbo == second.trace.elbo
    np.testing.assert_array_equal(first.factors[0].params.alpha, second.factors[0].params.alpha)


def test_fit_respects_min_shape(gamma_toy, rng):
    # Arrange
    factors = [Factor("z", Families.GAMMA, GammaParams(shape=0.05, rate=0.05), TransformKinds.GAMMA_STD)]

    # Act
    result = trainer.fit(gamma_toy, factors, EstimatorConfig(), 20, rng, eta=1.0, min_shape=0.04)

    # Assert
    assert float(result.factors[0].params.shape) >= 0.04


@pytest.mark.parametrize("iterations,min_shape", [(-1, 1e-2), (10, 0.0)])
def test_fit_arguments(gamma_toy, rng, iterations, min_shape):
    # Act & Assert
    with pytest.raises(ValueError):
        trainer.fit(gamma_toy, gamma_toy.initial_factors(), EstimatorConfig(), iterations, rng, min_shape=min_shape)


def test_fit_aborts_with_partial_trace(gamma_toy, rng, monkeypatch):
    # Arrange
    calls = {"count": 0}
    original = trainer.estimate_gradient

    def failing(*args, **kwargs):
        calls["count"] += 1
        estimate = original(*args, **kwargs)
        if calls["count"] == 3:
            estimate.values["z"]["rate"] = np.asarray(np.nan)
        return estimate

    monkeypatch.setattr(trainer, "estimate_gradient", failing)

    # Act
    with pytest.raises(TrainingAborted) as excinfo:
        trainer.fit(gamma_toy, gamma_toy.initial_factors(), EstimatorConfig(), 10, rng)

    # Assert
    assert len(excinfo.value.trace) == 2


def test_fit_sweep(gamma_toy, rng):
    # Act
    results, best = trainer.fit_sweep(
        gamma_toy, gamma_toy.initial_factors(), EstimatorConfig(), 30, rng, etas=(0.1, 1.0)
    )

    # Assert
    assert [result.eta for result in results] == [0.1, 1.0]
    assert best.trace.tail_mean() == max(result.trace.tail_mean() for result in results)
    with pytest.raises(ValueError):
        trainer.fit_sweep(gamma_toy, gamma_toy.initial_factors(), EstimatorConfig(), 1, rng, etas=())


def test_factor_codec():
    # Arrange
    factors = [
        Factor("a", Families.GAMMA, GammaParams(shape=[1.0, 2.0], rate=[0.5, 3.0]), TransformKinds.GAMMA_STD),
        Factor("b", Families.BETA, BetaParams(alpha=2.0, beta=3.0), TransformKinds.BETA_LOGIT_ADAPTIVE),
        Factor("c", Families.LOGNORMAL, LogNormalParams(loc=-1.0, scale=0.5), TransformKinds.IDENTITY),
        Factor("d", Families.DIRICHLET, DirichletParams(alpha=[1.0, 2.0, 3.0]), TransformKinds.DIRICHLET_FULLCOV),
    ]

    # Act
    encoded = trainer.encode_factors(factors)
    decoded = trainer.decode_factors(encoded)

    # Assert
    assert encoded["a"] == {
        "family": "gamma",
        "transform": "gamma-std",
        "params": {"shape": [1.0, 2.0], "rate": [0.5, 3.0]},
    }
    assert [factor.name for factor in decoded] == ["a", "b", "c", "d"]
    assert decoded[1].transform is TransformKinds.BETA_LOGIT_ADAPTIVE
    np.testing.assert_array_equal(decoded[3].params.alpha, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        trainer.decode_factors({"a": {"family": "poisson", "transform": "identity", "params": {}}})
