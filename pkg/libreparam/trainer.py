"""
The stochastic optimization loop: adaptive step sizes, the softplus map between constrained and unconstrained
parameters, the shape-mean parameterization of gamma factors and the per-iteration trace.
"""

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from libreparam import dists
from libreparam.dists import BetaParams, DirichletParams, GammaParams, LogNormalParams
from libreparam.enums import Families, TransformKinds
from libreparam.estimators import EstimatorConfig, Factor, elbo_estimate, estimate_gradient
from libreparam.exceptions import DomainError, NumericalError, TrainingAborted
from libreparam.randkit import RngState
from libreparam.utils import as_float_array, as_positive_array, inverse_softplus, sigmoid, softplus

_logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("iteration", "elbo", "grad_norm", "elapsed_seconds")
DEFAULT_ETAS = (0.1, 0.5, 1.0, 5.0)


@dataclass(frozen=True)
class StepSizeState:
    """
    Running state of the adaptive step-size schedule
    ``rho = eta * i ** (-0.5 + kappa) / (tau + sqrt(s))`` with ``s = gamma * g**2 + (1 - gamma) * s``.

    ``s`` is ``None`` before the first step and is then initialized with the square of the first gradient.
    """

    eta: float = 0.5
    kappa: float = 1e-16
    tau: float = 1.0
    gamma: float = 0.1
    s: Optional[np.ndarray] = None
    iteration: int = 0

    def __post_init__(self):
        for name in ("eta", "tau", "gamma", "kappa"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError("%s must be a positive number." % name)


def step_size(state: StepSizeState, gradient) -> Tuple[np.ndarray, StepSizeState]:
    """
    Advance the schedule by one iteration.

    :param state: The state after the previous iteration.
    :param gradient: The current gradient, one entry per component.
    :return: The step size per component and the updated state.
    :raises NumericalError: In case a gradient component is not finite.
    """
    gradient = np.asarray(gradient, dtype=float)
    if not np.all(np.isfinite(gradient)):
        raise NumericalError("The gradient has non-finite components.")
    squared = gradient**2
    previous = squared if state.s is None else state.s
    s = state.gamma * squared + (1.0 - state.gamma) * previous
    iteration = state.iteration + 1
    rho = state.eta * iteration ** (-0.5 + state.kappa) / (state.tau + np.sqrt(s))
    return rho, replace(state, s=s, iteration=iteration)


def constrain(value):
    """
    ``softplus``: maps any real number to a positive one.
    """
    return softplus(as_float_array(value, "value"))


def unconstrain(value):
    """
    Inverse of :func:`constrain`.

    :raises DomainError: In case a value is not strictly positive.
    """
    return inverse_softplus(value)


def chain_grad(gradient, unconstrained):
    """
    Gradient with respect to the unconstrained value from the gradient with respect to the constrained one.
    """
    return np.asarray(gradient, dtype=float) * sigmoid(np.asarray(unconstrained, dtype=float))


def gamma_shape_mean_chain(grad_shape, grad_rate, shape, mean) -> Tuple[np.ndarray, np.ndarray]:
    """
    Convert a gradient over ``(shape, rate)`` into one over ``(shape, mean)`` with ``rate = shape / mean``.

    :return: The gradient with respect to the shape at fixed mean and the gradient with respect to the mean.
    :raises DomainError: In case a mean is not strictly positive.
    """
    mean = as_positive_array(mean, "mean")
    shape = np.asarray(shape, dtype=float)
    grad_rate = np.asarray(grad_rate, dtype=float)
    return np.asarray(grad_shape, dtype=float) + grad_rate / mean, grad_rate * (-shape / mean**2)


@dataclass
class TrainTrace:
    """
    Per-iteration records of a run.
    """

    iterations: List[int] = field(default_factory=list)
    elbo: List[float] = field(default_factory=list)
    grad_norm: List[float] = field(default_factory=list)
    elapsed_seconds: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.iterations)

    def append(self, iteration: int, elbo: float, grad_norm: float, elapsed_seconds: float):
        """
        Add a record.

        :raises ValueError: In case the iteration does not follow the previous one.
        """
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError("Iterations must be strictly increasing.")
        self.iterations.append(int(iteration))
        self.elbo.append(float(elbo))
        self.grad_norm.append(float(grad_norm))
        self.elapsed_seconds.append(float(elapsed_seconds))

    def smoothed_elbo(self, window: int = 50) -> np.ndarray:
        """
        Trailing moving average of the ELBO. The first entries average over the records available so far.
        """
        if window < 1:
            raise ValueError("window must be at least one.")
        values = np.asarray(self.elbo, dtype=float)
        if values.size == 0:
            return values
        cumulative = np.concatenate(([0.0], np.cumsum(values)))
        ends = np.arange(1, values.size + 1)
        starts = np.maximum(ends - window, 0)
        return (cumulative[ends] - cumulative[starts]) / (ends - starts)

    def tail_mean(self, fraction: float = 0.1) -> float:
        """
        Mean ELBO over the last ``fraction`` of the records, at least one record.
        """
        if not self.elbo:
            return float("-inf")
        count = max(1, int(round(len(self.elbo) * fraction)))
        return float(np.mean(self.elbo[-count:]))

    def to_csv(self, path: str):
        """
        Write the trace with the header ``iteration,elbo,grad_norm,elapsed_seconds``.
        """
        with open(path, "w", newline="") as csv_file:
            writer = csv.writer(csv_file, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for row in zip(self.iterations, self.elbo, self.grad_norm, self.elapsed_seconds):
                writer.writerow([row[0]] + [repr(value) for value in row[1:]])


@dataclass
class FitResult:
    """
    Outcome of one optimization run.
    """

    factors: List[Factor]
    trace: TrainTrace
    eta: float


_UNCONSTRAINED_NAMES = {
    Families.GAMMA: ("shape", "mean"),
    Families.BETA: ("alpha", "beta"),
    Families.LOGNORMAL: ("loc", "scale"),
    Families.DIRICHLET: ("alpha",),
}


def _natural(factor: Factor) -> Dict[str, np.ndarray]:
    """
    The optimized coordinates of a factor before the softplus map: gamma factors use shape and mean.
    """
    params = factor.params.as_dict()
    if factor.family is Families.GAMMA:
        return {"shape": params["shape"], "mean": params["shape"] / params["rate"]}
    return params


def _to_unconstrained(factor: Factor) -> Dict[str, np.ndarray]:
    natural = _natural(factor)
    return {
        name: np.array(value, dtype=float) if not _is_positive(factor.family, name) else np.asarray(unconstrain(value))
        for name, value in natural.items()
    }


def _is_positive(family: Families, name: str) -> bool:
    return not (family is Families.LOGNORMAL and name == "loc")


def _is_shape_like(family: Families, name: str) -> bool:
    return family in (Families.BETA, Families.DIRICHLET) or (family is Families.GAMMA and name == "shape")


def _from_unconstrained(factor: Factor, values: Dict[str, np.ndarray], min_shape: float) -> Factor:
    """
    Map unconstrained coordinates back to a factor. Shape-like parameters are floored at ``min_shape``; the
    unconstrained values of floored entries are reset in place.
    """
    natural = {}
    for name, value in values.items():
        if not _is_positive(factor.family, name):
            natural[name] = value
            continue
        constrained = constrain(value)
        if _is_shape_like(factor.family, name):
            floored = constrained < min_shape
            if np.any(floored):
                constrained = np.where(floored, min_shape, constrained)
                value[...] = np.where(floored, unconstrain(min_shape), value)
        natural[name] = constrained
    if factor.family is Families.GAMMA:
        params = GammaParams(shape=natural["shape"], rate=natural["shape"] / natural["mean"])
    elif factor.family is Families.BETA:
        params = BetaParams(alpha=natural["alpha"], beta=natural["beta"])
    elif factor.family is Families.LOGNORMAL:
        params = LogNormalParams(loc=natural["loc"], scale=natural["scale"])
    else:
        params = DirichletParams(alpha=natural["alpha"])
    return factor.with_params(params)


def _unconstrained_gradient(
    factor: Factor, gradient: Dict[str, np.ndarray], unconstrained: Dict[str, np.ndarray]
) -> Dict[str, np.ndarray]:
    if factor.family is Families.GAMMA:
        natural = _natural(factor)
        grad_shape, grad_mean = gamma_shape_mean_chain(
            gradient["shape"], gradient["rate"], natural["shape"], natural["mean"]
        )
        gradient = {"shape": grad_shape, "mean": grad_mean}
    return {
        name: chain_grad(gradient[name], unconstrained[name]) if _is_positive(factor.family, name) else gradient[name]
        for name in _UNCONSTRAINED_NAMES[factor.family]
    }


def _flatten(values: Sequence[Dict[str, np.ndarray]]) -> np.ndarray:
    parts = [np.ravel(value) for block in values for value in block.values()]
    return np.concatenate(parts) if parts else np.zeros(0)


def _apply_step(coordinates: List[Dict[str, np.ndarray]], step: np.ndarray):
    offset = 0
    for block in coordinates:
        for name, value in block.items():
            size = value.size
            block[name] = np.asarray(value + step[offset : offset + size].reshape(value.shape))
            offset += size


def fit(
    model,
    factors: Sequence[Factor],
    estimator_config: EstimatorConfig,
    iterations: int,
    rng: RngState,
    eta: float = 0.5,
    elbo_samples: int = 1,
    min_shape: float = 1e-2,
    log_every: int = 100,
    wall_clock: bool = False,
) -> FitResult:
    """
    Maximize the ELBO by stochastic gradient ascent ``v <- v + rho * grad``. Positive parameters are optimized through
    the softplus map and gamma factors in shape-mean coordinates.

    Every iteration draws a gradient estimate, records the ELBO estimate at the current parameters and takes one
    step.

    :param model: The model to fit.
    :param factors: The initial variational factors, e.g. from ``model.initial_factors()``.
    :param estimator_config: Gradient estimator and sample counts.
    :param iterations: Number of iterations; zero returns the initial factors.
    :param rng: Random state for all draws of the run.
    :param eta: Base step size.
    :param elbo_samples: Samples per recorded ELBO estimate.
    :param min_shape: Floor for shape-like parameters.
    :param log_every: Log the ELBO at debug level every this many iterations.
    :param wall_clock: Record elapsed seconds; otherwise the column is zero and traces are reproducible.
    :raises TrainingAborted: In case a gradient or a parameter becomes non-finite. The partial trace is attached.
    """
    if iterations < 0:
        raise ValueError("iterations must not be negative.")
    if min_shape <= 0:
        raise ValueError("min_shape must be positive.")
    factors = list(factors)
    trace = TrainTrace()
    state = StepSizeState(eta=eta)
    coordinates = [_to_unconstrained(factor) for factor in factors]
    started = time.perf_counter()
    for iteration in range(1, iterations + 1):
        estimate = estimate_gradient(model, factors, estimator_config, rng)
        gradient = _flatten(
            [
                _unconstrained_gradient(factor, estimate.values[factor.name], block)
                for factor, block in zip(factors, coordinates)
            ]
        )
        if not np.all(np.isfinite(gradient)):
            raise TrainingAborted("Non-finite gradient at iteration %d." % iteration, trace)
        elbo = elbo_estimate(model, factors, elbo_samples, rng, estimator_config.entropy)
        elapsed = time.perf_counter() - started if wall_clock else 0.0
        trace.append(iteration, elbo, estimate.norm(), elapsed)
        if log_every and iteration % log_every == 0:
            _logger.debug("Iteration %d: ELBO %.6g, gradient norm %.6g.", iteration, elbo, estimate.norm())
        rho, state = step_size(state, gradient)
        _apply_step(coordinates, rho * gradient)
        if not np.all(np.isfinite(_flatten(coordinates))):
            raise TrainingAborted("Non-finite parameters after iteration %d." % iteration, trace)
        try:
            factors = [
                _from_unconstrained(factor, block, min_shape) for factor, block in zip(factors, coordinates)
            ]
        except DomainError as error:
            raise TrainingAborted("Invalid parameters after iteration %d: %s" % (iteration, error), trace) from error
    return FitResult(factors=factors, trace=trace, eta=eta)


def fit_sweep(
    model,
    factors: Sequence[Factor],
    estimator_config: EstimatorConfig,
    iterations: int,
    rng: RngState,
    etas: Sequence[float] = DEFAULT_ETAS,
    **options
) -> Tuple[List[FitResult], FitResult]:
    """
    Run :func:`fit` once per base step size, each from the same initial factors on its own substream.

    :return: All results in the order of ``etas`` and the one with the best mean ELBO over the last tenth of its
             iterations. Ties keep the earlier step size.
    """
    if not etas:
        raise ValueError("At least one step size is needed.")
    results = []
    for eta, stream in zip(etas, rng.split(len(etas))):
        _logger.info("Fitting with eta=%g.", eta)
        results.append(fit(model, factors, estimator_config, iterations, stream, eta=eta, **options))
    best = max(results, key=lambda result: result.trace.tail_mean())
    return results, best


def encode_factors(factors: Sequence[Factor]) -> dict:
    """
    JSON-ready description of fitted factors.
    """
    return {
        factor.name: {
            "family": factor.family.value,
            "transform": factor.transform.value,
            "params": {name: np.asarray(value).tolist() for name, value in factor.params.as_dict().items()},
        }
        for factor in factors
    }


def decode_factors(data: dict) -> List[Factor]:
    """
    Inverse of :func:`encode_factors`.

    :raises ValueError: In case a family, transformation or parameter set is unknown.
    """
    factors = []
    for name, entry in data.items():
        family = Families(entry["family"])
        params_type = dists.family_class(family).params_type
        params = params_type.from_dict({key: np.asarray(value, dtype=float) for key, value in entry["params"].items()})
        factors.append(Factor(name, family, params, TransformKinds(entry["transform"])))
    return factors
