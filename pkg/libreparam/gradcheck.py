"""
Finite-difference checks of every analytic derivative the estimators and the optimizer rely on.

Each check evaluates an analytic derivative at random points and compares it with central differences. The reported
error of a check is ``max |analytic - numeric| / max(|analytic|, |numeric|, 1)`` over all points and components.
"""

import csv
import logging
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from libreparam import dists, transforms
from libreparam.dists import BetaParams, DirichletParams, FamilyParams, GammaParams, LogNormalParams
from libreparam.enums import Families, Supports, TransformKinds
from libreparam.estimators import draw_latents
from libreparam.randkit import RngState, uniform
from libreparam.trainer import chain_grad, constrain, gamma_shape_mean_chain

_logger = logging.getLogger(__name__)

GRADCHECK_COLUMNS = ("check", "max_rel_error", "passed")
DEFAULT_TOLERANCE = 1e-4
DIRICHLET_CHECK_SIZE = 3

# Kinds whose auxiliary functions are true derivatives of the transformation. The adaptive beta kind chooses its
# scale derivatives per sample instead.
CHECKED_TRANSFORMS = {
    TransformKinds.GAMMA_STD: Families.GAMMA,
    TransformKinds.LOGNORMAL_STD: Families.LOGNORMAL,
    TransformKinds.BETA_LOGIT_STDDEV: Families.BETA,
    TransformKinds.DIRICHLET_FULLCOV: Families.DIRICHLET,
}


@dataclass
class GradcheckResult:
    """
    Outcome of one check.
    """

    check: str
    max_rel_error: float
    passed: bool

    def row(self) -> dict:
        return {"check": self.check, "max_rel_error": repr(self.max_rel_error), "passed": str(self.passed).lower()}


def relative_error(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / scale))


def _between(rng: RngState, low: float, high: float, size=None):
    return low + (high - low) * np.asarray(uniform(rng, size))


def random_params(family: Families, rng: RngState) -> FamilyParams:
    """
    Parameters away from the regions where the samplers or the transformations saturate.
    """
    if family is Families.GAMMA:
        return GammaParams(shape=_between(rng, 0.5, 5.0), rate=_between(rng, 0.5, 3.0))
    if family is Families.BETA:
        return BetaParams(alpha=_between(rng, 0.5, 5.0), beta=_between(rng, 0.5, 5.0))
    if family is Families.LOGNORMAL:
        return LogNormalParams(loc=_between(rng, -1.0, 1.0), scale=_between(rng, 0.3, 1.5))
    return DirichletParams(alpha=_between(rng, 1.0, 5.0, DIRICHLET_CHECK_SIZE))


def _perturbed(params: FamilyParams, name: str, index, delta: float) -> FamilyParams:
    values = {key: np.array(value, dtype=float) for key, value in params.as_dict().items()}
    values[name][index] += delta
    return type(params).from_dict(values)


def central_difference(function: Callable[[FamilyParams], np.ndarray], params: FamilyParams, step: float):
    """
    Central differences of ``function`` with respect to every parameter entry.

    :return: ``{name: array}`` where the parameter index is the last axis group of each array.
    """
    derivatives = {}
    for name, value in params.as_dict().items():
        columns = []
        for index in np.ndindex(np.shape(value)):
            delta = step * max(abs(float(value[index])), 1.0)
            upper = np.asarray(function(_perturbed(params, name, index, delta)), dtype=float)
            lower = np.asarray(function(_perturbed(params, name, index, -delta)), dtype=float)
            columns.append((upper - lower) / (2.0 * delta))
        stacked = np.stack(columns, axis=-1)
        derivatives[name] = stacked.reshape(stacked.shape[:-1] + np.shape(value))
    return derivatives


def _transform_checks(kind: TransformKinds, rng: RngState, points: int, step: float) -> Dict[str, float]:
    family = CHECKED_TRANSFORMS[kind]
    errors = {"h": 0.0, "u": 0.0}
    for _ in range(points):
        params = random_params(family, rng)
        z = dists.sample(family, params, rng, 1)[0]
        evaluation = transforms.evaluate(kind, params, z)
        eps = evaluation.eps
        numeric_h = central_difference(lambda p: transforms.forward(kind, p, eps), params, step)
        numeric_u = central_difference(lambda p: transforms.log_abs_det_jacobian(kind, p, eps), params, step)
        for name in params.names:
            errors["h"] = max(errors["h"], relative_error(evaluation.h[name], numeric_h[name]))
            errors["u"] = max(errors["u"], relative_error(evaluation.u[name], numeric_u[name]))
    return errors


def _density_checks(family: Families, rng: RngState, points: int, step: float) -> Dict[str, float]:
    errors = {"score": 0.0, "dz": 0.0, "entropy": 0.0}
    for _ in range(points):
        params = random_params(family, rng)
        z = dists.sample(family, params, rng, 1)[0]
        score = dists.dlogq_dparams(family, params, z)
        numeric = central_difference(lambda p: dists.log_density(family, p, z), params, step)
        entropy = dists.dentropy_dparams(family, params)
        numeric_entropy = central_difference(lambda p: dists.entropy(family, p), params, step)
        for name in params.names:
            errors["score"] = max(errors["score"], relative_error(score[name], numeric[name]))
            errors["entropy"] = max(errors["entropy"], relative_error(entropy[name], numeric_entropy[name]))
        dz = np.atleast_1d(dists.dlogq_dz(family, params, z))
        flat = np.atleast_1d(np.array(z, dtype=float))
        numeric_dz = np.zeros_like(flat)
        for k in range(flat.size):
            delta = step * min(flat[k], 1.0 - flat[k]) if family is Families.BETA else step * flat[k]
            upper, lower = flat.copy(), flat.copy()
            upper[k] += delta
            lower[k] -= delta
            shaped = np.shape(z)
            numeric_dz[k] = (
                np.sum(dists.log_density(family, params, upper.reshape(shaped)))
                - np.sum(dists.log_density(family, params, lower.reshape(shaped)))
            ) / (2.0 * delta)
        errors["dz"] = max(errors["dz"], relative_error(dz, numeric_dz))
    return errors


def model_gradient_error(model, rng: RngState, points: int, step: float) -> float:
    """
    Compare ``grad_log_joint`` with central differences of ``log_joint`` at draws from the initial factors.
    """
    factors = model.initial_factors()
    worst = 0.0
    for _ in range(points):
        z = draw_latents(factors, 1, rng)
        analytic = model.grad_log_joint(z)
        for block in model.layout:
            values = z[block.name]
            numeric = np.zeros(values.shape[1:])
            for index in np.ndindex(values.shape[1:]):
                value = float(values[(0,) + index])
                if block.support is Supports.UNIT_INTERVAL:
                    delta = step * min(value, 1.0 - value)
                else:
                    delta = step * value
                shifted = {name: array.copy() for name, array in z.items()}
                shifted[block.name][(0,) + index] = value + delta
                upper = float(model.log_joint(shifted)[0])
                shifted[block.name][(0,) + index] = value - delta
                lower = float(model.log_joint(shifted)[0])
                numeric[index] = (upper - lower) / (2.0 * delta)
            worst = max(worst, relative_error(analytic[block.name][0], numeric))
    return worst


def elbo_gradient_error(model, rng: RngState, points: int, step: float) -> float:
    """
    Compare the closed-form ELBO gradient of a conjugate toy with central differences of its closed-form ELBO.
    """
    family = model.layout["z"].family
    worst = 0.0
    for _ in range(points):
        params = random_params(family, rng)
        analytic = model.analytic_elbo_grad(params)
        numeric = central_difference(model.analytic_elbo, params, step)
        for name in params.names:
            worst = max(worst, relative_error(analytic[name], numeric[name]))
    return worst


def chain_rule_errors(rng: RngState, points: int, step: float) -> Dict[str, float]:
    """
    Check the softplus chain rule and the shape-mean gamma chain rule on the gamma entropy.
    """
    errors = {"softplus": 0.0, "shape-mean": 0.0}

    def entropy(shape, rate):
        return float(dists.entropy(Families.GAMMA, GammaParams(shape=shape, rate=rate)))

    for _ in range(points):
        params = random_params(Families.GAMMA, rng)
        shape, rate = float(params.shape), float(params.rate)
        mean = shape / rate
        gradient = dists.dentropy_dparams(Families.GAMMA, params)

        unconstrained = _between(rng, -2.0, 2.0)
        analytic = chain_grad(
            dists.dentropy_dparams(Families.GAMMA, GammaParams(shape=constrain(unconstrained), rate=rate))["shape"],
            unconstrained,
        )
        delta = step * max(abs(float(unconstrained)), 1.0)
        numeric = (
            entropy(constrain(unconstrained + delta), rate) - entropy(constrain(unconstrained - delta), rate)
        ) / (2.0 * delta)
        errors["softplus"] = max(errors["softplus"], relative_error(analytic, numeric))

        grad_shape, grad_mean = gamma_shape_mean_chain(gradient["shape"], gradient["rate"], shape, mean)
        delta_shape = step * max(shape, 1.0)
        numeric_shape = (
            entropy(shape + delta_shape, (shape + delta_shape) / mean)
            - entropy(shape - delta_shape, (shape - delta_shape) / mean)
        ) / (2.0 * delta_shape)
        delta_mean = step * mean
        numeric_mean = (
            entropy(shape, shape / (mean + delta_mean)) - entropy(shape, shape / (mean - delta_mean))
        ) / (2.0 * delta_mean)
        errors["shape-mean"] = max(
            errors["shape-mean"],
            relative_error([grad_shape, grad_mean], [numeric_shape, numeric_mean]),
        )
    return errors


def run_gradcheck(
    model, rng: RngState, points: int = 5, step: float = 1e-5, tolerance: float = DEFAULT_TOLERANCE
) -> List[GradcheckResult]:
    """
    Run every check.

    :param model: The model whose log-joint gradient is checked; toys additionally check their closed-form ELBO.
    :param rng: Random state for the evaluation points.
    :param points: Random points per check.
    :param step: Relative finite-difference step.
    :param tolerance: Largest error that still passes.
    """
    if points < 1:
        raise ValueError("points must be at least one.")
    if step <= 0:
        raise ValueError("step must be positive.")
    errors = {}
    for kind in CHECKED_TRANSFORMS:
        for name, error in _transform_checks(kind, rng, points, step).items():
            errors["transform-%s:%s" % (name, kind.value)] = error
    for family in Families:
        for name, error in _density_checks(family, rng, points, step).items():
            errors["%s:%s" % ("entropy-gradient" if name == "entropy" else "density-" + name, family.value)] = error
    errors["model-gradient"] = model_gradient_error(model, rng, points, step)
    if hasattr(model, "analytic_elbo_grad"):
        errors["elbo-gradient"] = elbo_gradient_error(model, rng, points, step)
    for name, error in chain_rule_errors(rng, points, step).items():
        errors["chain-%s" % name] = error
    results = [GradcheckResult(check, error, error < tolerance) for check, error in errors.items()]
    failed = [result.check for result in results if not result.passed]
    if failed:
        _logger.warning("Gradient checks above %g: %s.", tolerance, ", ".join(failed))
    return results


def write_gradcheck_csv(results: List[GradcheckResult], path: str):
    with open(path, "w", newline="") as csv_file:
        writer = csv.DictWriter(csv_file, fieldnames=GRADCHECK_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(result.row() for result in results)
