"""
Monte Carlo estimators of the ELBO gradient: the generalized reparameterization gradient split into its
reparameterization and correction terms, and the score function baseline with optional control variates.

Latent values are dictionaries keyed by block name. Every array carries a leading sample axis, and gradients are
dictionaries ``{block: {parameter: array}}`` shaped like the variational parameters.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from libreparam import dists, transforms
from libreparam.dists import FamilyParams
from libreparam.enums import EstimatorKinds, Families, TransformKinds
from libreparam.exceptions import NumericalError
from libreparam.randkit import RngState

_logger = logging.getLogger(__name__)

MAX_BOUNDARY_RETRIES = 16
ENTROPY_MODES = ("analytic", "mc")

Gradient = Dict[str, Dict[str, np.ndarray]]


@dataclass(frozen=True)
class Factor:
    """
    One mean-field factor: a latent block bound to a variational family, its current parameters and the
    standardization used by the G-REP estimator.
    """

    name: str
    family: Families
    params: FamilyParams
    transform: TransformKinds

    def __post_init__(self):
        if not transforms.compatible(self.transform, self.family):
            raise ValueError(
                "Block %s: the %s transformation cannot be used with the %s family."
                % (self.name, self.transform.value, self.family.value)
            )
        if dists.family_of(self.params) is not self.family:
            raise TypeError("Block %s: parameters do not belong to the %s family." % (self.name, self.family.value))

    def with_params(self, params: FamilyParams) -> "Factor":
        """
        A copy of this factor holding other parameters.
        """
        return Factor(self.name, self.family, params, self.transform)


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Estimator selection and sample counts.

    :param kind: Which estimator to run.
    :param n_samples: Monte Carlo samples per gradient estimate.
    :param cv_samples: Samples of the separate batch the control variate coefficients are estimated on. Only used by
                       :attr:`EstimatorKinds.SCORE_FUNCTION_CV`.
    :param entropy: ``"analytic"`` adds the exact entropy gradient, ``"mc"`` folds ``-log q`` into the integrand.
    """

    kind: EstimatorKinds = EstimatorKinds.GREP
    n_samples: int = 1
    cv_samples: int = 30
    entropy: str = "analytic"

    def __post_init__(self):
        if not isinstance(self.kind, EstimatorKinds):
            raise TypeError("kind must be an EstimatorKinds member.")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least one.")
        if self.kind is EstimatorKinds.SCORE_FUNCTION_CV and self.cv_samples < 2:
            raise ValueError("Control variates need at least two cv_samples.")
        if self.entropy not in ENTROPY_MODES:
            raise ValueError("entropy must be one of %s." % ", ".join(ENTROPY_MODES))


@dataclass
class GradientEstimate:
    """
    A gradient estimate with its provenance. When ``breakdown`` is present, ``values`` equals the sum of its
    ``g_rep``, ``g_corr`` and ``entropy`` entries.
    """

    values: Gradient
    n_samples: int
    kind: EstimatorKinds
    breakdown: Optional[Dict[str, Gradient]] = None
    biased: bool = False

    def flatten(self) -> np.ndarray:
        """
        All components as one vector, blocks and parameters in declaration order.
        """
        return flatten_gradient(self.values)

    def component_names(self) -> List[str]:
        """
        ``block.parameter[index]`` labels matching :meth:`flatten`.
        """
        return component_names(self.values)

    def norm(self) -> float:
        """
        Euclidean norm over all components.
        """
        return float(np.linalg.norm(self.flatten()))


def flatten_gradient(gradient: Gradient) -> np.ndarray:
    parts = [np.ravel(value) for block in gradient.values() for value in block.values()]
    return np.concatenate(parts) if parts else np.zeros(0)


def component_names(gradient: Gradient) -> List[str]:
    names = []
    for block_name, block in gradient.items():
        for param_name, value in block.items():
            if np.ndim(value) == 0:
                names.append("%s.%s" % (block_name, param_name))
                continue
            for index in np.ndindex(np.shape(value)):
                names.append("%s.%s[%s]" % (block_name, param_name, ",".join(str(i) for i in index)))
    return names


@dataclass
class VarianceReport:
    """
    Empirical mean and variance of every gradient component over independent estimates.
    """

    estimator: EstimatorKinds
    n_samples: int
    trials: int
    components: List[str]
    means: np.ndarray
    variances: np.ndarray
    label: str = field(default="")

    @property
    def mean_variance(self) -> float:
        """
        The sample variance averaged over all components.
        """
        return float(np.mean(self.variances))

    def rows(self) -> List[dict]:
        """
        One CSV row per component.
        """
        return [
            {
                "estimator": self.label or self.estimator.value,
                "n_samples": self.n_samples,
                "component": component,
                "mean": repr(float(mean)),
                "variance": repr(float(variance)),
                "trials": self.trials,
            }
            for component, mean, variance in zip(self.components, self.means, self.variances)
        ]


VARIANCE_CSV_COLUMNS = ("estimator", "n_samples", "component", "mean", "variance", "trials")


def write_variance_csv(reports: Sequence[VarianceReport], path: str):
    """
    Write the rows of every report to one CSV file.
    """
    with open(path, "w", newline="") as csv_file:
        writer = csv.DictWriter(csv_file, fieldnames=VARIANCE_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            writer.writerows(report.rows())


@dataclass
class GrepTerms:
    """
    Per-sample integrands. Every array has the sample axis first.

    ``score`` is the plain score function integrand ``f * d log q / d v``. With the identity transformation ``g_corr``
    equals it and ``g_rep`` vanishes.
    """

    z: Dict[str, np.ndarray]
    f: np.ndarray
    g_rep: Gradient
    g_corr: Gradient
    score: Gradient
    degenerate: int = 0


def draw_latents(factors: Sequence[Factor], n_samples: int, rng: RngState) -> Dict[str, np.ndarray]:
    """
    Draw ``n_samples`` latent values from every factor. Samples outside the open support are redrawn.

    :raises NumericalError: In case samples keep landing on the boundary after ``MAX_BOUNDARY_RETRIES`` rounds.
    """
    latents = {}
    for factor in factors:
        z = dists.sample(factor.family, factor.params, rng, n_samples)
        inside = dists.check_support(factor.family, z)
        retries = 0
        while not np.all(inside):
            retries += 1
            if retries > MAX_BOUNDARY_RETRIES:
                raise NumericalError("Block %s: samples keep hitting the support boundary." % factor.name)
            outside = np.flatnonzero(~inside)
            z[outside] = dists.sample(factor.family, factor.params, rng, outside.size)
            inside = dists.check_support(factor.family, z)
        if retries:
            _logger.debug("Block %s: resampled boundary hits in %d round(s).", factor.name, retries)
        latents[factor.name] = z
    return latents


def log_q(factors: Sequence[Factor], z: Dict[str, np.ndarray]) -> np.ndarray:
    """
    ``log q(z)`` of the whole mean-field family, one value per sample.
    """
    total = 0.0
    for factor in factors:
        density = np.asarray(dists.log_density(factor.family, factor.params, z[factor.name]))
        total = total + density.reshape(density.shape[0], -1).sum(axis=1)
    return total


def total_entropy(factors: Sequence[Factor]) -> float:
    """
    Analytic entropy of the whole mean-field family.
    """
    return float(sum(np.sum(dists.entropy(factor.family, factor.params)) for factor in factors))


def _expand(values: np.ndarray, like: np.ndarray) -> np.ndarray:
    return values.reshape(values.shape + (1,) * (np.ndim(like) - 1))


def _contract(family: Families, gradient: np.ndarray, h: np.ndarray) -> np.ndarray:
    """
    ``sum_k gradient_k * h_k`` over the latent components that one parameter entry affects.
    """
    if family is Families.DIRICHLET:
        return np.sum(gradient[..., :, None] * h, axis=-2)
    return gradient * h


def _integrand(model, factors: Sequence[Factor], z: Dict[str, np.ndarray], entropy: str):
    f = np.asarray(model.log_joint(z), dtype=float)
    grad = model.grad_log_joint(z)
    if entropy == "mc":
        f = f - log_q(factors, z)
        grad = {
            factor.name: grad[factor.name] - dists.dlogq_dz(factor.family, factor.params, z[factor.name])
            for factor in factors
        }
    return f, grad


def _zero_gradient(factors: Sequence[Factor]) -> Gradient:
    return {
        factor.name: {name: np.zeros_like(value) for name, value in factor.params.as_dict().items()}
        for factor in factors
    }


def entropy_gradient(factors: Sequence[Factor]) -> Gradient:
    """
    Exact gradient of the entropy of every factor.
    """
    return {
        factor.name: {
            name: np.asarray(value, dtype=float)
            for name, value in dists.dentropy_dparams(factor.family, factor.params).items()
        }
        for factor in factors
    }


def grep_terms(model, factors: Sequence[Factor], n_samples: int, rng: RngState, entropy: str = "analytic"):
    """
    Draw samples and compute the per-sample reparameterization, correction and score function integrands.

    :param model: A model exposing ``log_joint`` and ``grad_log_joint``.
    :param factors: The mean-field factors, one per latent block of the model.
    :param n_samples: Number of samples to draw.
    :param rng: Random state to draw from.
    :param entropy: ``"mc"`` replaces ``f`` by ``f - log q``.
    :rtype: GrepTerms
    """
    z = draw_latents(factors, n_samples, rng)
    return grep_terms_at(model, factors, z, entropy)


def grep_terms_at(model, factors: Sequence[Factor], z: Dict[str, np.ndarray], entropy: str = "analytic") -> GrepTerms:
    """
    :func:`grep_terms` for given latent values.
    """
    f, grad = _integrand(model, factors, z, entropy)
    g_rep, g_corr, score = {}, {}, {}
    degenerate = 0
    for factor in factors:
        z_block = z[factor.name]
        evaluation = transforms.evaluate(factor.transform, factor.params, z_block)
        if evaluation.degenerate is not None:
            degenerate += int(np.count_nonzero(evaluation.degenerate))
        dlogq_dz = dists.dlogq_dz(factor.family, factor.params, z_block)
        dlogq_dparams = dists.dlogq_dparams(factor.family, factor.params, z_block)
        g_rep[factor.name], g_corr[factor.name], score[factor.name] = {}, {}, {}
        for name in factor.params.names:
            h = evaluation.h[name]
            f_wide = _expand(f, dlogq_dparams[name])
            g_rep[factor.name][name] = _contract(factor.family, grad[factor.name], h)
            g_corr[factor.name][name] = f_wide * (
                _contract(factor.family, dlogq_dz, h) + dlogq_dparams[name] + evaluation.u[name]
            )
            score[factor.name][name] = f_wide * dlogq_dparams[name]
    return GrepTerms(z=z, f=f, g_rep=g_rep, g_corr=g_corr, score=score, degenerate=degenerate)


def _mean(per_sample: Gradient) -> Gradient:
    return {
        block: {name: np.mean(value, axis=0) for name, value in params.items()}
        for block, params in per_sample.items()
    }


def _sum(*gradients: Gradient) -> Gradient:
    first = gradients[0]
    return {
        block: {name: sum(gradient[block][name] for gradient in gradients) for name in params}
        for block, params in first.items()
    }


def _entropy_term(factors: Sequence[Factor], entropy: str) -> Gradient:
    if entropy == "mc":
        return _zero_gradient(factors)
    return entropy_gradient(factors)


def grad_grep(
    model, factors: Sequence[Factor], n_samples: int, rng: RngState, entropy: str = "analytic"
) -> GradientEstimate:
    """
    The generalized reparameterization gradient of the ELBO, ``g_rep + g_corr + grad H``.

    Each factor is standardized with its own transformation. The estimate is biased only for the adaptive beta
    transformation.

    :raises NumericalError: In case samples keep hitting the support boundary.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least one.")
    terms = grep_terms(model, factors, n_samples, rng, entropy)
    if terms.degenerate:
        _logger.warning("Adaptive beta transform fell back for %d sample(s) in this estimate.", terms.degenerate)
    breakdown = {
        "g_rep": _mean(terms.g_rep),
        "g_corr": _mean(terms.g_corr),
        "entropy": _entropy_term(factors, entropy),
    }
    return GradientEstimate(
        values=_sum(breakdown["g_rep"], breakdown["g_corr"], breakdown["entropy"]),
        n_samples=n_samples,
        kind=EstimatorKinds.GREP,
        breakdown=breakdown,
        biased=any(transforms.is_biased(factor.transform) for factor in factors),
    )


def _score_parts(model, factors: Sequence[Factor], z: Dict[str, np.ndarray], entropy: str):
    """
    Per-sample ``f * s`` and ``s`` with ``s`` the score.
    """
    f, _ = _integrand(model, factors, z, entropy)
    weighted, scores = {}, {}
    for factor in factors:
        dlogq_dparams = dists.dlogq_dparams(factor.family, factor.params, z[factor.name])
        weighted[factor.name], scores[factor.name] = {}, {}
        for name in factor.params.names:
            weighted[factor.name][name] = _expand(f, dlogq_dparams[name]) * dlogq_dparams[name]
            scores[factor.name][name] = dlogq_dparams[name]
    return weighted, scores


def control_variate_coefficients(weighted: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """
    ``a = Cov(f s, s) / Var(s)`` along the sample axis. Components whose score variance is below ``1e-30`` get a zero
    coefficient.
    """
    centered_scores = scores - np.mean(scores, axis=0)
    covariance = np.mean((weighted - np.mean(weighted, axis=0)) * centered_scores, axis=0)
    variance = np.mean(centered_scores**2, axis=0)
    flat = variance < 1e-30
    return np.where(flat, 0.0, covariance / np.where(flat, 1.0, variance))


def grad_score_function(
    model,
    factors: Sequence[Factor],
    n_samples: int,
    cv_samples: int,
    rng: RngState,
    entropy: str = "analytic",
) -> GradientEstimate:
    """
    The score function gradient ``mean(f * grad log q) + grad H``.

    :param cv_samples: Size of the separate batch the control variate coefficients are estimated on; 0 disables
                       control variates.
    :raises ValueError: In case ``n_samples`` is below one or ``cv_samples`` equals one.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least one.")
    if cv_samples == 1 or cv_samples < 0:
        raise ValueError("cv_samples must be zero or at least two.")
    weighted, scores = _score_parts(model, factors, draw_latents(factors, n_samples, rng), entropy)
    kind = EstimatorKinds.SCORE_FUNCTION
    if cv_samples:
        kind = EstimatorKinds.SCORE_FUNCTION_CV
        cv_weighted, cv_scores = _score_parts(model, factors, draw_latents(factors, cv_samples, rng), entropy)
        for block, params in weighted.items():
            for name in params:
                coefficient = control_variate_coefficients(cv_weighted[block][name], cv_scores[block][name])
                _logger.debug("Control variate coefficients of %s.%s: %s", block, name, coefficient)
                weighted[block][name] = weighted[block][name] - coefficient * scores[block][name]
    breakdown = {
        "g_rep": _zero_gradient(factors),
        "g_corr": _mean(weighted),
        "entropy": _entropy_term(factors, entropy),
    }
    return GradientEstimate(
        values=_sum(breakdown["g_rep"], breakdown["g_corr"], breakdown["entropy"]),
        n_samples=n_samples,
        kind=kind,
        breakdown=breakdown,
    )


def estimate_gradient(model, factors: Sequence[Factor], config: EstimatorConfig, rng: RngState) -> GradientEstimate:
    """
    Run the estimator the configuration selects.
    """
    if config.kind is EstimatorKinds.GREP:
        return grad_grep(model, factors, config.n_samples, rng, config.entropy)
    cv_samples = config.cv_samples if config.kind is EstimatorKinds.SCORE_FUNCTION_CV else 0
    return grad_score_function(model, factors, config.n_samples, cv_samples, rng, config.entropy)


def elbo_estimate(model, factors: Sequence[Factor], n_samples: int, rng: RngState, entropy: str = "analytic") -> float:
    """
    Monte Carlo estimate of the ELBO, ``mean(f) + H`` with the analytic entropy or ``mean(f - log q)``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least one.")
    if entropy not in ENTROPY_MODES:
        raise ValueError("entropy must be one of %s." % ", ".join(ENTROPY_MODES))
    z = draw_latents(factors, n_samples, rng)
    f = np.asarray(model.log_joint(z), dtype=float)
    if entropy == "mc":
        return float(np.mean(f - log_q(factors, z)))
    return float(np.mean(f)) + total_entropy(factors)


def _flatten_samples(per_sample: Gradient) -> np.ndarray:
    parts = [
        value.reshape(value.shape[0], -1) for params in per_sample.values() for value in params.values()
    ]
    return np.concatenate(parts, axis=1)


def sample_estimates(model, factors: Sequence[Factor], config: EstimatorConfig, trials: int, rng: RngState):
    """
    ``trials`` independent gradient estimates as a ``(trials, components)`` matrix. All samples are drawn at once and
    grouped into trials afterwards.

    :return: The matrix and the component labels.
    """
    if trials < 1:
        raise ValueError("trials must be at least one.")
    n = config.n_samples
    z = draw_latents(factors, trials * n, rng)
    if config.kind is EstimatorKinds.GREP:
        terms = grep_terms_at(model, factors, z, config.entropy)
        per_sample = _flatten_samples(_sum(terms.g_rep, terms.g_corr))
    else:
        weighted, scores = _score_parts(model, factors, z, config.entropy)
        per_sample = _flatten_samples(weighted)
    estimates = per_sample.reshape(trials, n, -1).mean(axis=1)
    if config.kind is EstimatorKinds.SCORE_FUNCTION_CV:
        m = config.cv_samples
        cv_weighted, cv_scores = _score_parts(model, factors, draw_latents(factors, trials * m, rng), config.entropy)
        coefficients = control_variate_coefficients(
            np.swapaxes(_flatten_samples(cv_weighted).reshape(trials, m, -1), 0, 1),
            np.swapaxes(_flatten_samples(cv_scores).reshape(trials, m, -1), 0, 1),
        )
        estimates = estimates - coefficients * _flatten_samples(scores).reshape(trials, n, -1).mean(axis=1)
    entropy = flatten_gradient(_entropy_term(factors, config.entropy))
    return estimates + entropy, component_names(_zero_gradient(factors))


def estimator_variance(
    model, factors: Sequence[Factor], config: EstimatorConfig, trials: int, rng: RngState, label: str = ""
) -> VarianceReport:
    """
    Per-component sample variance of ``trials`` independent estimates.

    :raises ValueError: In case fewer than 100 trials are requested.
    """
    if trials < 100:
        raise ValueError("At least 100 trials are needed for a variance estimate.")
    estimates, names = sample_estimates(model, factors, config, trials, rng)
    _logger.info("Estimated %s variance with %d sample(s) over %d trials.", config.kind.value, config.n_samples, trials)
    return VarianceReport(
        estimator=config.kind,
        n_samples=config.n_samples,
        trials=trials,
        components=names,
        means=np.mean(estimates, axis=0),
        variances=np.var(estimates, axis=0, ddof=1),
        label=label,
    )
