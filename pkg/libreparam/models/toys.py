"""
Two conjugate single-latent models. Their posteriors, ELBOs and marginal likelihoods are known in closed form, which
makes them the reference for checking the estimators and the optimizer.
"""

from typing import Dict, Tuple

import numpy as np

from libreparam import specialfn
from libreparam.dists import BetaParams, GammaParams
from libreparam.enums import Families, Supports
from libreparam.exceptions import DomainError
from libreparam.models.layout import LatentBlock, LatentLayout, ModelSpec, gamma_log_pdf
from libreparam.randkit import RngState, sample_bernoulli, sample_beta, sample_gamma, sample_poisson


def _as_counts(data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim != 1 or data.size == 0:
        raise ValueError("The toy models expect a non-empty vector of observations.")
    if not np.all(np.isfinite(data)) or np.any(data < 0) or np.any(data != np.round(data)):
        raise DomainError("Observations must be non-negative integers.")
    return data


def _log_beta(a, b):
    return specialfn.log_gamma(a) + specialfn.log_gamma(b) - specialfn.log_gamma(a + b)


class GammaPoissonToy(ModelSpec):
    """
    ``z ~ Gamma(a, b)`` and ``x_i ~ Poisson(z)``. The posterior is ``Gamma(a + sum(x), b + N)``.
    """

    def __init__(self, data, prior: GammaParams):
        data = _as_counts(data)
        layout = LatentLayout([LatentBlock("z", (), Supports.POSITIVE, Families.GAMMA)])
        super().__init__(layout, data)
        self.prior = prior
        self._total = float(np.sum(data))
        self._count = data.size
        self._log_factorials = float(np.sum(specialfn.log_gamma(data + 1.0)))

    def _log_joint(self, z):
        rate = z["z"]
        a, b = float(self.prior.shape), float(self.prior.rate)
        log_prior = gamma_log_pdf(rate, a, b)
        return log_prior + self._total * np.log(rate) - self._count * rate - self._log_factorials

    def _grad_log_joint(self, z):
        rate = z["z"]
        a, b = float(self.prior.shape), float(self.prior.rate)
        return {"z": (a - 1.0 + self._total) / rate - b - self._count}

    def _entry_log_likelihood(self, z, data):
        rate = z["z"][:, None]
        return data * np.log(rate) - rate - specialfn.log_gamma(data + 1.0)

    def _expected_observation(self, z):
        return np.broadcast_to(z["z"][:, None], (z["z"].shape[0], self._count)).copy()

    def prior_means(self):
        return {"z": np.asarray(self.prior.shape / self.prior.rate)}

    def posterior(self) -> GammaParams:
        """
        The exact posterior.
        """
        return GammaParams(shape=self.prior.shape + self._total, rate=self.prior.rate + self._count)

    def analytic_elbo(self, params: GammaParams) -> float:
        """
        The ELBO of ``q = Gamma(shape, rate)`` in closed form.
        """
        alpha, beta = float(params.shape), float(params.rate)
        a, b = float(self.prior.shape), float(self.prior.rate)
        expected_log = specialfn.digamma(alpha) - np.log(beta)
        expected = alpha / beta
        entropy = alpha - np.log(beta) + specialfn.log_gamma(alpha) + (1.0 - alpha) * specialfn.digamma(alpha)
        return float(
            a * np.log(b)
            - specialfn.log_gamma(a)
            + (a - 1.0 + self._total) * expected_log
            - (b + self._count) * expected
            - self._log_factorials
            + entropy
        )

    def analytic_elbo_grad(self, params: GammaParams) -> Dict[str, float]:
        """
        Gradient of :meth:`analytic_elbo`. It vanishes at the posterior.
        """
        alpha, beta = float(params.shape), float(params.rate)
        a_post = float(self.prior.shape) + self._total
        b_post = float(self.prior.rate) + self._count
        return {
            "shape": (a_post - alpha) * specialfn.trigamma(alpha) + 1.0 - b_post / beta,
            "rate": -a_post / beta + b_post * alpha / beta**2,
        }

    def log_marginal_likelihood(self) -> float:
        """
        ``log p(x)``, a negative binomial style closed form.
        """
        a, b = float(self.prior.shape), float(self.prior.rate)
        return float(
            a * np.log(b)
            - specialfn.log_gamma(a)
            + specialfn.log_gamma(a + self._total)
            - (a + self._total) * np.log(b + self._count)
            - self._log_factorials
        )

    @staticmethod
    def simulate(prior: GammaParams, n_obs: int, rng: RngState) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """
        Draw a rate from the prior and ``n_obs`` counts given it.
        """
        rate = sample_gamma(prior.shape, prior.rate, rng)
        return np.asarray(sample_poisson(rate, rng, n_obs), dtype=float), {"z": np.asarray(rate)}


class BetaBernoulliToy(ModelSpec):
    """
    ``z ~ Beta(a, b)`` and ``x_i ~ Bernoulli(z)``. The posterior is ``Beta(a + #ones, b + #zeros)``.
    """

    def __init__(self, data, prior: BetaParams):
        data = _as_counts(data)
        if np.any(data > 1):
            raise DomainError("Observations must be bits.")
        layout = LatentLayout([LatentBlock("z", (), Supports.UNIT_INTERVAL, Families.BETA)])
        super().__init__(layout, data)
        self.prior = prior
        self._ones = float(np.sum(data))
        self._zeros = float(data.size - self._ones)

    def _log_joint(self, z):
        p = z["z"]
        a, b = float(self.prior.alpha), float(self.prior.beta)
        return (a - 1.0 + self._ones) * np.log(p) + (b - 1.0 + self._zeros) * np.log1p(-p) - _log_beta(a, b)

    def _grad_log_joint(self, z):
        p = z["z"]
        a, b = float(self.prior.alpha), float(self.prior.beta)
        return {"z": (a - 1.0 + self._ones) / p - (b - 1.0 + self._zeros) / (1.0 - p)}

    def _entry_log_likelihood(self, z, data):
        p = z["z"][:, None]
        return data * np.log(p) + (1.0 - data) * np.log1p(-p)

    def _expected_observation(self, z):
        return np.broadcast_to(z["z"][:, None], (z["z"].shape[0], self.data.size)).copy()

    def prior_means(self):
        return {}

    def posterior(self) -> BetaParams:
        """
        The exact posterior.
        """
        return BetaParams(alpha=self.prior.alpha + self._ones, beta=self.prior.beta + self._zeros)

    def analytic_elbo(self, params: BetaParams) -> float:
        """
        The ELBO of ``q = Beta(alpha, beta)`` in closed form.
        """
        alpha, beta = float(params.alpha), float(params.beta)
        a, b = float(self.prior.alpha), float(self.prior.beta)
        digamma_sum = specialfn.digamma(alpha + beta)
        expected_log = specialfn.digamma(alpha) - digamma_sum
        expected_log_complement = specialfn.digamma(beta) - digamma_sum
        entropy = (
            _log_beta(alpha, beta)
            - (alpha - 1.0) * specialfn.digamma(alpha)
            - (beta - 1.0) * specialfn.digamma(beta)
            + (alpha + beta - 2.0) * digamma_sum
        )
        return float(
            (a - 1.0 + self._ones) * expected_log
            + (b - 1.0 + self._zeros) * expected_log_complement
            - _log_beta(a, b)
            + entropy
        )

    def analytic_elbo_grad(self, params: BetaParams) -> Dict[str, float]:
        """
        Gradient of :meth:`analytic_elbo`. It vanishes at the posterior.
        """
        alpha, beta = float(params.alpha), float(params.beta)
        a_post = float(self.prior.alpha) + self._ones
        b_post = float(self.prior.beta) + self._zeros
        shared = (a_post + b_post - alpha - beta) * specialfn.trigamma(alpha + beta)
        return {
            "alpha": (a_post - alpha) * specialfn.trigamma(alpha) - shared,
            "beta": (b_post - beta) * specialfn.trigamma(beta) - shared,
        }

    def log_marginal_likelihood(self) -> float:
        """
        ``log p(x) = log B(a + #ones, b + #zeros) - log B(a, b)``.
        """
        a, b = float(self.prior.alpha), float(self.prior.beta)
        return float(_log_beta(a + self._ones, b + self._zeros) - _log_beta(a, b))

    @staticmethod
    def simulate(prior: BetaParams, n_obs: int, rng: RngState) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """
        Draw a probability from the prior and ``n_obs`` bits given it.
        """
        p = sample_beta(prior.alpha, prior.beta, rng)
        return np.asarray(sample_bernoulli(p, rng, n_obs), dtype=float), {"z": np.asarray(p)}


def gamma_poisson_toy(data, prior: GammaParams) -> GammaPoissonToy:
    """
    Gamma prior on a Poisson rate, observed through ``data``.
    """
    return GammaPoissonToy(data, prior)


def beta_bernoulli_toy(data, prior: BetaParams) -> BetaBernoulliToy:
    """
    Beta prior on a Bernoulli probability, observed through ``data``.
    """
    return BetaBernoulliToy(data, prior)
