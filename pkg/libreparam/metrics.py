"""
Held-out evaluation of fitted variational posteriors.
"""

import json
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from libreparam import specialfn
from libreparam.estimators import Factor, draw_latents
from libreparam.exceptions import NumericalError
from libreparam.randkit import RngState

_logger = logging.getLogger(__name__)

WORD_PROBABILITY_CONVENTION = "rate-normalized"


@dataclass
class EvalReport:
    """
    A metric averaged over posterior samples.
    """

    metric: str
    value: float
    stddev: float
    n_samples: int
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("An evaluation needs at least one posterior sample.")
        if self.stddev < 0:
            raise ValueError("The standard deviation must not be negative.")

    def encode(self) -> dict:
        """
        ``{metric, value, stddev, n_samples}`` plus any notes.
        """
        encoded = {"metric": self.metric, "value": self.value, "stddev": self.stddev, "n_samples": self.n_samples}
        if self.notes:
            encoded["notes"] = self.notes
        return encoded

    def dumps(self) -> str:
        return json.dumps(self.encode(), sort_keys=True, indent=2)


def predictive_log_likelihood(
    model,
    factors: Sequence[Factor],
    heldout_data,
    n_samples: int,
    rng: RngState,
    heldout_mask: Optional[np.ndarray] = None,
) -> EvalReport:
    """
    For every posterior sample, the mean log-likelihood of the held-out entries; reported as mean and standard
    deviation over the samples.

    :param model: The fitted model.
    :param factors: The fitted variational factors.
    :param heldout_data: Observations shaped like the training data.
    :param n_samples: Number of posterior samples.
    :param rng: Random state for the posterior draws.
    :param heldout_mask: ``True`` for the entries to evaluate; every entry when omitted.
    :raises ValueError: In case no entry is held out.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least one.")
    heldout_data = np.asarray(heldout_data, dtype=float)
    if heldout_mask is None:
        heldout_mask = np.ones(heldout_data.shape, dtype=bool)
    heldout_mask = np.asarray(heldout_mask, dtype=bool)
    if not np.any(heldout_mask):
        raise ValueError("No held-out entries to evaluate.")
    z = draw_latents(factors, n_samples, rng)
    entries = model.entry_log_likelihood(z, heldout_data)
    per_sample = entries[:, heldout_mask].mean(axis=1)
    _logger.info("Predictive log-likelihood over %d entries and %d samples.", int(heldout_mask.sum()), n_samples)
    return EvalReport(
        metric="predictive_log_likelihood",
        value=float(np.mean(per_sample)),
        stddev=float(np.std(per_sample)),
        n_samples=n_samples,
    )


def heldout_count_log_likelihood(
    model,
    factors: Sequence[Factor],
    heldout_counts,
    fraction: float,
    n_samples: int,
    rng: RngState,
) -> EvalReport:
    """
    Predictive log-likelihood of counts held out by thinning each token with probability ``fraction``. The fitted
    rates describe the kept tokens, so the held-out counts are Poisson with the rates scaled by
    ``fraction / (1 - fraction)``.

    :param model: A fitted count model.
    :param factors: The fitted variational factors.
    :param heldout_counts: Held-out counts shaped like the training data.
    :param fraction: The probability with which a token was held out.
    :param n_samples: Number of posterior samples.
    :param rng: Random state for the posterior draws.
    :raises ValueError: In case the fraction lies outside ``(0, 1)`` or the shapes differ.
    :raises NumericalError: In case a held-out count has zero predicted rate.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("The held-out fraction must lie in (0, 1).")
    if n_samples < 1:
        raise ValueError("n_samples must be at least one.")
    heldout_counts = np.asarray(heldout_counts, dtype=float)
    scale = fraction / (1.0 - fraction)
    rates = model.expected_observation(draw_latents(factors, n_samples, rng)) * scale
    if rates.shape[1:] != heldout_counts.shape:
        raise ValueError("Expected held-out counts of shape %s, got %s." % (rates.shape[1:], heldout_counts.shape))
    if np.any((heldout_counts > 0) & (rates <= 0)):
        raise NumericalError("A held-out count has zero predicted rate.")
    entries = heldout_counts * np.log(np.where(rates > 0, rates, 1.0)) - rates
    entries = entries - specialfn.log_gamma(heldout_counts + 1.0)
    per_sample = entries.reshape(n_samples, -1).mean(axis=1)
    _logger.info("Held-out count log-likelihood over %d entries and %d samples.", heldout_counts.size, n_samples)
    return EvalReport(
        metric="predictive_log_likelihood",
        value=float(np.mean(per_sample)),
        stddev=float(np.std(per_sample)),
        n_samples=n_samples,
        notes={"rate_scale": scale},
    )


def perplexity_from_rates(rates, heldout) -> float:
    """
    ``exp(-sum_dw heldout_dw log p(w | d) / sum_dw heldout_dw)`` with ``p(w | d)`` the predicted rates normalized
    over the vocabulary of each document.

    :param rates: Predicted Poisson rates, documents by vocabulary.
    :param heldout: Held-out word counts of the same shape.
    :raises ValueError: In case nothing is held out or the shapes differ.
    :raises NumericalError: In case a document with held-out words has no predicted mass on them.
    """
    rates = np.asarray(rates, dtype=float)
    heldout = np.asarray(heldout, dtype=float)
    if rates.shape != heldout.shape:
        raise ValueError("Rates and held-out counts must have the same shape.")
    total = heldout.sum()
    if total <= 0:
        raise ValueError("Perplexity needs at least one held-out word.")
    mass = rates.sum(axis=-1, keepdims=True)
    documents = heldout.sum(axis=-1, keepdims=True) > 0
    if np.any(documents & (mass <= 0)):
        raise NumericalError("A document with held-out words has zero predicted rate mass.")
    used = heldout > 0
    if np.any(used & (rates <= 0)):
        raise NumericalError("A held-out word has zero predicted probability.")
    probabilities = np.where(used, rates, 1.0) / np.where(mass > 0, mass, 1.0)
    log_probability = np.sum(np.where(used, heldout * np.log(probabilities), 0.0))
    return float(np.exp(-log_probability / total))


def perplexity(model, factors: Sequence[Factor], heldout_words, rng: RngState) -> EvalReport:
    """
    Held-out perplexity of a count model from one posterior sample.
    """
    z = draw_latents(factors, 1, rng)
    value = perplexity_from_rates(model.expected_observation(z)[0], heldout_words)
    return EvalReport(
        metric="perplexity",
        value=value,
        stddev=0.0,
        n_samples=1,
        notes={"word_probability": WORD_PROBABILITY_CONVENTION},
    )
