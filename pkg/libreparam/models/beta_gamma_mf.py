"""
Beta-gamma matrix factorization for binary data::

    z_nk ~ Uniform(0, 1)
    w_kd ~ Gamma(weight shape, weight rate)
    x_nd ~ Bernoulli(sigmoid(sum_k logit(z_nk) w_kd))
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from libreparam.enums import Families, Supports
from libreparam.exceptions import DomainError
from libreparam.models.layout import LatentBlock, LatentLayout, ModelSpec, gamma_log_pdf
from libreparam.randkit import RngState, sample_bernoulli, sample_beta, sample_gamma
from libreparam.utils import logit, sigmoid, softplus


@dataclass(frozen=True)
class BetaGammaMFConfig:
    """
    Latent dimension and weight prior.
    """

    latent_dim: int = 5
    weight_prior: Tuple[float, float] = (0.1, 0.3)

    def __post_init__(self):
        if int(self.latent_dim) != self.latent_dim or self.latent_dim < 1:
            raise ValueError("latent_dim must be a positive integer.")
        if len(self.weight_prior) != 2:
            raise ValueError("The weight prior is given as (shape, rate).")
        if not all(np.isfinite(value) and value > 0 for value in self.weight_prior):
            raise DomainError("The weight prior must be strictly positive.")


class BetaGammaMF(ModelSpec):
    """
    Log-joint and gradient of the beta-gamma factorization. The uniform prior on ``z`` contributes nothing to the
    log-joint.
    """

    def __init__(self, config: BetaGammaMFConfig, data, mask: Optional[np.ndarray] = None):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2:
            raise ValueError("The beta-gamma factorization expects a binary matrix.")
        if not np.all((data == 0) | (data == 1)):
            raise DomainError("Observations must be bits.")
        self.config = config
        n_rows, n_cols = data.shape
        k = int(config.latent_dim)
        layout = LatentLayout(
            [
                LatentBlock("z", (n_rows, k), Supports.UNIT_INTERVAL, Families.BETA),
                LatentBlock("w", (k, n_cols), Supports.POSITIVE, Families.GAMMA),
            ]
        )
        super().__init__(layout, data, mask)

    @staticmethod
    def _link(z) -> np.ndarray:
        return logit(z["z"]) @ z["w"]

    def _log_joint(self, z):
        shape, rate = self.config.weight_prior
        link = self._link(z)
        prior = gamma_log_pdf(z["w"], shape, rate)
        likelihood = self._masked(self.data * link - softplus(link))
        return prior.reshape(prior.shape[0], -1).sum(axis=1) + likelihood.reshape(likelihood.shape[0], -1).sum(axis=1)

    def _grad_log_joint(self, z):
        shape, rate = self.config.weight_prior
        logits = logit(z["z"])
        residual = self._masked(self.data - sigmoid(logits @ z["w"]))
        return {
            "z": (residual @ np.swapaxes(z["w"], -1, -2)) / (z["z"] * (1.0 - z["z"])),
            "w": np.swapaxes(logits, -1, -2) @ residual + (shape - 1.0) / z["w"] - rate,
        }

    def _entry_log_likelihood(self, z, data):
        link = self._link(z)
        return data * link - softplus(link)

    def _expected_observation(self, z):
        return sigmoid(self._link(z))

    def prior_means(self):
        shape, rate = self.config.weight_prior
        return {"w": np.asarray(shape / rate)}

    @staticmethod
    def simulate(
        config: BetaGammaMFConfig, shape: Tuple[int, int], rng: RngState
    ) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """
        Ancestral sampling of a binary matrix and the latents that produced it.
        """
        n_rows, n_cols = shape
        k = int(config.latent_dim)
        weight_shape, weight_rate = config.weight_prior
        latents = {
            "z": sample_beta(1.0, 1.0, rng, (n_rows, k)),
            "w": sample_gamma(weight_shape, weight_rate, rng, (k, n_cols)),
        }
        probabilities = sigmoid(logit(latents["z"]) @ latents["w"])
        data = np.asarray(sample_bernoulli(probabilities, rng), dtype=float)
        return data, latents


def beta_gamma_mf(config: BetaGammaMFConfig, data, mask: Optional[np.ndarray] = None) -> BetaGammaMF:
    """
    The beta-gamma factorization conditioned on a binary matrix.
    """
    return BetaGammaMF(config, data, mask)
