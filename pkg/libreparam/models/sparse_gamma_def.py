"""
The sparse gamma deep exponential family.

Layers are counted bottom-up. With layer sizes ``(K_1, ..., K_L)`` and ``N x D`` count data the latent blocks are
``z1 .. zL`` of shape ``(N, K_l)`` and the weights ``w0 .. w{L-1}``, where ``w0`` has shape ``(K_1, D)`` and ``wl``
has shape ``(K_{l+1}, K_l)``::

    zL   ~ Gamma(top shape, top rate)
    zl   ~ Gamma(alpha_z, alpha_z / (z{l+1} @ wl))
    wl   ~ Gamma(weight shape, weight rate)
    x    ~ Poisson(z1 @ w0)
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from libreparam import specialfn
from libreparam.enums import Families, Supports
from libreparam.exceptions import DomainError
from libreparam.models.layout import LatentBlock, LatentLayout, ModelSpec, gamma_log_pdf
from libreparam.randkit import RngState, sample_gamma, sample_poisson

_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class SparseGammaDEFConfig:
    """
    Hyperparameters of the model. Defaults are the desk-scale sizes with the usual sparse priors.
    """

    layers: Tuple[int, ...] = (10, 5, 3)
    alpha_z: float = 0.1
    weight_prior: Tuple[float, float] = (0.1, 0.3)
    top_prior: Tuple[float, float] = (0.1, 0.1)

    def __post_init__(self):
        if len(self.layers) < 1:
            raise ValueError("At least one latent layer is needed.")
        if any(int(size) != size or size < 1 for size in self.layers):
            raise ValueError("Layer sizes must be positive integers.")
        values = (self.alpha_z,) + tuple(self.weight_prior) + tuple(self.top_prior)
        if len(self.weight_prior) != 2 or len(self.top_prior) != 2:
            raise ValueError("Priors are given as (shape, rate).")
        if not all(np.isfinite(value) and value > 0 for value in values):
            raise DomainError("All hyperparameters must be strictly positive.")


class SparseGammaDEF(ModelSpec):
    """
    Log-joint and gradient of the sparse gamma DEF. ``mask`` restricts the Poisson likelihood to observed entries.
    """

    def __init__(self, config: SparseGammaDEFConfig, data, mask: Optional[np.ndarray] = None):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2:
            raise ValueError("The sparse gamma DEF expects a count matrix.")
        if not np.all(np.isfinite(data)) or np.any(data < 0) or np.any(data != np.round(data)):
            raise DomainError("Observations must be non-negative integers.")
        self.config = config
        n_rows, n_cols = data.shape
        sizes = tuple(int(size) for size in config.layers)
        self.depth = len(sizes)
        blocks = [
            LatentBlock("z%d" % (layer + 1), (n_rows, size), Supports.POSITIVE, Families.GAMMA)
            for layer, size in enumerate(sizes)
        ]
        below = (n_cols,) + sizes[:-1]
        blocks += [
            LatentBlock("w%d" % layer, (sizes[layer], below[layer]), Supports.POSITIVE, Families.GAMMA)
            for layer in range(self.depth)
        ]
        super().__init__(LatentLayout(blocks), data, mask)

    def _rates(self, z) -> Dict[int, np.ndarray]:
        """
        ``z{l+1} @ wl`` for every layer ``l`` below the top, floored at the smallest positive float.
        """
        return {
            layer: np.maximum(z["z%d" % (layer + 1)] @ z["w%d" % layer], _TINY)
            for layer in range(1, self.depth)
        }

    def _poisson_rate(self, z) -> np.ndarray:
        return np.maximum(z["z1"] @ z["w0"], _TINY)

    def _log_joint(self, z):
        alpha = self.config.alpha_z
        top_shape, top_rate = self.config.top_prior
        weight_shape, weight_rate = self.config.weight_prior
        total = np.zeros(z["z1"].shape[0])

        def add(values):
            return total + values.reshape(values.shape[0], -1).sum(axis=1)

        total = add(gamma_log_pdf(z["z%d" % self.depth], top_shape, top_rate))
        for layer, mean in self._rates(z).items():
            total = add(gamma_log_pdf(z["z%d" % layer], alpha, alpha / mean))
        for layer in range(self.depth):
            total = add(gamma_log_pdf(z["w%d" % layer], weight_shape, weight_rate))
        return add(self._masked(self._poisson_terms(self._poisson_rate(z), self.data)))

    def _poisson_terms(self, rate: np.ndarray, data: np.ndarray) -> np.ndarray:
        return data * np.log(rate) - rate - specialfn.log_gamma(data + 1.0)

    def _grad_log_joint(self, z):
        alpha = self.config.alpha_z
        top_shape, top_rate = self.config.top_prior
        weight_shape, weight_rate = self.config.weight_prior
        grad = {}
        for layer in range(self.depth):
            grad["w%d" % layer] = (weight_shape - 1.0) / z["w%d" % layer] - weight_rate
        top = "z%d" % self.depth
        grad[top] = (top_shape - 1.0) / z[top] - top_rate
        for layer, mean in self._rates(z).items():
            name = "z%d" % layer
            grad[name] = (alpha - 1.0) / z[name] - alpha / mean
            coupling = -alpha / mean + alpha * z[name] / mean**2
            upper = "z%d" % (layer + 1)
            weight = "w%d" % layer
            grad[upper] = grad[upper] + coupling @ np.swapaxes(z[weight], -1, -2)
            grad[weight] = grad[weight] + np.swapaxes(z[upper], -1, -2) @ coupling
        residual = self._masked(self.data / self._poisson_rate(z) - 1.0)
        grad["z1"] = grad["z1"] + residual @ np.swapaxes(z["w0"], -1, -2)
        grad["w0"] = grad["w0"] + np.swapaxes(z["z1"], -1, -2) @ residual
        return {name: grad[name] for name in self.layout.names}

    def _entry_log_likelihood(self, z, data):
        return self._poisson_terms(self._poisson_rate(z), data)

    def _expected_observation(self, z):
        return self._poisson_rate(z)

    def prior_means(self):
        top_shape, top_rate = self.config.top_prior
        weight_shape, weight_rate = self.config.weight_prior
        weight_mean = weight_shape / weight_rate
        sizes = self.config.layers
        means = {"w%d" % layer: np.asarray(weight_mean) for layer in range(self.depth)}
        mean = top_shape / top_rate
        means["z%d" % self.depth] = np.asarray(mean)
        for layer in range(self.depth - 1, 0, -1):
            mean = mean * sizes[layer] * weight_mean
            means["z%d" % layer] = np.asarray(mean)
        return means

    @staticmethod
    def simulate(
        config: SparseGammaDEFConfig, shape: Tuple[int, int], rng: RngState
    ) -> Tuple[np.ndarray, Dict[str, np.ndarray]]:
        """
        Ancestral sampling of a count matrix and the latents that produced it. Layer draws are scaled unit-rate gamma
        draws floored at the smallest positive float, so every latent stays strictly positive.
        """
        n_rows, n_cols = shape
        sizes = tuple(int(size) for size in config.layers)
        depth = len(sizes)
        below = (n_cols,) + sizes[:-1]
        weight_shape, weight_rate = config.weight_prior
        top_shape, top_rate = config.top_prior
        latents = {}
        for layer in range(depth):
            latents["w%d" % layer] = sample_gamma(weight_shape, weight_rate, rng, (sizes[layer], below[layer]))
        latents["z%d" % depth] = sample_gamma(top_shape, top_rate, rng, (n_rows, sizes[-1]))
        for layer in range(depth - 1, 0, -1):
            mean = np.maximum(latents["z%d" % (layer + 1)] @ latents["w%d" % layer], _TINY)
            unit = sample_gamma(config.alpha_z, 1.0, rng, mean.shape)
            latents["z%d" % layer] = np.maximum(unit * mean / config.alpha_z, _TINY)
        rate = latents["z1"] @ latents["w0"]
        data = np.asarray(sample_poisson(rate, rng), dtype=float)
        return data, latents


def sparse_gamma_def(config: SparseGammaDEFConfig, data, mask: Optional[np.ndarray] = None) -> SparseGammaDEF:
    """
    The sparse gamma DEF conditioned on a count matrix.
    """
    return SparseGammaDEF(config, data, mask)
