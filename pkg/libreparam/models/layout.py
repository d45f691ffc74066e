"""
Latent layouts and the base class every model derives from.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from libreparam.dists import BetaParams, DirichletParams, GammaParams, LogNormalParams, require_interior
from libreparam.enums import Families, Supports, TransformKinds
from libreparam.estimators import Factor
from libreparam.exceptions import DomainError
from libreparam.specialfn import log_gamma
from libreparam.transforms import DEFAULT_TRANSFORMS

_FAMILY_SUPPORTS = {
    Families.GAMMA: Supports.POSITIVE,
    Families.LOGNORMAL: Supports.POSITIVE,
    Families.BETA: Supports.UNIT_INTERVAL,
    Families.DIRICHLET: Supports.SIMPLEX,
}


def family_support(family: Families) -> Supports:
    """
    The support a variational family lives on.
    """
    return _FAMILY_SUPPORTS[family]


@dataclass(frozen=True)
class LatentBlock:
    """
    A named array of latent variables sharing one support.

    :param name: Unique name within the layout.
    :param shape: Shape of one draw of the block, without the sample axis.
    :param support: Where every entry lives.
    :param family: The variational family bound to the block unless overridden.
    """

    name: str
    shape: Tuple[int, ...]
    support: Supports
    family: Families

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise TypeError("A latent block needs a non-empty name.")
        if any(int(size) < 1 for size in self.shape):
            raise ValueError("Block %s: every dimension must be at least one." % self.name)
        if family_support(self.family) is not self.support:
            raise ValueError("Block %s: the %s family does not live on this support." % (self.name, self.family.value))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=int))


class LatentLayout:
    """
    Ordered collection of latent blocks with unique names.
    """

    def __init__(self, blocks: Sequence[LatentBlock]):
        names = [block.name for block in blocks]
        if len(set(names)) != len(names):
            raise ValueError("Latent block names must be unique, got %s." % names)
        self._blocks = tuple(blocks)

    def __iter__(self):
        return iter(self._blocks)

    def __len__(self) -> int:
        return len(self._blocks)

    def __getitem__(self, name: str) -> LatentBlock:
        for block in self._blocks:
            if block.name == name:
                return block
        raise KeyError(name)

    @property
    def names(self) -> List[str]:
        return [block.name for block in self._blocks]

    @property
    def total_size(self) -> int:
        """
        Number of scalar latent variables over all blocks.
        """
        return sum(block.size for block in self._blocks)


class ModelSpec:
    """
    A model's log-joint ``f(z) = log p(x, z)`` and its gradient with respect to the latent variables.

    Latent values are dictionaries keyed by block name with a leading sample axis, so ``log_joint`` returns one value
    per sample. Subclasses implement ``_log_joint``, ``_grad_log_joint``, ``_entry_log_likelihood``,
    ``_expected_observation`` and ``prior_means``.
    """

    def __init__(self, layout: LatentLayout, data: np.ndarray, mask: Optional[np.ndarray] = None):
        self._layout = layout
        self._data = data
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != data.shape:
                raise ValueError("The observation mask must have the shape of the data %s." % (data.shape,))
        self._mask = mask

    @property
    def layout(self) -> LatentLayout:
        """
        The latent blocks of the model.
        """
        return self._layout

    @property
    def data(self) -> np.ndarray:
        """
        The observations the model conditions on.
        """
        return self._data

    @property
    def mask(self) -> Optional[np.ndarray]:
        """
        ``True`` for the observed entries, ``None`` if every entry is observed.
        """
        return self._mask

    def _masked(self, values: np.ndarray) -> np.ndarray:
        if self._mask is None:
            return values
        return np.where(self._mask, values, 0.0)

    def check_latents(self, z: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """
        Validate a latent dictionary against the layout.

        :raises KeyError: In case a block is missing.
        :raises ValueError: In case a block has the wrong shape.
        :raises DomainError: In case a value lies outside the support of its block.
        """
        checked = {}
        sample_count = None
        for block in self._layout:
            if block.name not in z:
                raise KeyError("Latent block %s is missing." % block.name)
            value = np.asarray(z[block.name], dtype=float)
            if value.shape[1:] != tuple(block.shape):
                raise ValueError(
                    "Block %s: expected shape (S, %s), got %s."
                    % (block.name, ", ".join(str(size) for size in block.shape), value.shape)
                )
            if sample_count is not None and value.shape[0] != sample_count:
                raise ValueError("All latent blocks must hold the same number of samples.")
            sample_count = value.shape[0]
            try:
                checked[block.name] = require_interior(value, block.support)
            except DomainError as error:
                raise DomainError("Block %s: %s" % (block.name, error)) from error
        return checked

    def log_joint(self, z: Dict[str, np.ndarray]) -> np.ndarray:
        """
        ``log p(x, z)`` for every sample.

        :raises DomainError: In case a latent value lies outside its support.
        """
        return self._log_joint(self.check_latents(z))

    def grad_log_joint(self, z: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        """
        Gradient of :meth:`log_joint` with respect to every latent block.

        :raises DomainError: In case a latent value lies outside its support.
        """
        return self._grad_log_joint(self.check_latents(z))

    def entry_log_likelihood(self, z: Dict[str, np.ndarray], data: np.ndarray) -> np.ndarray:
        """
        ``log p(x_nd | z)`` for every sample and every entry of ``data``, which must be shaped like the training
        data.
        """
        data = np.asarray(data, dtype=float)
        if data.shape != self._data.shape:
            raise ValueError("Expected data of shape %s, got %s." % (self._data.shape, data.shape))
        return self._entry_log_likelihood(self.check_latents(z), data)

    def expected_observation(self, z: Dict[str, np.ndarray]) -> np.ndarray:
        """
        Mean of every observation given the latent values, one matrix per sample.
        """
        return self._expected_observation(self.check_latents(z))

    def prior_means(self) -> Dict[str, np.ndarray]:
        """
        Prior mean of every positive block, used to initialize the variational rates.
        """
        raise NotImplementedError

    def initial_factors(
        self, overrides: Optional[Dict[str, Tuple[Families, TransformKinds]]] = None
    ) -> List[Factor]:
        """
        Mean-field factors to start the optimization from. Gamma factors get shape one and their prior mean; beta
        factors start uniform; log-normal factors get unit scale and the prior mean.

        :param overrides: Family and transformation per block name, replacing the block defaults.
        :raises ValueError: In case an override names an unknown block or a family that does not fit its support.
        """
        overrides = overrides or {}
        unknown = set(overrides) - set(self._layout.names)
        if unknown:
            raise ValueError("Unknown latent block(s): %s." % ", ".join(sorted(unknown)))
        means = {}
        factors = []
        for block in self._layout:
            family, transform = overrides.get(block.name, (block.family, DEFAULT_TRANSFORMS[block.family]))
            if family_support(family) is not block.support:
                raise ValueError("Block %s: the %s family does not fit its support." % (block.name, family.value))
            if family in (Families.GAMMA, Families.LOGNORMAL) and not means:
                means = self.prior_means()
            ones = np.ones(block.shape)
            if family is Families.GAMMA:
                params = GammaParams(shape=ones, rate=1.0 / np.broadcast_to(means[block.name], block.shape))
            elif family is Families.LOGNORMAL:
                params = LogNormalParams(loc=np.log(np.broadcast_to(means[block.name], block.shape)) - 0.5, scale=ones)
            elif family is Families.BETA:
                params = BetaParams(alpha=ones, beta=ones)
            else:
                params = DirichletParams(alpha=ones)
            factors.append(Factor(block.name, family, params, transform))
        return factors

    def _log_joint(self, z):
        raise NotImplementedError

    def _grad_log_joint(self, z):
        raise NotImplementedError

    def _entry_log_likelihood(self, z, data):
        raise NotImplementedError

    def _expected_observation(self, z):
        raise NotImplementedError


def gamma_log_pdf(x: np.ndarray, shape, rate) -> np.ndarray:
    """
    Element-wise gamma log-density for fixed hyperparameters, without input validation.
    """
    return shape * np.log(rate) - log_gamma(shape) + (shape - 1.0) * np.log(x) - rate * x
