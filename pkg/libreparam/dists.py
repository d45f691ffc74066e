"""
Log-densities, their derivatives with respect to the latent value and the parameters, entropies and entropy gradients
of the four variational families.

Every family is a class with only static methods; the module-level functions dispatch on :class:`Families`. Scalar
families act element-wise on arrays. The Dirichlet family treats the last axis as the event axis, so its
``log_density`` and ``entropy`` drop that axis while its derivatives keep it.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from libreparam import specialfn
from libreparam.enums import Families, Supports
from libreparam.exceptions import DomainError
from libreparam.randkit import RngState, sample_beta, sample_dirichlet, sample_gamma, sample_standard_normal
from libreparam.utils import as_float_array, as_positive_array, scalar_or_array

_HALF_LOG_TWO_PI = 0.5 * np.log(2.0 * np.pi)


class FamilyParams:
    """
    Base class of the parameter containers. Parameters are numpy arrays of the block's shape (plus the event axis for
    the Dirichlet).
    """

    names: Tuple[str, ...] = ()
    positive: Tuple[bool, ...] = ()
    shape_like: Tuple[bool, ...] = ()

    def as_dict(self) -> Dict[str, np.ndarray]:
        """
        The parameters keyed by name, in declaration order.
        """
        return {name: getattr(self, name) for name in self.names}

    @classmethod
    def from_dict(cls, values: Dict[str, np.ndarray]) -> "FamilyParams":
        """
        Build the container back from :meth:`as_dict` output.

        :raises ValueError: In case a parameter is missing or unknown.
        """
        if set(values) != set(cls.names):
            raise ValueError("Expected parameters %s, got %s." % (list(cls.names), sorted(values)))
        return cls(**{name: values[name] for name in cls.names})


@dataclass(frozen=True)
class GammaParams(FamilyParams):
    """
    Gamma distribution with ``shape`` alpha > 0 and ``rate`` beta > 0.
    """

    shape: np.ndarray
    rate: np.ndarray

    names = ("shape", "rate")
    positive = (True, True)
    shape_like = (True, False)

    def __post_init__(self):
        object.__setattr__(self, "shape", as_positive_array(self.shape, "shape"))
        object.__setattr__(self, "rate", as_positive_array(self.rate, "rate"))


@dataclass(frozen=True)
class BetaParams(FamilyParams):
    """
    Beta distribution with shape parameters ``alpha`` > 0 and ``beta`` > 0.
    """

    alpha: np.ndarray
    beta: np.ndarray

    names = ("alpha", "beta")
    positive = (True, True)
    shape_like = (True, True)

    def __post_init__(self):
        object.__setattr__(self, "alpha", as_positive_array(self.alpha, "alpha"))
        object.__setattr__(self, "beta", as_positive_array(self.beta, "beta"))


@dataclass(frozen=True)
class LogNormalParams(FamilyParams):
    """
    Log-normal distribution with location ``loc`` and scale ``scale`` > 0 of ``log(z)``.
    """

    loc: np.ndarray
    scale: np.ndarray

    names = ("loc", "scale")
    positive = (False, True)
    shape_like = (False, False)

    def __post_init__(self):
        object.__setattr__(self, "loc", as_float_array(self.loc, "loc"))
        object.__setattr__(self, "scale", as_positive_array(self.scale, "scale"))


@dataclass(frozen=True)
class DirichletParams(FamilyParams):
    """
    Dirichlet distribution with concentrations ``alpha`` of shape ``(..., K)``, ``K >= 2``.
    """

    alpha: np.ndarray

    names = ("alpha",)
    positive = (True,)
    shape_like = (True,)

    def __post_init__(self):
        alpha = as_positive_array(self.alpha, "alpha")
        if alpha.ndim == 0 or alpha.shape[-1] < 2:
            raise DomainError("A Dirichlet distribution needs at least two concentrations.")
        object.__setattr__(self, "alpha", alpha)

    @property
    def alpha0(self) -> np.ndarray:
        """
        The total concentration, summed over the last axis.
        """
        return np.sum(self.alpha, axis=-1)


def require_interior(z, support: Supports) -> np.ndarray:
    """
    Convert ``z`` into a float array and make sure it lies strictly inside the support.

    :raises DomainError: In case any entry is non-finite or on or outside a support boundary.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise DomainError("Latent values must be finite.")
    if support is Supports.UNIT_INTERVAL:
        if np.any(z <= 0.0) or np.any(z >= 1.0):
            raise DomainError("Latent values must lie strictly inside (0, 1).")
    elif np.any(z <= 0.0):
        raise DomainError("Latent values must be strictly positive.")
    return z


class GammaFamily:
    """
    ``log q = a log b - log_gamma(a) + (a - 1) log z - b z``.
    """

    params_type = GammaParams
    support = Supports.POSITIVE
    event_ndim = 0

    @staticmethod
    def log_density(params: GammaParams, z):
        z = require_interior(z, Supports.POSITIVE)
        a, b = params.shape, params.rate
        return a * np.log(b) - specialfn.log_gamma(a) + (a - 1.0) * np.log(z) - b * z

    @staticmethod
    def dlogq_dz(params: GammaParams, z):
        z = require_interior(z, Supports.POSITIVE)
        return (params.shape - 1.0) / z - params.rate

    @staticmethod
    def dlogq_dparams(params: GammaParams, z) -> Dict[str, np.ndarray]:
        z = require_interior(z, Supports.POSITIVE)
        a, b = params.shape, params.rate
        return {
            "shape": np.log(b) - specialfn.digamma(a) + np.log(z),
            "rate": a / b - z,
        }

    @staticmethod
    def entropy(params: GammaParams):
        a, b = params.shape, params.rate
        return a - np.log(b) + specialfn.log_gamma(a) + (1.0 - a) * specialfn.digamma(a)

    @staticmethod
    def dentropy_dparams(params: GammaParams) -> Dict[str, np.ndarray]:
        a, b = params.shape, params.rate
        return {
            "shape": 1.0 + (1.0 - a) * specialfn.trigamma(a),
            "rate": -1.0 / b,
        }

    @staticmethod
    def sample(params: GammaParams, rng: RngState, n: int) -> np.ndarray:
        return sample_gamma(params.shape, params.rate, rng, (n,) + np.shape(params.shape))


def _log_beta_function(a, b):
    return specialfn.log_gamma(a) + specialfn.log_gamma(b) - specialfn.log_gamma(a + b)


class BetaFamily:
    """
    ``log q = (a - 1) log z + (b - 1) log(1 - z) - log B(a, b)``.
    """

    params_type = BetaParams
    support = Supports.UNIT_INTERVAL
    event_ndim = 0

    @staticmethod
    def log_density(params: BetaParams, z):
        z = require_interior(z, Supports.UNIT_INTERVAL)
        a, b = params.alpha, params.beta
        return (a - 1.0) * np.log(z) + (b - 1.0) * np.log1p(-z) - _log_beta_function(a, b)

    @staticmethod
    def dlogq_dz(params: BetaParams, z):
        z = require_interior(z, Supports.UNIT_INTERVAL)
        return (params.alpha - 1.0) / z - (params.beta - 1.0) / (1.0 - z)

    @staticmethod
    def dlogq_dparams(params: BetaParams, z) -> Dict[str, np.ndarray]:
        z = require_interior(z, Supports.UNIT_INTERVAL)
        a, b = params.alpha, params.beta
        digamma_sum = specialfn.digamma(a + b)
        return {
            "alpha": digamma_sum - specialfn.digamma(a) + np.log(z),
            "beta": digamma_sum - specialfn.digamma(b) + np.log1p(-z),
        }

    @staticmethod
    def entropy(params: BetaParams):
        a, b = params.alpha, params.beta
        return (
            _log_beta_function(a, b)
            - (a - 1.0) * specialfn.digamma(a)
            - (b - 1.0) * specialfn.digamma(b)
            + (a + b - 2.0) * specialfn.digamma(a + b)
        )

    @staticmethod
    def dentropy_dparams(params: BetaParams) -> Dict[str, np.ndarray]:
        a, b = params.alpha, params.beta
        shared = (a + b - 2.0) * specialfn.trigamma(a + b)
        return {
            "alpha": shared - (a - 1.0) * specialfn.trigamma(a),
            "beta": shared - (b - 1.0) * specialfn.trigamma(b),
        }

    @staticmethod
    def sample(params: BetaParams, rng: RngState, n: int) -> np.ndarray:
        return sample_beta(params.alpha, params.beta, rng, (n,) + np.shape(params.alpha))


class LogNormalFamily:
    """
    ``log z`` is normal with mean ``loc`` and standard deviation ``scale``.
    """

    params_type = LogNormalParams
    support = Supports.POSITIVE
    event_ndim = 0

    @staticmethod
    def log_density(params: LogNormalParams, z):
        z = require_interior(z, Supports.POSITIVE)
        log_z = np.log(z)
        standardized = (log_z - params.loc) / params.scale
        return -log_z - np.log(params.scale) - _HALF_LOG_TWO_PI - 0.5 * standardized**2

    @staticmethod
    def dlogq_dz(params: LogNormalParams, z):
        z = require_interior(z, Supports.POSITIVE)
        return -(1.0 + (np.log(z) - params.loc) / params.scale**2) / z

    @staticmethod
    def dlogq_dparams(params: LogNormalParams, z) -> Dict[str, np.ndarray]:
        z = require_interior(z, Supports.POSITIVE)
        centered = np.log(z) - params.loc
        return {
            "loc": centered / params.scale**2,
            "scale": -1.0 / params.scale + centered**2 / params.scale**3,
        }

    @staticmethod
    def entropy(params: LogNormalParams):
        return params.loc + 0.5 + np.log(params.scale) + _HALF_LOG_TWO_PI

    @staticmethod
    def dentropy_dparams(params: LogNormalParams) -> Dict[str, np.ndarray]:
        return {"loc": np.ones_like(params.loc), "scale": 1.0 / params.scale}

    @staticmethod
    def sample(params: LogNormalParams, rng: RngState, n: int) -> np.ndarray:
        shape = (n,) + np.broadcast_shapes(np.shape(params.loc), np.shape(params.scale))
        return np.exp(params.loc + params.scale * sample_standard_normal(rng, shape))


class DirichletFamily:
    """
    ``log q = log_gamma(a0) - sum log_gamma(a_k) + sum (a_k - 1) log z_k``, evaluated on any positive vector ``z``.
    """

    params_type = DirichletParams
    support = Supports.SIMPLEX
    event_ndim = 1

    @staticmethod
    def log_density(params: DirichletParams, z):
        z = require_interior(z, Supports.SIMPLEX)
        a = params.alpha
        return (
            specialfn.log_gamma(params.alpha0)
            - np.sum(specialfn.log_gamma(a), axis=-1)
            + np.sum((a - 1.0) * np.log(z), axis=-1)
        )

    @staticmethod
    def dlogq_dz(params: DirichletParams, z):
        z = require_interior(z, Supports.SIMPLEX)
        return (params.alpha - 1.0) / z

    @staticmethod
    def dlogq_dparams(params: DirichletParams, z) -> Dict[str, np.ndarray]:
        z = require_interior(z, Supports.SIMPLEX)
        a = params.alpha
        digamma_total = np.expand_dims(specialfn.digamma(params.alpha0), -1)
        return {"alpha": digamma_total - specialfn.digamma(a) + np.log(z)}

    @staticmethod
    def entropy(params: DirichletParams):
        a = params.alpha
        a0 = params.alpha0
        k = a.shape[-1]
        log_beta = np.sum(specialfn.log_gamma(a), axis=-1) - specialfn.log_gamma(a0)
        return log_beta + (a0 - k) * specialfn.digamma(a0) - np.sum((a - 1.0) * specialfn.digamma(a), axis=-1)

    @staticmethod
    def dentropy_dparams(params: DirichletParams) -> Dict[str, np.ndarray]:
        a = params.alpha
        a0 = params.alpha0
        k = a.shape[-1]
        shared = np.expand_dims((a0 - k) * specialfn.trigamma(a0), -1)
        return {"alpha": shared - (a - 1.0) * specialfn.trigamma(a)}

    @staticmethod
    def sample(params: DirichletParams, rng: RngState, n: int) -> np.ndarray:
        return sample_dirichlet(params.alpha, rng, (n,))


_FAMILIES = {
    Families.GAMMA: GammaFamily,
    Families.BETA: BetaFamily,
    Families.LOGNORMAL: LogNormalFamily,
    Families.DIRICHLET: DirichletFamily,
}


def family_class(family: Families):
    """
    The implementation class of a family.

    :raises ValueError: In case the family is not known.
    """
    if family not in _FAMILIES:
        raise ValueError("Unknown variational family %r." % (family,))
    return _FAMILIES[family]


def family_of(params: FamilyParams) -> Families:
    """
    The family a parameter container belongs to.
    """
    for family, implementation in _FAMILIES.items():
        if isinstance(params, implementation.params_type):
            return family
    raise TypeError("Unknown parameter container %r." % type(params).__name__)


def _checked(family: Families, params: FamilyParams):
    implementation = family_class(family)
    if not isinstance(params, implementation.params_type):
        raise TypeError(
            "The %s family expects %s, got %s."
            % (family.value, implementation.params_type.__name__, type(params).__name__)
        )
    return implementation


def log_density(family: Families, params: FamilyParams, z):
    """
    Exact log-density including the normalizing constant.

    :raises DomainError: In case ``z`` lies outside the support of the family.
    """
    return scalar_or_array(_checked(family, params).log_density(params, z))


def dlogq_dz(family: Families, params: FamilyParams, z):
    """
    Derivative of the log-density with respect to the latent value.

    :raises DomainError: In case ``z`` lies outside the interior of the support.
    """
    return scalar_or_array(_checked(family, params).dlogq_dz(params, z))


def dlogq_dparams(family: Families, params: FamilyParams, z) -> Dict[str, np.ndarray]:
    """
    The score, i.e. the derivatives of the log-density with respect to each parameter.

    :raises DomainError: In case ``z`` lies outside the interior of the support.
    """
    return _checked(family, params).dlogq_dparams(params, z)


def entropy(family: Families, params: FamilyParams):
    """
    Closed-form entropy.
    """
    return scalar_or_array(_checked(family, params).entropy(params))


def dentropy_dparams(family: Families, params: FamilyParams) -> Dict[str, np.ndarray]:
    """
    Exact gradient of the entropy with respect to each parameter.
    """
    return _checked(family, params).dentropy_dparams(params)


def sample(family: Families, params: FamilyParams, rng: RngState, n: int) -> np.ndarray:
    """
    Draw ``n`` samples. The result has the sample axis first.
    """
    if n < 1:
        raise ValueError("At least one sample must be drawn.")
    return _checked(family, params).sample(params, rng, n)


def check_support(family: Families, z) -> np.ndarray:
    """
    Boolean mask over the leading sample axis which is ``True`` for samples lying strictly inside the support.
    """
    z = np.asarray(z, dtype=float)
    support = family_class(family).support
    inside = np.isfinite(z) & (z > 0.0)
    if support is Supports.UNIT_INTERVAL:
        inside &= z < 1.0
    return inside.reshape(z.shape[0], -1).all(axis=1)
