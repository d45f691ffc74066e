"""
Deterministic, splittable random number generation and the samplers every model and variational family draws from.

An :class:`RngState` owns a numpy ``Generator`` backed by PCG64. Substreams are derived through ``SeedSequence``
spawning, so the same seed always reproduces the same streams bit for bit.
"""

import logging
import zlib
from typing import List, Tuple, Union

import numpy as np

from libreparam.exceptions import DomainError, NumericalError
from libreparam.utils import as_float_array, as_positive_array

_logger = logging.getLogger(__name__)

SizeType = Union[None, int, Tuple[int, ...]]

_MAX_REDRAWS = 64


class RngState:
    """
    A single-owner random state. Do not share one instance between workers; hand each worker its own
    :meth:`split` substream instead.
    """

    def __init__(self, seed_sequence: np.random.SeedSequence):
        self._seed_sequence = seed_sequence
        self._generator = np.random.Generator(np.random.PCG64(seed_sequence))

    @classmethod
    def from_seed(cls, seed: int) -> "RngState":
        """
        Create a state from an unsigned 64-bit seed.

        :param seed: The seed. Must be in ``[0, 2**64)``.
        :raises DomainError: In case the seed is negative or too large.
        """
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
            raise TypeError("The seed must be an integer.")
        if seed < 0 or seed >= 2**64:
            raise DomainError("The seed must be an unsigned 64-bit integer.")
        return cls(np.random.SeedSequence(int(seed)))

    @property
    def generator(self) -> np.random.Generator:
        """
        The numpy generator behind this state.
        """
        return self._generator

    def split(self, count: int) -> List["RngState"]:
        """
        Spawn independent, reproducible substreams. Repeated calls yield fresh substreams.

        :param count: How many substreams to create.
        """
        return [RngState(child) for child in self._seed_sequence.spawn(count)]

    def substream(self, name: str) -> "RngState":
        """
        A substream identified by name. The same name always yields the same stream for a given seed, independent of
        how many other substreams were requested before.

        :param name: For example ``"data"``, ``"init"``, ``"training"`` or ``"eval"``.
        """
        key = self._seed_sequence.spawn_key + (zlib.crc32(name.encode("utf-8")),)
        return RngState(np.random.SeedSequence(self._seed_sequence.entropy, spawn_key=key))

    def raw_uint64(self, size: int) -> np.ndarray:
        """
        Raw 64-bit outputs of the underlying bit generator.
        """
        return self._generator.bit_generator.random_raw(size)


def uniform(rng: RngState, size: SizeType = None):
    """
    Uniform draws on the open interval ``(0, 1)``. Exact zeros are redrawn.

    :param rng: The random state to draw from.
    :param size: Output shape. ``None`` returns a float.
    """
    if size is None:
        value = rng.generator.random()
        while value <= 0.0:
            value = rng.generator.random()
        return value
    draws = rng.generator.random(size)
    flat = draws.reshape(-1)
    zero = flat <= 0.0
    while np.any(zero):
        flat[zero] = rng.generator.random(int(np.count_nonzero(zero)))
        zero = flat <= 0.0
    return flat.reshape(draws.shape)


def sample_standard_normal(rng: RngState, size: SizeType = None):
    """
    Standard normal draws.
    """
    return rng.generator.standard_normal(size)


def _broadcast_size(size: SizeType, *parameters: np.ndarray) -> Tuple[int, ...]:
    if size is None:
        return np.broadcast_shapes(*(parameter.shape for parameter in parameters))
    if isinstance(size, (int, np.integer)):
        return (int(size),)
    return tuple(size)


def _redraw_until(draw, parameters: Tuple[np.ndarray, ...], is_bad, what: str) -> np.ndarray:
    """
    Draw once for every entry of the flat parameter arrays and redraw the entries ``is_bad`` flags.

    :raises NumericalError: In case entries are still flagged after ``_MAX_REDRAWS`` rounds.
    """
    draws = np.asarray(draw(*parameters), dtype=float)
    bad = is_bad(draws)
    redraws = 0
    while np.any(bad):
        redraws += 1
        if redraws > _MAX_REDRAWS:
            raise NumericalError("%s draws keep hitting the boundary of their support." % what)
        draws[bad] = draw(*(parameter[bad] for parameter in parameters))
        bad = is_bad(draws)
    if redraws:
        _logger.debug("Redrew %s samples on the support boundary %d time(s).", what, redraws)
    return draws


def _finish(draws: np.ndarray, out_shape: Tuple[int, ...], size: SizeType):
    draws = draws.reshape(out_shape)
    if size is None and draws.ndim == 0:
        return float(draws)
    return draws


def sample_gamma(shape, rate, rng: RngState, size: SizeType = None):
    """
    Gamma draws in the shape/rate parameterization. Shapes below one are boosted: a draw with shape ``alpha + 1`` is
    multiplied by ``u ** (1 / alpha)``. The product is formed in log space. Draws that underflow to zero are redrawn,
    so every returned value is strictly positive.

    :param shape: Shape parameter(s) alpha > 0.
    :param rate: Rate parameter(s) beta > 0.
    :param rng: The random state to draw from.
    :param size: Output shape; defaults to the broadcast shape of the parameters.
    :raises DomainError: In case a parameter is not strictly positive.
    :raises NumericalError: In case draws keep underflowing.
    """
    shape = as_positive_array(shape, "shape")
    rate = as_positive_array(rate, "rate")
    out_shape = _broadcast_size(size, shape, rate)
    flat_shape = np.broadcast_to(shape, out_shape).reshape(-1)
    flat_rate = np.broadcast_to(rate, out_shape).reshape(-1)

    def draw(alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
        boosted = alpha < 1.0
        log_draws = np.log(rng.generator.standard_gamma(np.where(boosted, alpha + 1.0, alpha)))
        if np.any(boosted):
            log_u = np.log(uniform(rng, alpha.shape))
            log_draws = log_draws + np.where(boosted, log_u / alpha, 0.0)
        return np.exp(log_draws - np.log(beta))

    draws = _redraw_until(draw, (flat_shape, flat_rate), lambda values: values <= 0.0, "gamma")
    return _finish(draws, out_shape, size)


def sample_beta(alpha, beta, rng: RngState, size: SizeType = None):
    """
    Beta draws as the ratio ``g1 / (g1 + g2)`` of two unit-rate gamma draws. Draws that round to an endpoint are
    redrawn, so every returned value lies strictly inside ``(0, 1)``.

    :raises DomainError: In case a parameter is not strictly positive.
    :raises NumericalError: In case draws keep hitting an endpoint.
    """
    alpha = as_positive_array(alpha, "alpha")
    beta = as_positive_array(beta, "beta")
    out_shape = _broadcast_size(size, alpha, beta)
    flat_alpha = np.broadcast_to(alpha, out_shape).reshape(-1)
    flat_beta = np.broadcast_to(beta, out_shape).reshape(-1)

    def draw(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        first = sample_gamma(a, 1.0, rng, a.shape)
        second = sample_gamma(b, 1.0, rng, b.shape)
        return first / (first + second)

    draws = _redraw_until(
        draw, (flat_alpha, flat_beta), lambda values: (values <= 0.0) | (values >= 1.0), "beta"
    )
    return _finish(draws, out_shape, size)


def sample_dirichlet(alpha, rng: RngState, size: SizeType = None) -> np.ndarray:
    """
    Dirichlet draws as normalized unit-rate gamma draws along the last axis.

    :param alpha: Concentrations with shape ``(..., K)``, ``K >= 2``.
    :param size: Leading batch shape prepended to ``alpha.shape``.
    :raises DomainError: In case alpha is not a positive vector of length two or more.
    """
    alpha = as_positive_array(alpha, "alpha")
    if alpha.ndim == 0 or alpha.shape[-1] < 2:
        raise DomainError("A Dirichlet distribution needs at least two concentrations.")
    if size is None:
        out_shape = alpha.shape
    elif isinstance(size, (int, np.integer)):
        out_shape = (int(size),) + alpha.shape
    else:
        out_shape = tuple(size) + alpha.shape
    gammas = sample_gamma(np.broadcast_to(alpha, out_shape), 1.0, rng, out_shape)
    return gammas / np.sum(gammas, axis=-1, keepdims=True)


def sample_poisson(lam, rng: RngState, size: SizeType = None):
    """
    Poisson draws.

    :raises DomainError: In case a rate is negative or not finite.
    """
    lam = as_float_array(lam, "lam")
    if np.any(lam < 0):
        raise DomainError("The Poisson rate must be non-negative.")
    return rng.generator.poisson(lam, size)


def sample_bernoulli(p, rng: RngState, size: SizeType = None):
    """
    Bernoulli draws as ``uniform < p``.

    :raises DomainError: In case a probability lies outside ``[0, 1]``.
    """
    p = as_float_array(p, "p")
    if np.any(p < 0) or np.any(p > 1):
        raise DomainError("The Bernoulli probability must lie in [0, 1].")
    out_shape = _broadcast_size(size, p)
    draws = (uniform(rng, out_shape) < p).astype(int)
    if size is None and draws.ndim == 0:
        return int(draws)
    return draws
