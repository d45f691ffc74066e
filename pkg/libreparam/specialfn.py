"""
Scalar special functions: log-gamma and the digamma function with its first two derivatives.

The polygamma functions shift their argument upwards with the recurrence relations until it reaches
``_ASYMPTOTIC_START`` and then use the asymptotic expansion in Bernoulli numbers. All functions accept scalars or
arrays and return the same kind of value.
"""

import numpy as np
from scipy import special

from libreparam.exceptions import DomainError
from libreparam.utils import scalar_or_array

EULER_MASCHERONI = 0.57721566490153286061

_ASYMPTOTIC_START = 6.0

# B_2k / (2k) for k = 1..7
_DIGAMMA_COEFFICIENTS = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# B_2k for k = 1..7
_TRIGAMMA_COEFFICIENTS = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)

# (2k + 1) * B_2k for k = 1..7
_TETRAGAMMA_COEFFICIENTS = (
    1.0 / 2.0,
    -1.0 / 6.0,
    1.0 / 6.0,
    -3.0 / 10.0,
    5.0 / 6.0,
    -691.0 / 210.0,
    35.0 / 2.0,
)


def _validate(x) -> np.ndarray:
    """
    Convert the argument into a float array and reject anything outside of the positive reals.

    :raises DomainError: In case any entry is non-finite or not strictly positive.
    """
    array = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(array)) or np.any(array <= 0):
        raise DomainError("Special functions are only defined for finite, strictly positive arguments.")
    return array


def _shift(x: np.ndarray, step):
    """
    Apply ``step(value)`` for every integer shift needed to bring ``x`` above the asymptotic threshold.

    :return: The shifted arguments and the accumulated recurrence terms.
    """
    shifted = x.reshape(-1).copy()
    accumulated = np.zeros_like(shifted)
    mask = shifted < _ASYMPTOTIC_START
    while np.any(mask):
        accumulated[mask] += step(shifted[mask])
        shifted[mask] += 1.0
        mask = shifted < _ASYMPTOTIC_START
    return shifted.reshape(x.shape), accumulated.reshape(x.shape)


def _series(inverse_square: np.ndarray, coefficients) -> np.ndarray:
    """
    Evaluate ``sum_k c_k * inverse_square**k`` for k starting at one, by Horner's rule.
    """
    total = np.zeros_like(inverse_square)
    for coefficient in reversed(coefficients):
        total = (total + coefficient) * inverse_square
    return total


def log_gamma(x):
    """
    Natural logarithm of the gamma function.

    :param x: Strictly positive argument(s).
    :raises DomainError: In case an argument is non-finite or not strictly positive.
    """
    return scalar_or_array(special.gammaln(_validate(x)))


def digamma(x):
    """
    The digamma function, the first derivative of :func:`log_gamma`.

    :param x: Strictly positive argument(s).
    :raises DomainError: In case an argument is non-finite or not strictly positive.
    """
    x = _validate(x)
    shifted, accumulated = _shift(x, lambda value: -1.0 / value)
    inverse = 1.0 / shifted
    value = np.log(shifted) - 0.5 * inverse - _series(inverse * inverse, _DIGAMMA_COEFFICIENTS)
    return scalar_or_array(value + accumulated)


def trigamma(x):
    """
    The trigamma function, the second derivative of :func:`log_gamma`. Always positive.

    :param x: Strictly positive argument(s).
    :raises DomainError: In case an argument is non-finite or not strictly positive.
    """
    x = _validate(x)
    shifted, accumulated = _shift(x, lambda value: 1.0 / (value * value))
    inverse = 1.0 / shifted
    value = inverse + 0.5 * inverse**2 + inverse * _series(inverse * inverse, _TRIGAMMA_COEFFICIENTS)
    return scalar_or_array(value + accumulated)


def tetragamma(x):
    """
    The tetragamma function, the third derivative of :func:`log_gamma`. Always negative.

    :param x: Strictly positive argument(s).
    :raises DomainError: In case an argument is non-finite or not strictly positive.
    """
    x = _validate(x)
    shifted, accumulated = _shift(x, lambda value: -2.0 / (value * value * value))
    inverse = 1.0 / shifted
    inverse_square = inverse * inverse
    value = -inverse_square - inverse_square * inverse - inverse_square * _series(
        inverse_square, _TETRAGAMMA_COEFFICIENTS
    )
    return scalar_or_array(value + accumulated)
