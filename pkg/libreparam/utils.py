"""
Helper methods which are not directly related to any class or module in this library.
"""

import numpy as np
from scipy import special

from libreparam.exceptions import DomainError


_EMPTY_TYPES = (str, int, float, bool, list, dict)


def none_to_empty(value, value_type: type):
    """
    Read a JSON ``null`` as the empty value of ``value_type``, for example ``{}`` for an omitted section. Other values
    pass through unchanged.

    :raises TypeError: In case ``value_type`` has no empty value here.
    """
    if value_type not in _EMPTY_TYPES:
        raise TypeError("No empty value is defined for %s." % getattr(value_type, "__name__", value_type))
    return value_type() if value is None else value


def as_float_array(value, name: str) -> np.ndarray:
    """
    Convert a scalar or array-like into a float array and make sure every entry is finite.

    :param value: The value to convert.
    :param name: Used in the error message.
    :raises DomainError: In case any entry is NaN or infinite.
    """
    array = np.asarray(value, dtype=float)
    if not np.all(np.isfinite(array)):
        raise DomainError("%s must be finite." % name)
    return array


def as_positive_array(value, name: str) -> np.ndarray:
    """
    Convert a scalar or array-like into a float array with strictly positive, finite entries.

    :param value: The value to convert.
    :param name: Used in the error message.
    :raises DomainError: In case any entry is not finite or not strictly positive.
    """
    array = as_float_array(value, name)
    if np.any(array <= 0):
        raise DomainError("%s must be strictly positive." % name)
    return array


def scalar_or_array(value: np.ndarray):
    """
    Unwrap zero-dimensional arrays into Python floats so that scalar calls get scalar answers.
    """
    if np.ndim(value) == 0:
        return float(value)
    return value


def softplus(value):
    """
    ``log(1 + exp(value))`` without overflow.
    """
    return np.logaddexp(0.0, value)


def inverse_softplus(value):
    """
    ``log(exp(value) - 1)`` for strictly positive ``value``, stable for large and tiny inputs.

    :raises DomainError: In case any entry is not strictly positive.
    """
    value = as_positive_array(value, "value")
    large = value > 20.0
    safe = np.where(large, 1.0, value)
    return np.where(large, value + np.log(-np.expm1(-value)), np.log(np.expm1(safe)))


def sigmoid(value):
    """
    The logistic function.
    """
    return special.expit(value)


def logit(value):
    """
    ``log(value / (1 - value))``.
    """
    return special.logit(value)
