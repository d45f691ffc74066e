import numpy as np
import pytest

from libreparam import utils
from libreparam.exceptions import DomainError
from tests.conftest import does_not_raise


@pytest.mark.parametrize(
    "value,value_type,expected,raises",
    [
        (None, str, "", does_not_raise()),
        (None, int, 0, does_not_raise()),
        (None, float, 0.0, does_not_raise()),
        (None, bool, False, does_not_raise()),
        (None, list, [], does_not_raise()),
        (None, dict, {}, does_not_raise()),
        ({"a": 1}, dict, {"a": 1}, does_not_raise()),
        (3, int, 3, does_not_raise()),
        (None, tuple, None, pytest.raises(TypeError)),
        ({"a": 1}, set, None, pytest.raises(TypeError)),
    ],
)
def test_none_to_empty(value, value_type, expected, raises):
    # Act & Assert
    with raises:
        assert utils.none_to_empty(value, value_type) == expected


@pytest.mark.parametrize(
    "value,raises",
    [
        ([1.0, 2.0], does_not_raise()),
        ([1.0, 0.0], pytest.raises(DomainError)),
        ([1.0, np.inf], pytest.raises(DomainError)),
        (np.nan, pytest.raises(DomainError)),
    ],
)
def test_as_positive_array(value, raises):
    # Act & Assert
    with raises:
        utils.as_positive_array(value, "value")


def test_softplus_is_stable():
    # Arrange
    values = np.array([-800.0, -1.0, 0.0, 1.0, 800.0])

    # Act
    result = utils.softplus(values)

    # Assert
    assert np.all(np.isfinite(result))
    assert result[2] == pytest.approx(np.log(2.0))
    assert result[4] == pytest.approx(800.0)
    np.testing.assert_allclose(utils.inverse_softplus(result[1:]), values[1:], rtol=1e-12, atol=1e-12)


def test_scalar_or_array():
    # Act & Assert
    assert isinstance(utils.scalar_or_array(np.asarray(1.5)), float)
    assert isinstance(utils.scalar_or_array(np.ones(2)), np.ndarray)


def test_logit_and_sigmoid():
    # Arrange
    values = np.array([1e-6, 0.25, 0.5, 0.999])

    # Act
    result = utils.sigmoid(utils.logit(values))

    # Assert
    np.testing.assert_allclose(result, values, rtol=1e-12)
