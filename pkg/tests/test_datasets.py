import json

import numpy as np
import pytest

from libreparam import datasets
from libreparam.datasets import DatasetHandle
from libreparam.enums import DataFormats, DataTypes
from libreparam.exceptions import DatasetParseError
from tests.conftest import does_not_raise


@pytest.mark.parametrize(
    "values,expected",
    [
        ([[0.0, 1.0], [1.0, 1.0]], DataTypes.BINARY),
        ([[0.0, 2.0], [1.0, 7.0]], DataTypes.COUNT),
        ([[0.5, 2.0], [1.0, 7.0]], DataTypes.REAL),
        ([[-1.0, 2.0]], DataTypes.REAL),
    ],
)
def test_infer_dtype(values, expected):
    # Act & Assert
    assert datasets.infer_dtype(np.asarray(values)) is expected


@pytest.mark.parametrize(
    "values,dtype,raises",
    [
        ([[0.0, 1.0]], DataTypes.BINARY, does_not_raise()),
        ([[0.0, 2.0]], DataTypes.BINARY, pytest.raises(DatasetParseError)),
        ([[0.5, 2.0]], DataTypes.COUNT, pytest.raises(DatasetParseError)),
        ([0.0, 2.0], DataTypes.COUNT, pytest.raises(DatasetParseError)),
        ([[np.nan, 2.0]], DataTypes.REAL, pytest.raises(DatasetParseError)),
    ],
)
def test_dataset_handle(values, dtype, raises):
    # Act & Assert
    with raises:
        DatasetHandle(values, dtype)


def test_load_dense_csv(create_data_file):
    # Arrange
    path = create_data_file("1,0,3\n\n0,2,1\n")

    # Act
    handle = datasets.load_dataset(path, DataFormats.DENSE)

    # Assert
    assert handle.shape == (2, 3)
    assert handle.dtype is DataTypes.COUNT
    assert handle.source is DataFormats.DENSE
    np.testing.assert_array_equal(handle.values, [[1.0, 0.0, 3.0], [0.0, 2.0, 1.0]])


@pytest.mark.parametrize(
    "content,line",
    [
        ("1,0\n1,x\n", 2),
        ("1,0\n1,0,1\n", 2),
        ("inf,0\n", 1),
        ("\n\n", None),
    ],
)
def test_load_dense_csv_errors(create_data_file, content, line):
    # Arrange
    path = create_data_file(content)

    # Act & Assert
    with pytest.raises(DatasetParseError) as excinfo:
        datasets.load_dense_csv(path)
    assert excinfo.value.line == line


def test_load_sparse_triplets(create_data_file):
    # Arrange
    path = create_data_file("row,col,value\n0,1,2\n2,0,1\n0,1,1\n", "data.triplets")
    create_data_file(json.dumps({"rows": 3, "cols": 2}), "data.triplets.shape.json")

    # Act
    handle = datasets.load_dataset(path, DataFormats.TRIPLETS)

    # Assert
    np.testing.assert_array_equal(handle.values, [[0.0, 3.0], [0.0, 0.0], [1.0, 0.0]])
    assert handle.source is DataFormats.TRIPLETS


@pytest.mark.parametrize(
    "content,shape,line",
    [
        ("r,c,v\n0,0,1\n", {"rows": 1, "cols": 1}, 1),
        ("row,col,value\n0,0\n", {"rows": 1, "cols": 1}, 2),
        ("row,col,value\n0,0,1\n3,0,1\n", {"rows": 2, "cols": 2}, 3),
        ("row,col,value\n0.5,0,1\n", {"rows": 2, "cols": 2}, 2),
        ("row,col,value\n0,0,1\n", {"rows": 0, "cols": 2}, None),
        ("row,col,value\n0,0,1\n", None, None),
    ],
)
def test_load_sparse_triplets_errors(create_data_file, content, shape, line):
    # Arrange
    path = create_data_file(content, "data.triplets")
    if shape is not None:
        create_data_file(json.dumps(shape), "data.triplets.shape.json")

    # Act & Assert
    with pytest.raises(DatasetParseError) as excinfo:
        datasets.load_sparse_triplets(path)
    assert excinfo.value.line == line


@pytest.mark.parametrize("data_format", list(DataFormats))
def test_write_then_load(tmp_path, data_format):
    # Arrange
    values = np.array([[0.0, 4.0, 1.0], [2.0, 0.0, 0.0]])
    path = str(tmp_path / "data.out")

    # Act
    datasets.write_dataset(path, values, data_format)

    # Assert
    np.testing.assert_array_equal(datasets.load_dataset(path, data_format).values, values)


def test_write_dense_csv_format(tmp_path):
    # Arrange
    path = tmp_path / "data.csv"

    # Act
    datasets.write_dense_csv(str(path), [[1.0, 0.5], [0.0, 2.0]])

    # Assert
    assert path.read_text() == "1,0.5\n0,2\n"


def test_token_split(rng):
    # Arrange
    counts = np.array([[10.0, 0.0, 3.0], [1.0, 50.0, 7.0]])

    # Act
    train, heldout = datasets.token_split(counts, 0.3, rng)

    # Assert
    np.testing.assert_array_equal(train + heldout, counts)
    assert np.all(train >= 0) and np.all(heldout >= 0)
    assert heldout[0, 1] == 0.0


def test_entry_split(rng):
    # Act
    mask = datasets.entry_split((200, 50), 0.1, rng)

    # Assert
    assert mask.shape == (200, 50)
    assert mask.dtype == bool
    assert mask.mean() == pytest.approx(0.1, abs=0.01)


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2])
def test_split_fraction(rng, fraction):
    # Act & Assert
    with pytest.raises(ValueError):
        datasets.token_split(np.ones((2, 2)), fraction, rng)
    with pytest.raises(ValueError):
        datasets.entry_split((2, 2), fraction, rng)
