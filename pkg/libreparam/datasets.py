"""
Reading and writing datasets, and splitting off held-out data.

Two on-disk formats exist: dense comma separated values without a header, and ``row,col,value`` triplets with a
header line plus a sidecar file ``<path>.shape.json`` holding ``{"rows": ..., "cols": ...}``.
"""

import csv
import json
import logging
import os
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from libreparam.enums import DataFormats, DataTypes
from libreparam.exceptions import DatasetParseError
from libreparam.randkit import RngState, uniform

_logger = logging.getLogger(__name__)

TRIPLET_HEADER = ("row", "col", "value")


def infer_dtype(values: np.ndarray) -> DataTypes:
    """
    The narrowest type describing every value: binary, then count, then real.
    """
    if np.all((values == 0) | (values == 1)):
        return DataTypes.BINARY
    if np.all(values >= 0) and np.all(values == np.round(values)):
        return DataTypes.COUNT
    return DataTypes.REAL


@dataclass(frozen=True)
class DatasetHandle:
    """
    A validated data matrix. Rows are observations.

    :param values: The dense matrix.
    :param dtype: What kind of values it holds.
    :param source: The format the matrix was read from.
    """

    values: np.ndarray
    dtype: DataTypes
    source: DataFormats = DataFormats.DENSE

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DatasetParseError("A dataset must be a matrix.")
        if not np.all(np.isfinite(values)):
            raise DatasetParseError("A dataset must only hold finite values.")
        if self.dtype is DataTypes.BINARY and not np.all((values == 0) | (values == 1)):
            raise DatasetParseError("A binary dataset must only hold zeros and ones.")
        if self.dtype is DataTypes.COUNT and not (np.all(values >= 0) and np.all(values == np.round(values))):
            raise DatasetParseError("A count dataset must only hold non-negative integers.")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def as_counts(self) -> "DatasetHandle":
        """
        The same data typed as counts.

        :raises DatasetParseError: In case a value is not a non-negative integer.
        """
        return DatasetHandle(self.values, DataTypes.COUNT, self.source)


def _parse_number(text: str, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DatasetParseError("%r is not a number." % text.strip(), line) from None
    if not np.isfinite(value):
        raise DatasetParseError("%r is not a finite number." % text.strip(), line)
    return value


def load_dense_csv(path: str) -> DatasetHandle:
    """
    Read a dense matrix. Empty lines are skipped.

    :raises DatasetParseError: In case a value is not a number, rows differ in length or the file holds no data.
    """
    rows = []
    width = None
    with open(path, newline="") as csv_file:
        for line, row in enumerate(csv.reader(csv_file), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            values = [_parse_number(cell, line) for cell in row]
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise DatasetParseError("Expected %d columns, found %d." % (width, len(values)), line)
            rows.append(values)
    if not rows:
        raise DatasetParseError("The file %s holds no data." % path)
    values = np.asarray(rows, dtype=float)
    _logger.info("Read a %d x %d matrix from %s.", values.shape[0], values.shape[1], path)
    return DatasetHandle(values, infer_dtype(values), DataFormats.DENSE)


def shape_sidecar_path(path: str) -> str:
    return path + ".shape.json"


def _read_shape(path: str) -> Tuple[int, int]:
    sidecar = shape_sidecar_path(path)
    if not os.path.isfile(sidecar):
        raise DatasetParseError("The shape file %s is missing." % sidecar)
    with open(sidecar) as json_file:
        try:
            shape = json.load(json_file)
        except json.JSONDecodeError as error:
            raise DatasetParseError("The shape file %s is not valid JSON: %s" % (sidecar, error)) from error
    if not isinstance(shape, dict):
        raise DatasetParseError("The shape file %s must hold an object." % sidecar)
    rows, cols = shape.get("rows"), shape.get("cols")
    if not all(isinstance(size, int) and not isinstance(size, bool) and size > 0 for size in (rows, cols)):
        raise DatasetParseError("The shape file %s must hold positive integers rows and cols." % sidecar)
    return rows, cols


def load_sparse_triplets(path: str) -> DatasetHandle:
    """
    Read ``row,col,value`` triplets into a dense matrix. Repeated coordinates add up.

    :raises DatasetParseError: In case the header is wrong, a row is malformed, an index is out of range or the shape
                               file is missing.
    """
    rows, cols = _read_shape(path)
    values = np.zeros((rows, cols))
    with open(path, newline="") as csv_file:
        reader = csv.reader(csv_file)
        header = next(reader, None)
        if header is None or tuple(cell.strip() for cell in header) != TRIPLET_HEADER:
            raise DatasetParseError("Expected the header %s." % ",".join(TRIPLET_HEADER), 1)
        for line, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise DatasetParseError("Expected three fields, found %d." % len(row), line)
            row_index, col_index, value = (_parse_number(cell, line) for cell in row)
            if row_index != int(row_index) or col_index != int(col_index):
                raise DatasetParseError("Indices must be integers.", line)
            if not (0 <= row_index < rows and 0 <= col_index < cols):
                raise DatasetParseError(
                    "Index (%d, %d) is outside the declared shape %d x %d."
                    % (row_index, col_index, rows, cols),
                    line,
                )
            values[int(row_index), int(col_index)] += value
    _logger.info("Read %d x %d triplets from %s.", rows, cols, path)
    return DatasetHandle(values, infer_dtype(values), DataFormats.TRIPLETS)


def load_dataset(path: str, data_format: DataFormats) -> DatasetHandle:
    """
    Read a dataset in the given format.
    """
    if data_format is DataFormats.TRIPLETS:
        return load_sparse_triplets(path)
    return load_dense_csv(path)


def _format(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(float(value))


def write_dense_csv(path: str, values):
    """
    Write a matrix as dense comma separated values. Integral values are written without a decimal point.
    """
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        for row in values:
            writer.writerow([_format(value) for value in row])


def write_sparse_triplets(path: str, values):
    """
    Write the non-zero entries of a matrix as triplets together with the shape file.
    """
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(TRIPLET_HEADER)
        for row_index, col_index in zip(*np.nonzero(values)):
            writer.writerow([int(row_index), int(col_index), _format(values[row_index, col_index])])
    with open(shape_sidecar_path(path), "w") as json_file:
        json.dump({"rows": int(values.shape[0]), "cols": int(values.shape[1])}, json_file, sort_keys=True)


def write_dataset(path: str, values, data_format: DataFormats):
    if data_format is DataFormats.TRIPLETS:
        write_sparse_triplets(path, values)
    else:
        write_dense_csv(path, values)


def token_split(counts, fraction: float, rng: RngState) -> Tuple[np.ndarray, np.ndarray]:
    """
    Hold out each word token independently with probability ``fraction``.

    :return: The training counts and the held-out counts; they add up to ``counts``.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("The held-out fraction must lie in (0, 1).")
    counts = np.asarray(counts, dtype=float)
    heldout = rng.generator.binomial(counts.astype(np.int64), fraction).astype(float)
    return counts - heldout, heldout


def entry_split(shape: Tuple[int, ...], fraction: float, rng: RngState) -> np.ndarray:
    """
    Hold out whole entries with probability ``fraction``.

    :return: ``True`` for the held-out entries.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("The held-out fraction must lie in (0, 1).")
    return uniform(rng, tuple(shape)) < fraction
