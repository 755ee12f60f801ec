"""Dataset loading and validation for multivariate time series.

Files on disk are time-major (row = time step). Internally everything is
dimension-major: ``values[d, t]`` is dimension ``d`` at step ``t``, because
every downstream transform iterates per dimension.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .storage import atomic_write

_NPY_MAGIC = b"\x93NUMPY"
_NPY_DESCRS = {"<f4": np.float32, "<f8": np.float64}


@dataclass(frozen=True)
class MultivariateSeries:
    """A D-dimensional real-valued series of length T.

    Parameters
    ----------
    values : ndarray, shape (D, T)
        Dimension-major samples; coerced to float64 and frozen.
    sampling_frequency : float
        Sample rate in Hz. Pseudo-frequencies downstream are reported in
        cycles/sample; multiply by this rate only for display.
    name : str
        Identifier used in logs and output file names.
    """

    values: np.ndarray
    sampling_frequency: float = 1.0
    name: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DataError(f"series values must be 2-D (D x T), got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise DataError(f"series needs D >= 1 and T >= 1, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise DataError("series contains NaN or Inf values")
        if not self.sampling_frequency > 0:
            raise DataError(f"sampling_frequency must be positive, got {self.sampling_frequency}")
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dimensions(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class LabelSeries:
    """Binary ground-truth labels, one per test time step (1 = anomalous)."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise DataError(f"labels must be 1-D, got shape {labels.shape}")
        if labels.size < 1:
            raise DataError("labels are empty")
        if not np.all(np.isin(labels, (0, 1))):
            bad = labels[~np.isin(labels, (0, 1))][0]
            raise DataError(f"labels must be 0 or 1, found {bad!r}")
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def length(self) -> int:
        return self.labels.size


@dataclass(frozen=True)
class DatasetBundle:
    """A train/test split with labels for one subdataset."""

    train: MultivariateSeries
    test: MultivariateSeries
    labels: LabelSeries
    subdataset_id: str = ""

    def __post_init__(self):
        if self.train.dimensions != self.test.dimensions:
            raise DataError(
                f"train has D={self.train.dimensions} but test has D={self.test.dimensions}"
            )
        if self.labels.length != self.test.length:
            raise DataError(
                f"labels length {self.labels.length} does not match test length {self.test.length}"
            )


def load_csv(path, has_header=False, name=None) -> MultivariateSeries:
    """Load a comma-separated series; rows are time steps, columns dimensions.

    Fields use '.' as the decimal point; LF and CRLF endings both work.
    Ragged rows, non-numeric fields, and non-finite values are hard errors
    reported with 1-based row/column coordinates.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = text.split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    start = 1 if has_header else 0
    if len(lines) <= start:
        raise DataError(f"{path}: no data rows")
    try:
        values = np.loadtxt(path, delimiter=",", skiprows=start, ndmin=2)
        if values.size and np.all(np.isfinite(values)):
            return MultivariateSeries(values=values.T, name=name or path.stem)
    except ValueError:
        pass  # fall through to the diagnostic pass for a precise error
    values = _parse_csv_rows(path, lines, start)
    return MultivariateSeries(values=values.T, name=name or path.stem)


def _parse_csv_rows(path, lines, start):
    width = None
    rows = []
    for lineno, line in enumerate(lines[start:], start=start + 1):
        fields = line.rstrip("\r").split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise DataError(
                f"{path}: row {lineno} has {len(fields)} fields, expected {width}"
            )
        row = np.empty(width)
        for col, field in enumerate(fields, start=1):
            try:
                value = float(field)
            except ValueError:
                raise DataError(
                    f"{path}: non-numeric field at row {lineno}, column {col}: {field.strip()!r}"
                ) from None
            if not np.isfinite(value):
                raise DataError(f"{path}: non-finite value at row {lineno}, column {col}")
            row[col - 1] = value
        rows.append(row)
    return np.array(rows)


def write_csv(series: MultivariateSeries, path) -> None:
    """Write a series time-major. repr-formatted floats reload bit-exactly."""
    with atomic_write(path) as handle:
        for row in series.values.T:
            handle.write(",".join(repr(float(v)) for v in row))
            handle.write("\n")


def load_npy(path) -> MultivariateSeries:
    """Load an NPY version 1.0 array: little-endian float32/float64, C order.

    A 1-D array of length T becomes D=1; a 2-D array is read as T x D
    (row = time step) and transposed into the internal D x T layout.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if len(raw) < 10 or raw[:6] != _NPY_MAGIC:
        raise DataError(f"{path}: bad magic, not an NPY file")
    version = (raw[6], raw[7])
    if version != (1, 0):
        raise DataError(f"{path}: unsupported NPY version {version[0]}.{version[1]}")
    header_len = int.from_bytes(raw[8:10], "little")
    header_end = 10 + header_len
    try:
        header = ast.literal_eval(raw[10:header_end].decode("latin-1").strip())
    except (ValueError, SyntaxError) as exc:
        raise DataError(f"{path}: malformed NPY header: {exc}") from exc
    descr = header.get("descr")
    if descr not in _NPY_DESCRS:
        raise DataError(
            f"{path}: unsupported dtype {descr!r}, need little-endian float32 or float64"
        )
    if header.get("fortran_order"):
        raise DataError(f"{path}: fortran-order arrays are not supported")
    shape = header.get("shape")
    if not isinstance(shape, tuple) or len(shape) not in (1, 2):
        raise DataError(f"{path}: need a 1-D or 2-D array, got shape {shape}")
    dtype = np.dtype(_NPY_DESCRS[descr])
    count = int(np.prod(shape, dtype=np.int64))
    if len(raw) - header_end < count * dtype.itemsize:
        raise DataError(f"{path}: file truncated, expected {count} elements")
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=header_end)
    array = data.reshape(shape)
    values = array[None, :] if array.ndim == 1 else array.T
    return MultivariateSeries(values=np.asarray(values, dtype=np.float64), name=path.stem)


def load_labels(path, has_header=False) -> LabelSeries:
    """Load a single-column 0/1 label file (CSV or NPY)."""
    path = Path(path)
    if path.suffix == ".npy":
        series = load_npy(path)
    else:
        series = load_csv(path, has_header=has_header)
    if series.dimensions != 1:
        raise DataError(f"{path}: label file must have one column, got {series.dimensions}")
    values = series.values[0]
    if not np.all(np.isin(values, (0.0, 1.0))):
        raise DataError(f"{path}: labels must be 0 or 1")
    return LabelSeries(labels=values.astype(np.int64))


def _find_role_file(directory: Path, stem: str) -> Path:
    for suffix in (".csv", ".npy"):
        candidate = directory / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    raise DataError(f"{directory}: missing {stem}.csv or {stem}.npy")


def _load_series_file(path: Path, has_header: bool) -> MultivariateSeries:
    if path.suffix == ".npy":
        return load_npy(path)
    return load_csv(path, has_header=has_header)


def load_bundle(directory, stems=("train", "test", "labels"), has_header=False) -> DatasetBundle:
    """Load ``<dir>/train.{csv|npy}``, ``test.*`` and ``labels.*`` as a bundle.

    ``stems`` overrides the three base names. Dimension and length invariants
    are enforced on construction.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory} is not a directory")
    train_stem, test_stem, labels_stem = stems
    train = _load_series_file(_find_role_file(directory, train_stem), has_header)
    test = _load_series_file(_find_role_file(directory, test_stem), has_header)
    labels = load_labels(_find_role_file(directory, labels_stem), has_header=has_header)
    return DatasetBundle(train=train, test=test, labels=labels, subdataset_id=directory.name)
