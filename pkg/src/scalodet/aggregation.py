"""Collapse per-dimension scalograms into one matrix per wavelet.

Two mappings are provided. The PCA mapping concatenates the D normalized
slices feature-wise and projects onto the leading principal components,
fitted once on training data and frozen. The random mapping averages a
small Latin-hypercube-selected subset of dimensions at each frequency,
which needs no fitting at all and preserves zeros.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cwt import ScalogramStack
from .errors import ComputeError, ConfigError, DataError
from .storage import load_array_bundle, save_array_bundle

PCA = "pca"
RANDOM = "random"

# Degenerate-input threshold for the PCA fit: if no centered entry exceeds
# this fraction of the data magnitude, the covariance is numerically zero.
_CONSTANT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AggregatedScalogram:
    """One aggregated matrix, rows = time, columns = mapped components."""

    data: np.ndarray
    method: str

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise DataError(f"aggregated scalogram must be 2-D, got shape {data.shape}")
        if self.method not in (PCA, RANDOM):
            raise ConfigError(f"unknown aggregation method {self.method!r}")
        if self.method == RANDOM and data.size and np.abs(data).max() > 1.0:
            raise DataError("random-mapped values must stay within [-1, 1]")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def component_count(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class PcaMap:
    """Frozen projection: centered concat rows onto orthonormal columns."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self):
        mean = np.ascontiguousarray(self.mean, dtype=np.float64)
        components = np.ascontiguousarray(self.components, dtype=np.float64)
        variance = np.ascontiguousarray(self.explained_variance, dtype=np.float64)
        if mean.ndim != 1 or components.ndim != 2 or variance.ndim != 1:
            raise DataError("malformed PCA map arrays")
        if components.shape != (mean.size, variance.size):
            raise DataError(
                f"components shape {components.shape} does not match mean "
                f"({mean.size}) and variance ({variance.size})"
            )
        gram = components.T @ components
        if np.abs(gram - np.eye(variance.size)).max() > 1e-8:
            raise DataError("PCA components are not orthonormal")
        if np.any(variance < 0) or np.any(np.diff(variance) > 0):
            raise DataError("explained variance must be non-negative and non-increasing")
        for arr in (mean, components, variance):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "explained_variance", variance)

    @property
    def feature_count(self) -> int:
        return self.mean.size

    @property
    def component_count(self) -> int:
        return self.explained_variance.size


@dataclass(frozen=True)
class RandomMatrix:
    """Binary selector gamma[i, d, w]: which dimensions feed each frequency."""

    gamma: np.ndarray
    seed: int
    p: int
    n_lhs: int

    def __post_init__(self):
        gamma = np.ascontiguousarray(self.gamma, dtype=np.uint8)
        if gamma.ndim != 3:
            raise DataError(f"gamma must be 3-D (I, D, W), got shape {gamma.shape}")
        if not np.all((gamma == 0) | (gamma == 1)):
            raise DataError("gamma must be binary")
        if self.p < 1:
            raise ConfigError(f"p must be positive, got {self.p}")
        expected = max(2, gamma.shape[1] // self.p)
        if self.n_lhs != expected:
            raise DataError(f"n_lhs is {self.n_lhs}, expected max(2, D // p) = {expected}")
        sums = gamma.sum(axis=1)
        if sums.size and (sums.min() < 1 or sums.max() > self.n_lhs):
            raise DataError("every gamma column must select between 1 and n_lhs dimensions")
        gamma.setflags(write=False)
        object.__setattr__(self, "gamma", gamma)


def select_point_counts(method: str, window_size: int, dims: int, train_length: int):
    """Frequency-grid size and output width for an aggregation method.

    The PCA path bounds the grid by the per-dimension sample budget
    (more grid points than T/D would make the concatenated feature matrix
    wider than its row count) and by the window; the random path always
    works at full window resolution.
    """
    if method == RANDOM:
        return window_size, window_size
    if method != PCA:
        raise ConfigError(f"unknown aggregation method {method!r}")
    omega = min(window_size, train_length // dims)
    if omega < 2:
        raise DataError(
            f"training series too short for PCA aggregation: "
            f"min(n={window_size}, T//D={train_length}//{dims}) = {omega} < 2"
        )
    width = min(window_size, dims * omega, train_length)
    return omega, width


def _concat_rows(stack: ScalogramStack, index: int) -> np.ndarray:
    """Rows = time, features = the D frequency blocks side by side."""
    slab = stack.data[index]
    dims, length, omega = slab.shape
    return slab.transpose(1, 0, 2).reshape(length, dims * omega)


def fit_pca_map(stack: ScalogramStack, index: int, component_count: int) -> PcaMap:
    """Fit the frozen projection for one wavelet from training data."""
    if not stack.normalized:
        raise DataError("PCA map must be fitted on a normalized stack")
    rows = _concat_rows(stack, index)
    length, features = rows.shape
    if not 1 <= component_count <= min(features, length):
        raise ConfigError(
            f"component count {component_count} outside [1, min(D*W={features}, T={length})]"
        )
    mean = rows.mean(axis=0)
    centered = rows - mean
    magnitude = max(1.0, float(np.abs(rows).max()))
    if float(np.abs(centered).max()) <= _CONSTANT_TOLERANCE * magnitude:
        raise DataError("training scalograms are constant; covariance is degenerate")
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    variance = singular**2 / (length - 1)
    components = vt[:component_count].T.copy()
    for j in range(component_count):
        k = int(np.argmax(np.abs(components[:, j])))
        if components[k, j] < 0:
            components[:, j] = -components[:, j]
    return PcaMap(
        mean=mean, components=components, explained_variance=variance[:component_count]
    )


def apply_pca_map(stack: ScalogramStack, index: int, pca_map: PcaMap) -> AggregatedScalogram:
    """Project one wavelet's slices through a fitted map; no refitting."""
    rows = _concat_rows(stack, index)
    if rows.shape[1] != pca_map.feature_count:
        raise DataError(
            f"stack provides {rows.shape[1]} features but the map was fitted "
            f"on {pca_map.feature_count}"
        )
    return AggregatedScalogram(data=(rows - pca_map.mean) @ pca_map.components, method=PCA)


def _lhs_cells(rng: np.random.Generator, n_lhs: int, dims: int, omega: int):
    """One Latin-hypercube draw: cell coordinates of n_lhs * omega samples.

    Both axes are split into N = n_lhs * omega strata holding one sample
    each, in permuted order. A frequency cell covers exactly n_lhs x-strata,
    so the x jitter can never move a sample across a cell edge and is not
    drawn; the y jitter decides which dimension cell a boundary stratum
    lands in.
    """
    total = n_lhs * omega
    x_strata = rng.permutation(total)
    y_strata = rng.permutation(total)
    y_jitter = rng.random(total)
    freq_cells = x_strata // n_lhs
    dim_cells = ((y_strata + y_jitter) * (dims / total)).astype(np.int64)
    np.minimum(dim_cells, dims - 1, out=dim_cells)
    return freq_cells, dim_cells


def generate_random_matrix(
    wavelet_count: int, dims: int, omega: int, p: int = 5, seed: int = 0
) -> RandomMatrix:
    """Draw the per-wavelet Latin-hypercube dimension selectors."""
    if dims < 1 or omega < 1:
        raise ConfigError("need at least one dimension and one frequency")
    if p < 1:
        raise ConfigError(f"p must be positive, got {p}")
    n_lhs = max(2, dims // p)
    gamma = np.zeros((wavelet_count, dims, omega), dtype=np.uint8)
    for i in range(wavelet_count):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(i,)))
        freq_cells, dim_cells = _lhs_cells(rng, n_lhs, dims, omega)
        gamma[i, dim_cells, freq_cells] = 1
    return RandomMatrix(gamma=gamma, seed=seed, p=p, n_lhs=n_lhs)


def apply_random_map(stack: ScalogramStack, matrix: RandomMatrix):
    """Average the selected dimensions at each frequency; zeros map to zero."""
    if not stack.normalized:
        raise DataError("random mapping expects a normalized stack")
    gamma = matrix.gamma
    if gamma.shape[0] != stack.wavelet_count or gamma.shape[1] != stack.dimension_count:
        raise DataError(
            f"matrix shape {gamma.shape} does not match stack "
            f"({stack.wavelet_count} wavelets, {stack.dimension_count} dims)"
        )
    if gamma.shape[2] != stack.grid.point_count:
        raise DataError(
            f"matrix has {gamma.shape[2]} frequency columns, stack has "
            f"{stack.grid.point_count}"
        )
    counts = gamma.sum(axis=1)
    if counts.min() < 1:
        raise ComputeError("internal: a gamma column selects no dimensions")
    weights = gamma.astype(np.float64)
    sums = np.einsum("idw,idtw->itw", weights, stack.data)
    mapped = sums / counts[:, None, :]
    return [AggregatedScalogram(data=mapped[i], method=RANDOM) for i in range(gamma.shape[0])]


def save_pca_map(pca_map: PcaMap, stem) -> None:
    """One JSON + NPY pair; arrays packed in a single bordered block."""
    features = pca_map.feature_count
    width = pca_map.component_count
    block = np.zeros((features + 1, width + 1))
    block[:features, :width] = pca_map.components
    block[:features, width] = pca_map.mean
    block[features, :width] = pca_map.explained_variance
    meta = {"kind": "pca_map", "feature_count": features, "component_count": width}
    save_array_bundle(stem, meta, block)


def load_pca_map(stem) -> PcaMap:
    meta, block = load_array_bundle(stem)
    if meta.get("kind") != "pca_map":
        raise DataError(f"bundle at {stem} is not a PCA map")
    features = meta["feature_count"]
    width = meta["component_count"]
    if block.shape != (features + 1, width + 1):
        raise DataError("PCA map payload shape does not match its metadata")
    return PcaMap(
        mean=block[:features, width].copy(),
        components=block[:features, :width].copy(),
        explained_variance=block[features, :width].copy(),
    )


def save_random_matrix(matrix: RandomMatrix, stem) -> None:
    meta = {
        "kind": "random_matrix",
        "seed": int(matrix.seed),
        "p": int(matrix.p),
        "n_lhs": int(matrix.n_lhs),
    }
    save_array_bundle(stem, meta, matrix.gamma)


def load_random_matrix(stem) -> RandomMatrix:
    meta, gamma = load_array_bundle(stem)
    if meta.get("kind") != "random_matrix":
        raise DataError(f"bundle at {stem} is not a random matrix")
    return RandomMatrix(
        gamma=gamma.astype(np.uint8), seed=meta["seed"], p=meta["p"], n_lhs=meta["n_lhs"]
    )
