"""Coreset memory bank and nearest-neighbor patch scoring.

The bank keeps a small, well-spread subset of training patch vectors chosen
by greedy farthest-point k-center selection with a deterministic start (the
point nearest the global mean). Test patches score by distance to their
nearest bank point, softmax-reweighted over the b nearest bank neighbors so
that an outlier far from a dense neighborhood scores higher than one near a
sparse region.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .errors import ConfigError, DataError
from .features import PatchGrid
from .storage import load_array_bundle, save_array_bundle

BRUTE = "brute"
TREE = "tree"

# exp() overflows just past 709; the factor is already saturated there.
_EXP_CLIP = 700.0


@dataclass(frozen=True)
class MemoryBank:
    """Selected coreset rows plus the scoring parameters."""

    coreset: np.ndarray
    sampling_ratio: float = 0.01
    neighbor_count: int = 9
    build_seed: int = 0
    indices: np.ndarray = None

    def __post_init__(self):
        coreset = np.ascontiguousarray(self.coreset, dtype=np.float64)
        if coreset.ndim != 2 or coreset.shape[0] < 1:
            raise DataError(f"coreset must be a non-empty matrix, got shape {coreset.shape}")
        if not np.all(np.isfinite(coreset)):
            raise DataError("coreset contains non-finite values")
        if not 0.0 < self.sampling_ratio <= 1.0:
            raise ConfigError(f"sampling ratio must be in (0, 1], got {self.sampling_ratio}")
        if self.neighbor_count < 1:
            raise ConfigError(f"neighbor count must be positive, got {self.neighbor_count}")
        indices = self.indices
        if indices is not None:
            indices = np.ascontiguousarray(indices, dtype=np.int64)
            if indices.shape != (coreset.shape[0],):
                raise DataError("indices length does not match the coreset")
            indices.setflags(write=False)
        coreset.setflags(write=False)
        object.__setattr__(self, "coreset", coreset)
        object.__setattr__(self, "indices", indices)

    @property
    def size(self) -> int:
        return self.coreset.shape[0]

    @property
    def channel_count(self) -> int:
        return self.coreset.shape[1]


@dataclass(frozen=True)
class PatchScoreMap:
    """Per-patch anomaly scores on the tile's grid."""

    scores: np.ndarray
    tile_ref: int

    def __post_init__(self):
        scores = np.ascontiguousarray(self.scores, dtype=np.float64)
        if scores.ndim != 2:
            raise DataError(f"score map must be 2-D, got shape {scores.shape}")
        if not np.all(np.isfinite(scores)) or scores.size and scores.min() < 0:
            raise DataError("scores must be finite and non-negative")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)


def stack_features(grids) -> np.ndarray:
    """Concatenate PatchGrid features (or pass a ready matrix through)."""
    if isinstance(grids, np.ndarray):
        features = np.ascontiguousarray(grids, dtype=np.float64)
        if features.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {features.shape}")
        return features
    matrices = [g.features for g in grids]
    if not matrices:
        raise DataError("no training patches to build a memory bank from")
    widths = {m.shape[1] for m in matrices}
    if len(widths) != 1:
        raise DataError(f"patch grids disagree on channel count: {sorted(widths)}")
    return np.concatenate(matrices, axis=0)


def coreset_size(total: int, ratio: float) -> int:
    return max(1, int(np.floor(ratio * total + 0.5)))


def build_coreset(
    train_features,
    ratio: float = 0.01,
    seed: int = 0,
    neighbor_count: int = 9,
    projection_dim: int = None,
) -> MemoryBank:
    """Greedy k-center selection of M = max(1, round(ratio * N)) rows.

    Selection starts at the point nearest the global mean and repeatedly
    takes the point farthest from everything chosen so far; ties break
    toward the lowest input index. With projection_dim set, selection
    distances are measured in a seeded random projection (a cheap
    approximation for very wide features); the stored rows are always the
    original vectors.
    """
    features = stack_features(train_features)
    total = features.shape[0]
    if total < 1:
        raise DataError("no training patches to build a memory bank from")
    if not 0.0 < ratio <= 1.0:
        raise ConfigError(f"sampling ratio must be in (0, 1], got {ratio}")
    target = coreset_size(total, ratio)
    work = features
    if projection_dim is not None:
        if projection_dim < 1:
            raise ConfigError(f"projection dimension must be positive, got {projection_dim}")
        rng = np.random.default_rng(seed)
        projection = rng.standard_normal((features.shape[1], projection_dim))
        work = features @ (projection / np.sqrt(projection_dim))
    start = int(np.argmin(np.linalg.norm(work - work.mean(axis=0), axis=1)))
    chosen = np.empty(target, dtype=np.int64)
    chosen[0] = start
    min_dist = np.linalg.norm(work - work[start], axis=1)
    min_dist[start] = -1.0
    for k in range(1, target):
        pick = int(np.argmax(min_dist))
        chosen[k] = pick
        np.minimum(min_dist, np.linalg.norm(work - work[pick], axis=1), out=min_dist)
        min_dist[pick] = -1.0
    return MemoryBank(
        coreset=features[chosen],
        sampling_ratio=ratio,
        neighbor_count=neighbor_count,
        build_seed=seed,
        indices=chosen,
    )


def _neighbor_distances(features, bank: MemoryBank, count: int, index: str):
    if index == TREE:
        dists, _ = cKDTree(bank.coreset).query(features, k=count)
        if count == 1:
            dists = dists[:, None]
        return dists
    if index != BRUTE:
        raise ConfigError(f"unknown neighbor index {index!r}")
    full = cdist(features, bank.coreset)
    if count >= full.shape[1]:
        return full
    return np.partition(full, count - 1, axis=1)[:, :count]


def score_features(
    features: np.ndarray, bank: MemoryBank, reweight: bool = True, index: str = BRUTE
) -> np.ndarray:
    """Reweighted nearest-neighbor scores for a plain feature matrix."""
    features = np.ascontiguousarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != bank.channel_count:
        raise DataError(
            f"feature matrix shape {features.shape} does not match bank "
            f"channel count {bank.channel_count}"
        )
    b_eff = min(bank.neighbor_count, bank.size)
    dists = _neighbor_distances(features, bank, b_eff, index)
    nearest = dists.min(axis=1)
    if not reweight or b_eff == 1:
        return nearest
    shifted = np.clip(dists - nearest[:, None], None, _EXP_CLIP)
    return (1.0 - 1.0 / np.exp(shifted).sum(axis=1)) * nearest


def score_patches(
    grid: PatchGrid, bank: MemoryBank, reweight: bool = True, index: str = BRUTE
) -> PatchScoreMap:
    """Score one tile's patches against the bank."""
    scores = score_features(grid.features, bank, reweight=reweight, index=index)
    return PatchScoreMap(scores=scores.reshape(grid.grid_shape), tile_ref=grid.tile_ref)


def save_memory_bank(bank: MemoryBank, stem) -> None:
    meta = {
        "kind": "memory_bank",
        "sampling_ratio": float(bank.sampling_ratio),
        "neighbor_count": int(bank.neighbor_count),
        "build_seed": int(bank.build_seed),
        "indices": None if bank.indices is None else [int(i) for i in bank.indices],
    }
    save_array_bundle(stem, meta, bank.coreset)


def load_memory_bank(stem) -> MemoryBank:
    meta, coreset = load_array_bundle(stem)
    if meta.get("kind") != "memory_bank":
        raise DataError(f"bundle at {stem} is not a memory bank")
    indices = meta.get("indices")
    return MemoryBank(
        coreset=coreset,
        sampling_ratio=meta["sampling_ratio"],
        neighbor_count=meta["neighbor_count"],
        build_seed=meta["build_seed"],
        indices=None if indices is None else np.asarray(indices, dtype=np.int64),
    )
