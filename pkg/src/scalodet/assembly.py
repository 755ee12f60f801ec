"""Assembling per-tile patch scores into a per-time anomaly series.

Each scored tile is upsampled back to pixel resolution through its
receptive rectangles, overlaid onto a frequency-by-time matrix with a
pixel-wise maximum where tiles overlap, and reduced over the frequency
axis. Scores near both ends of the series can then be replaced by a
floor value to suppress boundary artifacts of the transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ComputeError, DataError
from .memory import PatchScoreMap


@dataclass(frozen=True)
class AssembledScores:
    """Frequency-by-time score matrix with its per-time reductions."""

    matrix: np.ndarray
    scores: np.ndarray
    frequency_rows: np.ndarray

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise DataError("assembled matrix must be two-dimensional")
        if not np.isfinite(self.matrix).all():
            raise DataError("assembled matrix contains non-finite values")
        height, length = self.matrix.shape
        if self.scores.shape != (length,) or self.frequency_rows.shape != (length,):
            raise DataError("assembled reductions do not match the matrix length")
        if self.frequency_rows.size and (
            self.frequency_rows.min() < 0 or self.frequency_rows.max() >= height
        ):
            raise DataError("frequency rows fall outside the matrix")

    @property
    def length(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class AnomalyScoreSeries:
    """Per-time anomaly scores, optionally floored near the ends."""

    scores: np.ndarray
    floor_value: float | None = None
    edge_ranges: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self) -> None:
        if self.scores.ndim != 1 or self.scores.size == 0:
            raise DataError("score series must be a non-empty vector")
        if not np.isfinite(self.scores).all():
            raise DataError("score series contains non-finite values")
        if self.scores.min() < 0.0:
            raise DataError("score series contains negative values")
        if self.edge_ranges is not None:
            if self.floor_value is None:
                raise DataError("edge-corrected series must record its floor value")
            for start, stop in self.edge_ranges:
                if not (0 <= start <= stop <= self.scores.size):
                    raise DataError("edge range falls outside the series")
                if not np.all(self.scores[start:stop] == self.floor_value):
                    raise DataError("edge range does not equal the floor value")

    @property
    def length(self) -> int:
        return self.scores.size


def _uniform_block_shape(
    receptive_map: np.ndarray, grid_shape: tuple[int, int], size: int
) -> tuple[int, int] | None:
    """Block (height, width) when the rectangles form a regular grid."""
    rows, cols = grid_shape
    if size % rows or size % cols:
        return None
    block_h = size // rows
    block_w = size // cols
    r = np.arange(rows).repeat(cols)
    c = np.tile(np.arange(cols), rows)
    expected = np.stack(
        [r * block_h, (r + 1) * block_h, c * block_w, (c + 1) * block_w], axis=1
    )
    if np.array_equal(receptive_map, expected):
        return block_h, block_w
    return None


def upsample_patch_scores(
    scores: np.ndarray, receptive_map: np.ndarray, size: int
) -> np.ndarray:
    """Expand a patch-level score grid to a size-by-size pixel image.

    Every pixel inside a patch's receptive rectangle takes that patch's
    score; where rectangles overlap the larger score wins.
    """
    if scores.ndim != 2:
        raise DataError("patch scores must form a two-dimensional grid")
    if receptive_map.shape != (scores.size, 4):
        raise DataError(
            "receptive map describes "
            f"{receptive_map.shape[0]} patches, expected {scores.size}"
        )
    block = _uniform_block_shape(receptive_map, scores.shape, size)
    if block is not None:
        return np.repeat(np.repeat(scores, block[0], axis=0), block[1], axis=1)
    image = np.full((size, size), -np.inf)
    flat = scores.ravel()
    for index, (top, bottom, left, right) in enumerate(receptive_map):
        region = image[top:bottom, left:right]
        np.maximum(region, flat[index], out=region)
    if np.isneginf(image).any():
        raise ComputeError("receptive rectangles leave uncovered pixels")
    return image


def assemble(
    tile_maps: Sequence[PatchScoreMap],
    receptive_map: np.ndarray,
    length: int,
    window: int,
) -> AssembledScores:
    """Overlay upsampled tile scores into one frequency-by-time matrix.

    Overlapping tiles combine by pixel-wise maximum, so the result does
    not depend on tile order. Every time index in [0, length) must be
    covered by at least one tile.
    """
    if length < 1 or window < 1:
        raise DataError("length and window must be positive")
    if not tile_maps:
        raise DataError("no tiles to assemble")
    matrix = np.full((window, length), -np.inf)
    for tile_map in tile_maps:
        offset = tile_map.tile_ref
        if offset < 0 or offset + window > length:
            raise DataError(
                f"tile at offset {offset} does not fit a series of length {length}"
            )
        pixels = upsample_patch_scores(tile_map.scores, receptive_map, window)
        target = matrix[:, offset : offset + window]
        np.maximum(target, pixels, out=target)
    covered = matrix.max(axis=0) > -np.inf
    if not covered.all():
        missing = int(np.flatnonzero(~covered)[0])
        raise DataError(f"time index {missing} is not covered by any tile")
    if np.isneginf(matrix).any():
        raise ComputeError("assembly left uncovered frequency rows")
    return AssembledScores(
        matrix=matrix,
        scores=matrix.max(axis=0),
        frequency_rows=matrix.argmax(axis=0).astype(np.int64),
    )


def edge_correct(
    scores: np.ndarray, window: int, train_scores: np.ndarray
) -> AnomalyScoreSeries:
    """Floor the first and last window of a test score series.

    The transform is unreliable within one window of either end, so
    those spans are replaced with the smallest score observed across
    the training and test series.
    """
    scores = np.asarray(scores, dtype=np.float64)
    train_scores = np.asarray(train_scores, dtype=np.float64)
    if scores.ndim != 1 or train_scores.ndim != 1:
        raise DataError("score series must be one-dimensional")
    if train_scores.size == 0:
        raise DataError("training scores are required for the edge floor")
    length = scores.size
    if length <= 2 * window:
        raise DataError(
            f"edge correction needs more than {2 * window} test points, got {length}"
        )
    floor = float(min(train_scores.min(), scores.min()))
    corrected = scores.copy()
    corrected[:window] = floor
    corrected[length - window :] = floor
    return AnomalyScoreSeries(
        scores=corrected,
        floor_value=floor,
        edge_ranges=((0, window), (length - window, length)),
    )


def threshold(scores: np.ndarray, delta: float) -> np.ndarray:
    """Binarize scores: 1 where the score reaches delta."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise DataError("score series must be one-dimensional")
    return (scores >= delta).astype(np.int64)
