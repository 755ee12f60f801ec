"""Turn aggregated scalograms into 8-bit RGB tiles.

The two wavelet aggregates land in the red and green channels; blue holds a
positional ramp over the frequency rows so a patch model can tell where in
the spectrum a patch came from. Channel extremes are fitted on training data
once and reused verbatim for test data, with headroom factor r leaving room
for test values that overshoot the training range.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .aggregation import AggregatedScalogram
from .errors import ConfigError, DataError
from .storage import atomic_write

CHANNELS = "RGB"
TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class ImagingParams:
    """Headroom, tile geometry, and the channel ablation mask."""

    headroom: float = 1.2
    tile_size: int = 256
    stride: int = 0
    channel_mask: frozenset = field(default_factory=lambda: frozenset(CHANNELS))

    def __post_init__(self):
        if self.headroom < 1.0:
            raise ConfigError(f"headroom must be at least 1, got {self.headroom}")
        if self.tile_size < 1:
            raise ConfigError(f"tile size must be positive, got {self.tile_size}")
        stride = self.stride if self.stride else self.tile_size // 2
        if not 1 <= stride <= self.tile_size:
            raise ConfigError(
                f"stride must lie in [1, {self.tile_size}], got {stride}"
            )
        mask = frozenset(self.channel_mask)
        if not mask or not mask <= set(CHANNELS):
            raise ConfigError(f"channel mask must be a non-empty subset of RGB, got {mask}")
        object.__setattr__(self, "stride", stride)
        object.__setattr__(self, "channel_mask", mask)


@dataclass(frozen=True)
class ChannelNormalization:
    """Train-data extremes for one wavelet channel, frozen after fitting."""

    minimum: float
    maximum: float

    def __post_init__(self):
        if self.minimum > 0:
            raise DataError(f"channel minimum must be <= 0, got {self.minimum}")
        if self.maximum <= self.minimum:
            raise DataError(
                f"channel range is degenerate: min {self.minimum}, max {self.maximum}"
            )


@dataclass(frozen=True)
class ImageTile:
    """One n-by-n window; rows are frequency (row 0 lowest), columns time."""

    pixels: np.ndarray
    time_offset: int
    source_role: str

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels)
        if pixels.dtype != np.uint8 or pixels.ndim != 3 or pixels.shape[0] != 3:
            raise DataError("tile pixels must be a 3-channel uint8 array")
        if self.source_role not in (TRAIN, TEST):
            raise ConfigError(f"unknown tile role {self.source_role!r}")
        if self.time_offset < 0:
            raise DataError(f"negative time offset {self.time_offset}")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)


def fit_channel_normalization(agg: AggregatedScalogram) -> ChannelNormalization:
    """Record one wavelet channel's training extremes.

    The minimum is clamped through min(0, .) so zero stays representable;
    the maximum is taken as-is, which keeps an all-negative aggregate
    meaningful instead of silently collapsing its range.
    """
    data = agg.data
    if data.size == 0:
        raise DataError("cannot fit channel normalization on an empty aggregate")
    low = min(0.0, float(data.min()))
    high = float(data.max())
    if high == low:
        raise DataError(
            f"aggregate is constant at {high}; channel range would be empty"
        )
    return ChannelNormalization(minimum=low, maximum=high)


def normalize_for_imaging(
    agg: AggregatedScalogram, norm: ChannelNormalization, headroom: float
) -> np.ndarray:
    """Map an aggregate into [0, 1] using frozen training extremes."""
    scaled = (agg.data / headroom - norm.minimum) / (norm.maximum - norm.minimum)
    return np.clip(scaled, 0.0, 1.0)


def quantize_unit(values: np.ndarray) -> np.ndarray:
    """Unit-interval reals to {0..255}, rounding halves away from zero."""
    return np.clip(np.floor(255.0 * np.asarray(values) + 0.5), 0, 255).astype(np.uint8)


def pad_frequency_axis(matrix: np.ndarray, height: int) -> np.ndarray:
    """Zero-pad the frequency axis (columns) of a T-by-W matrix up to height."""
    width = matrix.shape[1]
    if width > height:
        raise DataError(f"frequency extent {width} exceeds tile height {height}")
    if width == height:
        return matrix
    padded = np.zeros((matrix.shape[0], height), dtype=matrix.dtype)
    padded[:, :width] = matrix
    return padded


def frequency_ramp(height: int) -> np.ndarray:
    """The blue-channel positional code: row w maps to round(255*w/(H-1))."""
    if height == 1:
        return np.zeros(1, dtype=np.uint8)
    return quantize_unit(np.arange(height) / (height - 1))


def embed_channels(morlet_unit, ricker_unit, channel_mask=frozenset(CHANNELS)) -> np.ndarray:
    """Stack the quantized channels into a full-length (3, T, H) image.

    Red and green carry the two wavelet aggregates, blue the frequency ramp,
    constant along time. Channels outside the mask are zero-filled, which is
    how ablations switch individual encodings off.
    """
    morlet_unit = np.asarray(morlet_unit, dtype=np.float64)
    ricker_unit = np.asarray(ricker_unit, dtype=np.float64)
    if morlet_unit.shape != ricker_unit.shape or morlet_unit.ndim != 2:
        raise DataError(
            f"channel matrices must share a 2-D shape, got {morlet_unit.shape} "
            f"and {ricker_unit.shape}"
        )
    length, height = morlet_unit.shape
    image = np.zeros((3, length, height), dtype=np.uint8)
    if "R" in channel_mask:
        image[0] = quantize_unit(morlet_unit)
    if "G" in channel_mask:
        image[1] = quantize_unit(ricker_unit)
    if "B" in channel_mask:
        image[2] = frequency_ramp(height)[None, :]
    return image


def tile_starts(length: int, size: int, stride: int):
    """Window starts: every multiple of stride that fits, plus a clamped tail."""
    if length < size:
        raise DataError(
            f"series length {length} is shorter than one window of {size} samples; "
            f"provide at least {size} samples or reduce the window size"
        )
    starts = list(range(0, length - size + 1, stride))
    if starts[-1] != length - size:
        starts.append(length - size)
    return starts


def tile(image: np.ndarray, size: int, stride: int, role: str):
    """Cut the full-length image into overlapping n-by-n tiles.

    The full-length image is time-major; each tile is transposed so rows are
    frequency and columns time. Rows are zero-padded up to the tile size if
    the caller has not already padded (the pipeline pads before embedding so
    the blue ramp spans the full height).
    """
    if image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"expected a (3, T, H) image, got shape {image.shape}")
    _, length, height = image.shape
    if height > size:
        raise DataError(f"frequency extent {height} exceeds tile size {size}")
    if height < size:
        padded = np.zeros((3, length, size), dtype=image.dtype)
        padded[:, :, :height] = image
        image = padded
    return [
        ImageTile(
            pixels=image[:, start : start + size, :].transpose(0, 2, 1).copy(),
            time_offset=start,
            source_role=role,
        )
        for start in tile_starts(length, size, stride)
    ]


def tile_filename(t: ImageTile) -> str:
    return f"{t.source_role}_{t.time_offset}.png"


def _write_png(pixels_hwc: np.ndarray, path) -> None:
    pixels_hwc = np.ascontiguousarray(pixels_hwc)
    with atomic_write(Path(path), "wb") as handle:
        Image.fromarray(pixels_hwc, mode="RGB").save(handle, format="PNG")


def render_tile_png(t: ImageTile, directory) -> Path:
    """Write one tile as an 8-bit RGB PNG, low frequency at the bottom row."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / tile_filename(t)
    _write_png(np.flipud(t.pixels.transpose(1, 2, 0)), path)
    return path


def render_image_png(image: np.ndarray, path) -> Path:
    """Write a full-length (3, T, H) image as a PNG, frequency on the y axis."""
    if image.ndim != 3 or image.shape[0] != 3:
        raise DataError(f"expected a (3, T, H) image, got shape {image.shape}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_png(np.flipud(image.transpose(2, 1, 0)), path)
    return path
