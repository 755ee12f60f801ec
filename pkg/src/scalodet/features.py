"""Patch feature extraction from image tiles.

Two interchangeable extractors produce the same downstream contract: a grid
of per-patch feature vectors plus the pixel rectangle each patch summarizes.
The ONNX adapter wraps an exported classifier backbone with two spatial tap
points; the fallback computes handcrafted block statistics so the whole
pipeline runs without any model artifact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError
from .imaging import ImageTile

ONNX_BACKBONE = "onnx_backbone"
FALLBACK = "fallback"

_BLOCK = 8
_FALLBACK_CHANNELS = 64
_PROJECTION_SEED = 97


@dataclass(frozen=True)
class PatchGrid:
    """P patch vectors on an h-by-w grid, with their pixel rectangles.

    receptive_map rows are half-open (top, bottom, left, right) pixel bounds
    within the source tile; columns advance along time.
    """

    features: np.ndarray
    grid_shape: tuple
    tile_ref: int
    receptive_map: np.ndarray

    def __post_init__(self):
        features = np.ascontiguousarray(self.features, dtype=np.float64)
        rects = np.ascontiguousarray(self.receptive_map, dtype=np.int64)
        h, w = self.grid_shape
        if features.ndim != 2 or features.shape[0] != h * w or features.shape[0] < 1:
            raise DataError(
                f"features shape {features.shape} does not match grid {self.grid_shape}"
            )
        if not np.all(np.isfinite(features)):
            raise DataError("patch features contain non-finite values")
        if rects.shape != (features.shape[0], 4):
            raise DataError(f"receptive map shape {rects.shape} is not (P, 4)")
        if np.any(rects[:, 0] >= rects[:, 1]) or np.any(rects[:, 2] >= rects[:, 3]):
            raise DataError("receptive rectangles must be non-empty")
        features.setflags(write=False)
        rects.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "grid_shape", (int(h), int(w)))
        object.__setattr__(self, "receptive_map", rects)

    @property
    def patch_count(self) -> int:
        return self.features.shape[0]

    @property
    def channel_count(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class ExtractorSpec:
    """Which extractor to run and, for the ONNX kind, where its model lives."""

    kind: str
    model_path: object = None
    tap_names: tuple = None
    tap_shapes: tuple = None
    input_mean: tuple = None
    input_std: tuple = None
    pooling_window: int = 3

    def __post_init__(self):
        if self.kind not in (ONNX_BACKBONE, FALLBACK):
            raise ConfigError(f"unknown extractor kind {self.kind!r}")
        if self.pooling_window < 1 or self.pooling_window % 2 == 0:
            raise ConfigError(
                f"pooling window must be odd and positive, got {self.pooling_window}"
            )
        if self.kind == ONNX_BACKBONE and self.model_path is None:
            raise ConfigError("onnx_backbone extractor needs a model path")
        if self.kind == FALLBACK and self.model_path is not None:
            raise ConfigError("the fallback extractor takes no model file")


def _block_rectangles(rows: int, cols: int, stride: int) -> np.ndarray:
    grid = np.indices((rows, cols)).reshape(2, -1).T
    rects = np.empty((rows * cols, 4), dtype=np.int64)
    rects[:, 0] = grid[:, 0] * stride
    rects[:, 1] = rects[:, 0] + stride
    rects[:, 2] = grid[:, 1] * stride
    rects[:, 3] = rects[:, 2] + stride
    return rects


def _fallback_projection() -> np.ndarray:
    rng = np.random.default_rng(_PROJECTION_SEED)
    raw = rng.standard_normal((_FALLBACK_CHANNELS, 12))
    q, r = np.linalg.qr(raw)
    return q * np.sign(np.diag(r))


_PROJECTION = _fallback_projection()


def _extract_fallback(tile: ImageTile, spec: ExtractorSpec) -> PatchGrid:
    pixels = tile.pixels
    _, rows, cols = pixels.shape
    if rows % _BLOCK or cols % _BLOCK:
        raise DataError(
            f"tile size {rows}x{cols} is not a multiple of the {_BLOCK}-pixel block"
        )
    h, w = rows // _BLOCK, cols // _BLOCK
    blocks = (pixels.astype(np.float64) / 255.0).reshape(3, h, _BLOCK, w, _BLOCK)
    means = blocks.mean(axis=(2, 4))
    stds = blocks.std(axis=(2, 4))
    hgrads = np.diff(blocks, axis=4).mean(axis=(2, 4))
    vgrads = np.diff(blocks, axis=2).mean(axis=(2, 4))
    stats = np.concatenate([means, stds, hgrads, vgrads])
    raw = stats.transpose(1, 2, 0).reshape(h * w, 12)
    return PatchGrid(
        features=raw @ _PROJECTION.T,
        grid_shape=(h, w),
        tile_ref=tile.time_offset,
        receptive_map=_block_rectangles(h, w, _BLOCK),
    )


def average_pool(maps: np.ndarray, window: int) -> np.ndarray:
    """Zero-padded mean over window-by-window neighborhoods, stride 1.

    Border averages keep the full window in the denominator, matching the
    count-include-pad convention.
    """
    return ndimage.uniform_filter(
        maps, size=(1,) * (maps.ndim - 2) + (window, window), mode="constant", cval=0.0
    )


def bilinear_resize(maps: np.ndarray, out_shape: tuple) -> np.ndarray:
    """Channel-wise bilinear resize with half-pixel-aligned sample centers."""
    rows_in, cols_in = maps.shape[-2:]
    rows_out, cols_out = out_shape
    if (rows_in, cols_in) == (rows_out, cols_out):
        return maps.copy()

    def axis_coords(size_in, size_out):
        src = (np.arange(size_out) + 0.5) * (size_in / size_out) - 0.5
        lo = np.clip(np.floor(src).astype(np.int64), 0, size_in - 1)
        hi = np.minimum(lo + 1, size_in - 1)
        frac = np.clip(src - np.floor(src), 0.0, 1.0)
        frac[src < 0] = 0.0
        frac[src > size_in - 1] = 0.0
        return lo, hi, frac

    r_lo, r_hi, r_frac = axis_coords(rows_in, rows_out)
    c_lo, c_hi, c_frac = axis_coords(cols_in, cols_out)
    top = maps[..., r_lo, :] * (1.0 - r_frac)[:, None] + maps[..., r_hi, :] * r_frac[:, None]
    out = top[..., :, c_lo] * (1.0 - c_frac) + top[..., :, c_hi] * c_frac
    return out


def load_manifest(model_path) -> dict:
    """Read the model's JSON sidecar: tap names/shapes and normalization."""
    model_path = Path(model_path)
    candidates = [model_path.with_suffix(".json"), model_path.parent / "manifest.json"]
    for candidate in candidates:
        if candidate.exists():
            try:
                manifest = json.loads(candidate.read_text())
            except json.JSONDecodeError as exc:
                raise DataError(f"model sidecar {candidate} is not valid JSON: {exc}")
            missing = [
                key
                for key in ("input_name", "input_shape", "tap_names", "tap_shapes", "mean", "std")
                if key not in manifest
            ]
            if missing:
                raise DataError(
                    f"model sidecar {candidate} lacks required keys: {', '.join(missing)}"
                )
            return manifest
    raise ConfigError(
        f"no metadata sidecar found for {model_path} "
        f"(looked for {candidates[0].name} and manifest.json)"
    )


class _OnnxAdapter:
    """Session wrapper resolving the spec against the model's sidecar."""

    def __init__(self, spec: ExtractorSpec):
        try:
            import onnxruntime
        except ImportError:
            raise ConfigError(
                "the onnx_backbone extractor requires the onnxruntime package"
            )
        model_path = Path(spec.model_path)
        if not model_path.exists():
            raise ConfigError(f"model file {model_path} does not exist")
        manifest = load_manifest(model_path)
        try:
            self.session = onnxruntime.InferenceSession(
                str(model_path), providers=["CPUExecutionProvider"]
            )
        except Exception as exc:
            raise DataError(f"cannot load ONNX model {model_path}: {exc}")
        self.input_name = manifest["input_name"]
        self.tap_names = tuple(spec.tap_names or manifest["tap_names"])
        self.tap_shapes = tuple(
            tuple(shape) for shape in (spec.tap_shapes or manifest["tap_shapes"])
        )
        self.mean = np.asarray(spec.input_mean or manifest["mean"], dtype=np.float32)
        self.std = np.asarray(spec.input_std or manifest["std"], dtype=np.float32)
        self.expected_input = tuple(manifest["input_shape"])
        self.window = spec.pooling_window
        self._check_signature()

    def _check_signature(self):
        inputs = self.session.get_inputs()
        problems = []
        if len(inputs) != 1:
            problems.append(f"expected 1 input, model declares {len(inputs)}")
        else:
            entry = inputs[0]
            if entry.name != self.input_name:
                problems.append(
                    f"input name: sidecar says {self.input_name!r}, model says {entry.name!r}"
                )
            shape = tuple(entry.shape)
            if shape != self.expected_input:
                problems.append(f"input shape: sidecar {self.expected_input}, model {shape}")
            if "float" not in str(entry.type):
                problems.append(f"input type {entry.type} is not floating point")
        declared = {out.name for out in self.session.get_outputs()}
        for name in self.tap_names:
            if name not in declared:
                problems.append(f"tap output {name!r} absent from the model graph")
        if problems:
            raise DataError("model signature mismatch: " + "; ".join(problems))

    def metadata(self):
        return {"tap_names": list(self.tap_names), "tap_shapes": [list(s) for s in self.tap_shapes]}

    def extract(self, tile: ImageTile) -> PatchGrid:
        _, rows, cols = tile.pixels.shape
        expected = self.expected_input[-1]
        if rows != expected or cols != expected:
            raise DataError(
                f"tile is {rows}x{cols} but the backbone expects {expected}x{expected}"
            )
        scaled = tile.pixels.astype(np.float32) / 255.0
        normalized = (scaled - self.mean[:, None, None]) / self.std[:, None, None]
        taps = self.session.run(list(self.tap_names), {self.input_name: normalized[None]})
        maps = [np.asarray(t, dtype=np.float64)[0] for t in taps]
        maps.sort(key=lambda m: -m.shape[-1])
        pooled = [average_pool(m, self.window) for m in maps]
        target = pooled[0].shape[-2:]
        aligned = [pooled[0]] + [bilinear_resize(m, target) for m in pooled[1:]]
        stacked = np.concatenate(aligned, axis=0)
        h, w = target
        stride = rows // h
        return PatchGrid(
            features=stacked.transpose(1, 2, 0).reshape(h * w, -1),
            grid_shape=(h, w),
            tile_ref=tile.time_offset,
            receptive_map=_block_rectangles(h, w, stride),
        )


_ADAPTERS = {}


def _adapter_for(spec: ExtractorSpec) -> _OnnxAdapter:
    def freeze(value):
        return tuple(value) if value is not None else None

    key = (
        str(spec.model_path),
        freeze(spec.tap_names),
        freeze(spec.input_mean),
        freeze(spec.input_std),
        spec.pooling_window,
    )
    if key not in _ADAPTERS:
        _ADAPTERS[key] = _OnnxAdapter(spec)
    return _ADAPTERS[key]


def validate_model(spec: ExtractorSpec) -> dict:
    """Open the model once, verify its signature, and report the tap layout."""
    if spec.kind != ONNX_BACKBONE:
        raise ConfigError("validate_model applies to the onnx_backbone extractor")
    return _adapter_for(spec).metadata()


def extract(tile: ImageTile, spec: ExtractorSpec) -> PatchGrid:
    """Turn one tile into its grid of patch feature vectors."""
    if spec.kind == FALLBACK:
        return _extract_fallback(tile, spec)
    return _adapter_for(spec).extract(tile)
