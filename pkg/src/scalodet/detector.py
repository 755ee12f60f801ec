"""The end-to-end detector as a scikit-learn style estimator.

Fitting learns nothing in the neural sense: it freezes the frequency
grid, the aggregation maps, the imaging normalization, and a coreset
memory bank of training patch features. Scoring renders the test
series through the same frozen path and measures patch novelty
against the bank.

Input arrays are time-major: X[t, d] is dimension d at step t, so the
estimator follows the usual samples-by-features convention.
"""

from __future__ import annotations

from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import aggregation, imaging
from .aggregation import (
    PCA,
    RANDOM,
    apply_pca_map,
    apply_random_map,
    fit_pca_map,
    generate_random_matrix,
    select_point_counts,
)
from .assembly import AnomalyScoreSeries, assemble, edge_correct, threshold
from .cwt import (
    MORLET,
    RICKER,
    WaveletSpec,
    build_frequency_grid,
    compute_scalograms,
    normalize_stack,
)
from .errors import ComputeError, ConfigError, DataError, ScalodetError
from .features import FALLBACK, ONNX_BACKBONE, ExtractorSpec, extract
from .imaging import (
    TEST,
    TRAIN,
    ChannelNormalization,
    embed_channels,
    fit_channel_normalization,
    normalize_for_imaging,
    pad_frequency_axis,
    tile,
)
from .memory import build_coreset, load_memory_bank, save_memory_bank, score_patches
from .series import MultivariateSeries
from .storage import load_array_bundle, read_json, save_array_bundle, write_json

_METHODS = {"pca": PCA, "rm": RANDOM}
_STATE_KIND = "detector_state"


@dataclass(frozen=True)
class DetectionResult:
    """Edge-corrected scores plus the per-step peak frequency row."""

    series: AnomalyScoreSeries
    frequency_rows: np.ndarray

    def __post_init__(self) -> None:
        if self.frequency_rows.shape != (self.series.length,):
            raise DataError("frequency rows do not match the score series")


@contextmanager
def _stage(name: str):
    """Tag errors with the pipeline stage they came from."""
    try:
        yield
    except ScalodetError as exc:
        raise type(exc)(f"{name}: {exc}") from exc
    except Exception as exc:  # pragma: no cover - defensive
        raise ComputeError(f"{name}: unexpected failure: {exc}") from exc


def _as_series(X, name: str) -> MultivariateSeries:
    if isinstance(X, MultivariateSeries):
        return X
    values = np.asarray(X, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if values.ndim != 2:
        raise DataError(f"input must be a (T, D) array, got shape {values.shape}")
    return MultivariateSeries(values=values.T, name=name)


class ScalogramAnomalyDetector(BaseEstimator):
    """Training-free anomaly scoring through scalogram images.

    Parameters mirror the pipeline configuration; see the package
    documentation for the full data flow. ``mapping`` selects how the
    per-dimension scalograms collapse into one image per wavelet:
    ``"pca"`` fits principal components on the training series,
    ``"rm"`` averages random dimension subsets. ``backbone`` points at
    an ONNX feature extractor; without one, a deterministic projection
    extractor is used.
    """

    def __init__(
        self,
        mapping: str = "pca",
        window: int = 256,
        stride: int = 128,
        headroom: float = 1.2,
        ratio: float = 0.01,
        neighbors: int = 9,
        p: int = 5,
        seed: int = 0,
        channels: str = "RGB",
        backbone: str | None = None,
        pooling_window: int = 3,
        reweight: bool = True,
        projection_dim: int | None = None,
        wavelets: tuple[str, ...] = (MORLET, RICKER),
    ):
        self.mapping = mapping
        self.window = window
        self.stride = stride
        self.headroom = headroom
        self.ratio = ratio
        self.neighbors = neighbors
        self.p = p
        self.seed = seed
        self.channels = channels
        self.backbone = backbone
        self.pooling_window = pooling_window
        self.reweight = reweight
        self.projection_dim = projection_dim
        self.wavelets = wavelets

    # -- configuration ------------------------------------------------

    def _resolved(self):
        """Validate parameters and build the derived immutable pieces."""
        if self.mapping not in _METHODS:
            raise ConfigError(
                f"mapping must be one of {', '.join(sorted(_METHODS))}, "
                f"got {self.mapping!r}"
            )
        wavelets = tuple(self.wavelets)
        if len(wavelets) != 2:
            raise ConfigError(f"exactly two wavelets are required, got {len(wavelets)}")
        specs = tuple(WaveletSpec(kind=kind) for kind in wavelets)
        mask = frozenset(self.channels)
        params = imaging.ImagingParams(
            headroom=self.headroom,
            tile_size=self.window,
            stride=self.stride,
            channel_mask=mask,
        )
        if self.backbone is None:
            extractor = ExtractorSpec(kind=FALLBACK, pooling_window=self.pooling_window)
        else:
            extractor = ExtractorSpec(
                kind=ONNX_BACKBONE,
                model_path=Path(self.backbone),
                pooling_window=self.pooling_window,
            )
        return _METHODS[self.mapping], specs, params, extractor

    # -- fitting ------------------------------------------------------

    def fit(self, X, y=None):
        """Freeze the pipeline state on a normal training series."""
        with _stage("configure"):
            method, specs, params, extractor = self._resolved()
            series = _as_series(X, "train")
        with _stage("grid"):
            omega, width = select_point_counts(
                method, self.window, series.dimensions, series.length
            )
            grid = build_frequency_grid(self.window, omega)
        with _stage("transform"):
            stack = normalize_stack(compute_scalograms(series, specs, grid))
        with _stage("aggregate"):
            if method == PCA:
                maps = [
                    fit_pca_map(stack, i, width) for i in range(len(specs))
                ]
                matrix = None
                aggregates = [
                    apply_pca_map(stack, i, maps[i]) for i in range(len(specs))
                ]
            else:
                maps = None
                matrix = generate_random_matrix(
                    len(specs), series.dimensions, omega, p=self.p, seed=self.seed
                )
                aggregates = apply_random_map(stack, matrix)
        with _stage("imaging"):
            norms = tuple(fit_channel_normalization(agg) for agg in aggregates)
            image = self._embed(aggregates, norms, params)
            tiles = tile(image, self.window, params.stride, TRAIN)
        with _stage("features"):
            grids = [extract(t, extractor) for t in tiles]
        with _stage("memory"):
            bank = build_coreset(
                grids,
                ratio=self.ratio,
                seed=self.seed,
                neighbor_count=self.neighbors,
                projection_dim=self.projection_dim,
            )
        with _stage("assembly"):
            maps_scored = [
                score_patches(g, bank, reweight=self.reweight) for g in grids
            ]
            receptive_map = grids[0].receptive_map
            assembled = assemble(
                maps_scored, receptive_map, series.length, self.window
            )

        self.n_features_in_ = series.dimensions
        self.train_length_ = series.length
        self.omega_ = omega
        self.width_ = width
        self.grid_ = grid
        self.maps_ = maps
        self.matrix_ = matrix
        self.channel_norms_ = norms
        self.bank_ = bank
        self.receptive_map_ = receptive_map
        self.train_scores_ = assembled.scores
        return self

    def _embed(self, aggregates, norms, params) -> np.ndarray:
        units = []
        for agg, norm in zip(aggregates, norms):
            unit = normalize_for_imaging(agg, norm, params.headroom)
            units.append(pad_frequency_axis(unit, self.window))
        return embed_channels(units[0], units[1], params.channel_mask)

    # -- scoring ------------------------------------------------------

    def _check_fitted(self) -> None:
        if not hasattr(self, "bank_"):
            raise NotFittedError(
                "this detector is not fitted yet; call fit with training data first"
            )

    def _check_dims(self, series: MultivariateSeries) -> None:
        if series.dimensions != self.n_features_in_:
            raise DataError(
                f"series has {series.dimensions} dimensions, "
                f"the detector was fitted with {self.n_features_in_}"
            )

    def _render(self, series: MultivariateSeries, params, role: str, want_tiles=True):
        with _stage("transform"):
            stack = normalize_stack(
                compute_scalograms(series, self._wavelet_specs(), self.grid_)
            )
        with _stage("aggregate"):
            if self.maps_ is not None:
                aggregates = [
                    apply_pca_map(stack, i, m) for i, m in enumerate(self.maps_)
                ]
            else:
                aggregates = apply_random_map(stack, self.matrix_)
        with _stage("imaging"):
            image = self._embed(aggregates, self.channel_norms_, params)
            tiles = tile(image, self.window, params.stride, role) if want_tiles else None
        return image, tiles

    def _wavelet_specs(self):
        return tuple(WaveletSpec(kind=kind) for kind in self.wavelets)

    def detect(self, X) -> DetectionResult:
        """Score a test series; returns the corrected series and the
        frequency row attaining each step's maximum."""
        self._check_fitted()
        with _stage("configure"):
            _, _, params, extractor = self._resolved()
            series = _as_series(X, "test")
            self._check_dims(series)
            if series.length <= 2 * self.window:
                raise DataError(
                    f"test series must be longer than twice the window "
                    f"({2 * self.window}), got {series.length}"
                )
        _, tiles = self._render(series, params, TEST)
        with _stage("features"):
            grids = [extract(t, extractor) for t in tiles]
        with _stage("memory"):
            maps_scored = [
                score_patches(g, self.bank_, reweight=self.reweight) for g in grids
            ]
        with _stage("assembly"):
            assembled = assemble(
                maps_scored, self.receptive_map_, series.length, self.window
            )
            corrected = edge_correct(
                assembled.scores, self.window, self.train_scores_
            )
        return DetectionResult(
            series=corrected, frequency_rows=assembled.frequency_rows
        )

    def score_samples(self, X) -> np.ndarray:
        """Anomaly score per time step; higher means more anomalous."""
        return self.detect(X).series.scores

    def predict(self, X, delta: float | None = None) -> np.ndarray:
        """Binary predictions. Without an explicit threshold, any score
        above everything seen on the training series counts as anomalous."""
        self._check_fitted()
        scores = self.score_samples(X)
        if delta is None:
            delta = float(np.nextafter(self.train_scores_.max(), np.inf))
        return threshold(scores, delta)

    def render_tiles(self, X, role: str = TEST):
        """The full image and its tiles for a series, frozen-state path."""
        self._check_fitted()
        with _stage("configure"):
            _, _, params, _ = self._resolved()
            series = _as_series(X, role)
            self._check_dims(series)
        return self._render(series, params, role)

    def transform(self, X) -> np.ndarray:
        """Per-step image encoding: each row flattens the three channel
        columns at that time step, scaled to [0, 1]."""
        self._check_fitted()
        with _stage("configure"):
            _, _, params, _ = self._resolved()
            series = _as_series(X, "transform")
            self._check_dims(series)
        image, _ = self._render(series, params, TEST, want_tiles=False)
        return image.transpose(1, 0, 2).reshape(series.length, -1) / 255.0


def save_state(detector: ScalogramAnomalyDetector, directory) -> None:
    """Persist a fitted detector so later runs can skip fitting."""
    detector._check_fitted()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "kind": _STATE_KIND,
        "params": {
            key: (list(value) if isinstance(value, tuple) else value)
            for key, value in detector.get_params().items()
        },
        "dims": detector.n_features_in_,
        "train_length": detector.train_length_,
        "omega": detector.omega_,
        "width": detector.width_,
        "channel_norms": [
            [norm.minimum, norm.maximum] for norm in detector.channel_norms_
        ],
    }
    write_json(meta, directory / "state.json")
    if detector.maps_ is not None:
        for i, pca_map in enumerate(detector.maps_):
            aggregation.save_pca_map(pca_map, directory / f"pca_map_{i}")
    else:
        aggregation.save_random_matrix(detector.matrix_, directory / "random_matrix")
    save_memory_bank(detector.bank_, directory / "memory_bank")
    save_array_bundle(
        directory / "train_scores", {"kind": "train_scores"}, detector.train_scores_
    )
    save_array_bundle(
        directory / "receptive_map", {"kind": "receptive_map"}, detector.receptive_map_
    )


def load_state(directory) -> ScalogramAnomalyDetector:
    """Rebuild a fitted detector saved with save_state."""
    directory = Path(directory)
    state_path = directory / "state.json"
    if not state_path.is_file():
        raise DataError(f"no detector state found at {directory}")
    meta = read_json(state_path)
    if meta.get("kind") != _STATE_KIND:
        raise DataError(f"{state_path} does not hold detector state")
    params = dict(meta["params"])
    if "wavelets" in params:
        params["wavelets"] = tuple(params["wavelets"])
    detector = ScalogramAnomalyDetector(**params)
    detector.n_features_in_ = int(meta["dims"])
    detector.train_length_ = int(meta["train_length"])
    detector.omega_ = int(meta["omega"])
    detector.width_ = int(meta["width"])
    detector.grid_ = build_frequency_grid(detector.window, detector.omega_)
    detector.channel_norms_ = tuple(
        ChannelNormalization(minimum=lo, maximum=hi)
        for lo, hi in meta["channel_norms"]
    )
    if (directory / "random_matrix.json").is_file():
        detector.maps_ = None
        detector.matrix_ = aggregation.load_random_matrix(directory / "random_matrix")
    else:
        detector.matrix_ = None
        detector.maps_ = [
            aggregation.load_pca_map(directory / f"pca_map_{i}") for i in range(2)
        ]
    detector.bank_ = load_memory_bank(directory / "memory_bank")
    _, train_scores = load_array_bundle(directory / "train_scores")
    detector.train_scores_ = train_scores
    _, receptive_map = load_array_bundle(directory / "receptive_map")
    detector.receptive_map_ = receptive_map.astype(np.int64)
    return detector
