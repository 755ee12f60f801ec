import importlib.util
import json

import numpy as np
import pytest

from scalodet.errors import ConfigError, DataError
from scalodet.features import (
    ExtractorSpec,
    PatchGrid,
    average_pool,
    bilinear_resize,
    extract,
    load_manifest,
    validate_model,
)
from scalodet.imaging import ImageTile

HAVE_ONNXRUNTIME = importlib.util.find_spec("onnxruntime") is not None


def _tile(pixels, offset=0, role="train"):
    return ImageTile(pixels=np.asarray(pixels, dtype=np.uint8), time_offset=offset,
                     source_role=role)


def _fallback():
    return ExtractorSpec(kind="fallback")


class TestExtractorSpec:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            ExtractorSpec(kind="resnet")

    def test_onnx_requires_model_path(self):
        with pytest.raises(ConfigError):
            ExtractorSpec(kind="onnx_backbone")

    def test_fallback_rejects_model_path(self):
        with pytest.raises(ConfigError):
            ExtractorSpec(kind="fallback", model_path="model.onnx")

    def test_even_pooling_window_rejected(self):
        with pytest.raises(ConfigError):
            ExtractorSpec(kind="fallback", pooling_window=2)


class TestFallbackExtractor:
    def test_zero_tile_gives_zero_features(self):
        grid = extract(_tile(np.zeros((3, 32, 32))), _fallback())
        assert grid.grid_shape == (4, 4)
        assert grid.patch_count == 16
        assert grid.channel_count == 64
        np.testing.assert_array_equal(grid.features, 0.0)

    def test_single_bright_block_marks_one_patch(self):
        pixels = np.zeros((3, 32, 32))
        pixels[:, 8:16, 16:24] = 200
        grid = extract(_tile(pixels), _fallback())
        norms = np.linalg.norm(grid.features, axis=1).reshape(4, 4)
        assert norms[1, 2] > 0
        zeroed = norms.copy()
        zeroed[1, 2] = 0.0
        np.testing.assert_array_equal(zeroed, 0.0)

    def test_block_statistics_reach_the_projection_unchanged(self):
        # A constant block has mean v/255 and zero spread, so the projected
        # vector must be (v/255) * sum of the projection's first three columns.
        pixels = np.zeros((3, 16, 16))
        pixels[:, :8, :8] = 51
        grid = extract(_tile(pixels), _fallback())
        from scalodet.features import _PROJECTION

        expected = (51.0 / 255.0) * _PROJECTION[:, :3].sum(axis=1)
        np.testing.assert_allclose(grid.features[0], expected, atol=1e-12)

    def test_projection_matrix_is_orthonormal(self):
        from scalodet.features import _PROJECTION

        gram = _PROJECTION.T @ _PROJECTION
        np.testing.assert_allclose(gram, np.eye(12), atol=1e-12)

    def test_deterministic_across_calls(self):
        rng = np.random.default_rng(8)
        pixels = rng.integers(0, 256, size=(3, 64, 64))
        first = extract(_tile(pixels), _fallback())
        second = extract(_tile(pixels), _fallback())
        np.testing.assert_array_equal(first.features, second.features)

    def test_translation_by_one_block_shifts_the_grid(self):
        rng = np.random.default_rng(15)
        pixels = rng.integers(0, 256, size=(3, 32, 32))
        rolled = np.roll(pixels, 8, axis=2)
        base = extract(_tile(pixels), _fallback()).features.reshape(4, 4, 64)
        moved = extract(_tile(rolled), _fallback()).features.reshape(4, 4, 64)
        np.testing.assert_allclose(moved[:, 1:], base[:, :-1], atol=1e-12)

    def test_receptive_rectangles_tile_the_image(self):
        grid = extract(_tile(np.zeros((3, 32, 32))), _fallback())
        covered = np.zeros((32, 32), dtype=int)
        for top, bottom, left, right in grid.receptive_map:
            covered[top:bottom, left:right] += 1
        np.testing.assert_array_equal(covered, 1)

    def test_constant_map_reconstruction_through_rectangles(self):
        rng = np.random.default_rng(2)
        grid = extract(_tile(rng.integers(0, 256, size=(3, 32, 32))), _fallback())
        values = rng.standard_normal(grid.patch_count)
        painted = np.empty((32, 32))
        for value, (top, bottom, left, right) in zip(values, grid.receptive_map):
            painted[top:bottom, left:right] = value
        repooled = np.array(
            [
                painted[top:bottom, left:right].mean()
                for top, bottom, left, right in grid.receptive_map
            ]
        )
        np.testing.assert_allclose(repooled, values, atol=1e-12)

    def test_offset_recorded(self):
        grid = extract(_tile(np.zeros((3, 16, 16)), offset=384), _fallback())
        assert grid.tile_ref == 384

    def test_non_block_multiple_tile_rejected(self):
        with pytest.raises(DataError):
            extract(_tile(np.zeros((3, 20, 20))), _fallback())


class TestPooling:
    def test_uniform_input_center_and_corner(self):
        maps = np.ones((1, 3, 3))
        out = average_pool(maps, 3)
        assert out[0, 1, 1] == pytest.approx(1.0)
        assert out[0, 0, 0] == pytest.approx(4.0 / 9.0)

    def test_window_one_is_identity(self):
        rng = np.random.default_rng(3)
        maps = rng.standard_normal((2, 5, 5))
        np.testing.assert_allclose(average_pool(maps, 1), maps)

    def test_matches_exhaustive_neighborhood_sum(self):
        rng = np.random.default_rng(4)
        maps = rng.standard_normal((1, 6, 7))
        out = average_pool(maps, 3)
        padded = np.pad(maps[0], 1)
        for r in range(6):
            for c in range(7):
                expected = padded[r : r + 3, c : c + 3].sum() / 9.0
                assert out[0, r, c] == pytest.approx(expected, abs=1e-12)


class TestBilinearResize:
    def test_identity_when_shapes_match(self):
        rng = np.random.default_rng(5)
        maps = rng.standard_normal((2, 4, 4))
        np.testing.assert_array_equal(bilinear_resize(maps, (4, 4)), maps)

    def test_doubling_uses_half_pixel_centers(self):
        maps = np.array([[[0.0, 1.0]]])
        out = bilinear_resize(maps, (1, 4))
        np.testing.assert_allclose(out[0, 0], [0.0, 0.25, 0.75, 1.0])

    def test_two_dimensional_doubling(self):
        maps = np.array([[[0.0, 4.0], [8.0, 12.0]]])
        out = bilinear_resize(maps, (4, 4))
        assert out.shape == (1, 4, 4)
        np.testing.assert_allclose(out[0, 0], [0.0, 1.0, 3.0, 4.0])
        np.testing.assert_allclose(out[0, :, 0], [0.0, 2.0, 6.0, 8.0])
        assert out[0, 1, 1] == pytest.approx((0.75 * 0.75) * 0 + 0.25 * 0.75 * 4
                                             + 0.75 * 0.25 * 8 + 0.25 * 0.25 * 12)

    def test_constant_maps_stay_constant(self):
        maps = np.full((3, 16, 16), 2.5)
        out = bilinear_resize(maps, (32, 32))
        np.testing.assert_allclose(out, 2.5)


class TestManifest:
    def _write(self, path, payload):
        path.write_text(json.dumps(payload))

    def test_loads_sidecar_next_to_model(self, tmp_path):
        payload = {
            "input_name": "input",
            "input_shape": [1, 3, 256, 256],
            "tap_names": ["tap1", "tap2"],
            "tap_shapes": [[1, 64, 32, 32], [1, 128, 16, 16]],
            "mean": [0.485, 0.456, 0.406],
            "std": [0.229, 0.224, 0.225],
        }
        self._write(tmp_path / "model.json", payload)
        assert load_manifest(tmp_path / "model.onnx") == payload

    def test_manifest_json_fallback_name(self, tmp_path):
        payload = {
            "input_name": "x",
            "input_shape": [1, 3, 256, 256],
            "tap_names": ["a"],
            "tap_shapes": [[1, 8, 32, 32]],
            "mean": [0, 0, 0],
            "std": [1, 1, 1],
        }
        self._write(tmp_path / "manifest.json", payload)
        assert load_manifest(tmp_path / "model.onnx") == payload

    def test_missing_sidecar_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="sidecar"):
            load_manifest(tmp_path / "model.onnx")

    def test_incomplete_sidecar_rejected(self, tmp_path):
        self._write(tmp_path / "model.json", {"input_name": "x"})
        with pytest.raises(DataError, match="tap_names"):
            load_manifest(tmp_path / "model.onnx")


class TestOnnxAdapter:
    def test_validate_model_rejects_fallback_spec(self):
        with pytest.raises(ConfigError):
            validate_model(_fallback())

    @pytest.mark.skipif(HAVE_ONNXRUNTIME, reason="onnxruntime is installed")
    def test_missing_runtime_reported_clearly(self, tmp_path):
        payload = {
            "input_name": "x",
            "input_shape": [1, 3, 256, 256],
            "tap_names": ["a"],
            "tap_shapes": [[1, 8, 32, 32]],
            "mean": [0, 0, 0],
            "std": [1, 1, 1],
        }
        (tmp_path / "model.json").write_text(json.dumps(payload))
        (tmp_path / "model.onnx").write_bytes(b"")
        spec = ExtractorSpec(kind="onnx_backbone", model_path=tmp_path / "model.onnx")
        with pytest.raises(ConfigError, match="onnxruntime"):
            validate_model(spec)

    @pytest.mark.skipif(not HAVE_ONNXRUNTIME, reason="onnxruntime not installed")
    def test_exported_reference_model_signature(self):
        # Exercised when a backbone export exists; see the export tool's own
        # test suite for the cross-runtime numeric check.
        from pathlib import Path

        model = Path(__file__).resolve().parents[1] / "backbone-export" / "out" / "model.onnx"
        if not model.exists():
            pytest.skip("no exported model available")
        spec = ExtractorSpec(kind="onnx_backbone", model_path=model)
        metadata = validate_model(spec)
        shapes = [tuple(s[-2:]) for s in metadata["tap_shapes"]]
        assert (32, 32) in shapes and (16, 16) in shapes


class TestPatchGridValidation:
    def test_mismatched_grid_shape_rejected(self):
        with pytest.raises(DataError):
            PatchGrid(
                features=np.zeros((4, 8)),
                grid_shape=(2, 3),
                tile_ref=0,
                receptive_map=np.zeros((4, 4), dtype=np.int64),
            )

    def test_non_finite_features_rejected(self):
        rects = np.array([[0, 8, 0, 8]] * 4)
        feats = np.zeros((4, 8))
        feats[1, 2] = np.nan
        with pytest.raises(DataError):
            PatchGrid(features=feats, grid_shape=(2, 2), tile_ref=0, receptive_map=rects)

    def test_empty_rectangles_rejected(self):
        rects = np.array([[0, 0, 0, 8]] * 4)
        with pytest.raises(DataError):
            PatchGrid(features=np.zeros((4, 8)), grid_shape=(2, 2), tile_ref=0,
                      receptive_map=rects)
