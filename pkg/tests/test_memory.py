import numpy as np
import pytest

from scalodet.errors import ConfigError, DataError
from scalodet.features import PatchGrid
from scalodet.memory import (
    MemoryBank,
    PatchScoreMap,
    build_coreset,
    coreset_size,
    load_memory_bank,
    save_memory_bank,
    score_features,
    score_patches,
    stack_features,
)

from oracles import greedy_radius, optimal_k_center_radius, reweighted_knn_scores


def _bank(points, b=9):
    return MemoryBank(coreset=np.atleast_2d(np.asarray(points, dtype=np.float64)),
                      neighbor_count=b)


def _grid(features, shape, offset=0):
    h, w = shape
    stride = 8
    rects = np.array(
        [[i * stride, (i + 1) * stride, j * stride, (j + 1) * stride]
         for i in range(h) for j in range(w)],
        dtype=np.int64,
    )
    return PatchGrid(features=features, grid_shape=shape, tile_ref=offset,
                     receptive_map=rects)


class TestCoresetSize:
    def test_reference_ratio(self):
        assert coreset_size(10000, 0.01) == 100

    def test_floor_of_half_up(self):
        assert coreset_size(100, 0.015) == 2
        assert coreset_size(149, 0.01) == 1
        assert coreset_size(151, 0.01) == 2

    def test_at_least_one(self):
        assert coreset_size(3, 0.01) == 1


class TestBuildCoreset:
    def test_full_ratio_keeps_every_point(self):
        rng = np.random.default_rng(1)
        features = rng.standard_normal((12, 4))
        bank = build_coreset(features, ratio=1.0)
        assert sorted(bank.indices.tolist()) == list(range(12))
        np.testing.assert_array_equal(np.sort(bank.indices), np.arange(12))

    def test_unit_square_hand_trace(self):
        corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        bank = build_coreset(corners, ratio=0.5)
        assert bank.indices.tolist() == [0, 3]
        np.testing.assert_array_equal(bank.coreset, corners[[0, 3]])

    def test_coreset_rows_are_input_rows(self):
        rng = np.random.default_rng(7)
        features = rng.standard_normal((200, 6))
        bank = build_coreset(features, ratio=0.1)
        assert bank.size == 20
        np.testing.assert_array_equal(bank.coreset, features[bank.indices])

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        features = rng.standard_normal((100, 5))
        first = build_coreset(features.copy(), ratio=0.2, seed=11)
        second = build_coreset(features.copy(), ratio=0.2, seed=11)
        np.testing.assert_array_equal(first.indices, second.indices)

    def test_projection_speedup_is_seed_deterministic(self):
        rng = np.random.default_rng(5)
        features = rng.standard_normal((80, 32))
        first = build_coreset(features, ratio=0.25, seed=9, projection_dim=8)
        second = build_coreset(features, ratio=0.25, seed=9, projection_dim=8)
        np.testing.assert_array_equal(first.indices, second.indices)
        np.testing.assert_array_equal(first.coreset, features[first.indices])

    def test_duplicate_points_never_selected_twice(self):
        features = np.zeros((6, 3))
        features[3] = 1.0
        bank = build_coreset(features, ratio=1.0)
        assert sorted(bank.indices.tolist()) == list(range(6))

    def test_greedy_radius_within_twice_optimal(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            count = int(rng.integers(6, 13))
            points = rng.standard_normal((count, 2))
            target = int(rng.integers(2, 4))
            bank = build_coreset(points, ratio=target / count)
            assert bank.size == target
            achieved = greedy_radius(points, bank.indices)
            optimal = optimal_k_center_radius(points, target)
            assert achieved <= 2.0 * optimal + 1e-12

    def test_bad_inputs_rejected(self):
        with pytest.raises(DataError):
            build_coreset(np.zeros((0, 4)), ratio=0.5)
        with pytest.raises(ConfigError):
            build_coreset(np.zeros((4, 2)), ratio=0.0)
        with pytest.raises(ConfigError):
            build_coreset(np.zeros((4, 2)), ratio=1.5)

    def test_stacks_patch_grids(self):
        rng = np.random.default_rng(2)
        grids = [_grid(rng.standard_normal((4, 6)), (2, 2), offset=k) for k in (0, 8)]
        stacked = stack_features(grids)
        assert stacked.shape == (8, 6)
        np.testing.assert_array_equal(stacked[:4], grids[0].features)
        bank = build_coreset(grids, ratio=0.5)
        assert bank.size == 4


class TestScoreFeatures:
    def test_exact_match_scores_zero(self):
        bank = _bank([[1.0, 2.0], [3.0, 4.0]], b=9)
        scores = score_features(np.array([[3.0, 4.0]]), bank)
        assert scores[0] == 0.0

    def test_single_point_bank_gives_plain_distance(self):
        bank = _bank([[1.0, 1.0]], b=9)
        scores = score_features(np.array([[4.0, 5.0]]), bank)
        assert scores[0] == pytest.approx(5.0)

    def test_line_bank_reference_case(self):
        bank = _bank([[0.0], [1.0], [2.0]], b=3)
        scores = score_features(np.array([[0.4]]), bank)
        expected = reweighted_knn_scores(np.array([[0.4]]), bank.coreset, 3)
        assert scores[0] == pytest.approx(expected[0], abs=1e-9)
        by_hand = (1.0 - np.exp(0.4) / (np.e**0.4 + np.e**0.6 + np.e**1.6)) * 0.4
        assert scores[0] == pytest.approx(by_hand, abs=1e-12)

    def test_matches_exhaustive_oracle(self):
        rng = np.random.default_rng(23)
        for b, m in [(1, 5), (3, 5), (9, 50), (9, 5), (5, 1)]:
            bank = MemoryBank(coreset=rng.standard_normal((m, 7)), neighbor_count=b)
            tests = rng.standard_normal((40, 7))
            got = score_features(tests, bank)
            expected = reweighted_knn_scores(tests, bank.coreset, b)
            np.testing.assert_allclose(got, expected, atol=1e-9)

    def test_no_reweight_is_nearest_distance(self):
        rng = np.random.default_rng(31)
        bank = MemoryBank(coreset=rng.standard_normal((30, 4)), neighbor_count=9)
        tests = rng.standard_normal((20, 4))
        got = score_features(tests, bank, reweight=False)
        brute = np.sqrt(
            ((tests[:, None, :] - bank.coreset[None, :, :]) ** 2).sum(axis=2)
        ).min(axis=1)
        np.testing.assert_allclose(got, brute, atol=1e-12)

    def test_single_neighbor_degenerates_to_nearest(self):
        rng = np.random.default_rng(37)
        coreset = rng.standard_normal((10, 3))
        tests = rng.standard_normal((15, 3))
        one_neighbor = MemoryBank(coreset=coreset, neighbor_count=1)
        got = score_features(tests, one_neighbor)
        np.testing.assert_allclose(got, score_features(tests, one_neighbor, reweight=False))

    def test_monotone_in_nearest_distance_within_regime(self):
        # Bank point j sits at distance d_j along axis j from the test point
        # at the origin, so moving point 0 outward raises the nearest
        # distance while the other neighbor distances stay put. The formula
        # is monotone while the nearest distance stays below the neighbor
        # count.
        rng = np.random.default_rng(41)
        b = 9
        for _ in range(50):
            others = np.sort(rng.uniform(2.0, 5.0, b - 1))
            s_low = rng.uniform(0.1, others[0])
            s_high = rng.uniform(s_low, min(others[0], float(b)))
            coreset = np.zeros((b, b))
            for j, d in enumerate(others, start=1):
                coreset[j, j] = d
            test_point = np.zeros((1, b))
            coreset[0, 0] = s_low
            low_bank = MemoryBank(coreset=coreset.copy(), neighbor_count=b)
            low = score_features(test_point, low_bank)[0]
            coreset[0, 0] = s_high
            high_bank = MemoryBank(coreset=coreset.copy(), neighbor_count=b)
            high = score_features(test_point, high_bank)[0]
            assert high >= low - 1e-12

    def test_tree_index_matches_brute_force(self):
        rng = np.random.default_rng(43)
        for m in (50, 2000, 5000):
            bank = MemoryBank(coreset=rng.standard_normal((m, 8)), neighbor_count=9)
            tests = rng.standard_normal((50, 8))
            brute = score_features(tests, bank, index="brute")
            tree = score_features(tests, bank, index="tree")
            np.testing.assert_allclose(tree, brute, atol=1e-12)
            raw_brute = score_features(tests, bank, reweight=False, index="brute")
            raw_tree = score_features(tests, bank, reweight=False, index="tree")
            np.testing.assert_allclose(raw_tree, raw_brute, atol=1e-12)

    def test_scores_are_nonnegative(self):
        rng = np.random.default_rng(47)
        bank = MemoryBank(coreset=rng.standard_normal((64, 6)), neighbor_count=9)
        scores = score_features(rng.standard_normal((200, 6)) * 5, bank)
        assert scores.min() >= 0.0

    def test_large_distances_do_not_overflow(self):
        bank = _bank([[0.0], [1e4]], b=2)
        scores = score_features(np.array([[5e3]]), bank)
        assert np.isfinite(scores[0])

    def test_dimension_mismatch_rejected(self):
        bank = _bank([[0.0, 1.0]])
        with pytest.raises(DataError):
            score_features(np.zeros((3, 3)), bank)

    def test_unknown_index_rejected(self):
        bank = _bank([[0.0]])
        with pytest.raises(ConfigError):
            score_features(np.zeros((1, 1)), bank, index="annoy")


class TestScorePatches:
    def test_shape_and_offset(self):
        rng = np.random.default_rng(3)
        grid = _grid(rng.standard_normal((6, 4)), (2, 3), offset=128)
        bank = MemoryBank(coreset=rng.standard_normal((10, 4)), neighbor_count=3)
        out = score_patches(grid, bank)
        assert isinstance(out, PatchScoreMap)
        assert out.scores.shape == (2, 3)
        assert out.tile_ref == 128
        flat = score_features(grid.features, bank)
        np.testing.assert_array_equal(out.scores.ravel(), flat)


class TestBankValidation:
    def test_empty_coreset_rejected(self):
        with pytest.raises(DataError):
            MemoryBank(coreset=np.zeros((0, 4)))

    def test_invalid_parameters_rejected(self):
        with pytest.raises(ConfigError):
            MemoryBank(coreset=np.zeros((2, 2)), sampling_ratio=0.0)
        with pytest.raises(ConfigError):
            MemoryBank(coreset=np.zeros((2, 2)), neighbor_count=0)

    def test_non_finite_rejected(self):
        coreset = np.zeros((2, 2))
        coreset[0, 0] = np.inf
        with pytest.raises(DataError):
            MemoryBank(coreset=coreset)

    def test_negative_scores_rejected(self):
        with pytest.raises(DataError):
            PatchScoreMap(scores=np.array([[0.5, -0.1]]), tile_ref=0)


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(19)
        bank = build_coreset(rng.standard_normal((50, 8)), ratio=0.2, seed=4)
        save_memory_bank(bank, tmp_path / "bank")
        loaded = load_memory_bank(tmp_path / "bank")
        np.testing.assert_array_equal(loaded.coreset, bank.coreset)
        np.testing.assert_array_equal(loaded.indices, bank.indices)
        assert loaded.sampling_ratio == bank.sampling_ratio
        assert loaded.neighbor_count == bank.neighbor_count
        assert loaded.build_seed == bank.build_seed

    def test_wrong_kind_rejected(self, tmp_path):
        from scalodet.storage import save_array_bundle

        save_array_bundle(tmp_path / "bank", {"kind": "other"}, np.zeros((2, 2)))
        with pytest.raises(DataError):
            load_memory_bank(tmp_path / "bank")
