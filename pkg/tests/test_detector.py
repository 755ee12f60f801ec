import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from scalodet.detector import (
    DetectionResult,
    ScalogramAnomalyDetector,
    load_state,
    save_state,
)
from scalodet.errors import ConfigError, DataError


def _sine(length, freq, noise=0.05, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    return np.sin(2 * np.pi * freq * t) + noise * rng.standard_normal(length)


@pytest.fixture(scope="module")
def univariate_case():
    train = _sine(512, 0.05, seed=1)
    test = _sine(640, 0.05, seed=2)
    t = np.arange(640)
    test[300:330] = np.sin(2 * np.pi * 0.10 * t[300:330])
    return train, test, (300, 329)


@pytest.fixture(scope="module")
def fitted(univariate_case):
    train, _, _ = univariate_case
    return ScalogramAnomalyDetector(window=64, stride=32, ratio=0.1).fit(train)


class TestFit:
    def test_attributes(self, fitted, univariate_case):
        train, _, _ = univariate_case
        assert fitted.n_features_in_ == 1
        assert fitted.train_length_ == train.size
        assert fitted.omega_ == 64
        assert fitted.width_ == 64
        assert fitted.train_scores_.shape == (train.size,)
        assert fitted.bank_.size >= 1
        assert fitted.receptive_map_.shape[1] == 4
        assert len(fitted.channel_norms_) == 2

    def test_returns_self(self, univariate_case):
        train, _, _ = univariate_case
        det = ScalogramAnomalyDetector(window=64, stride=32, ratio=0.1)
        assert det.fit(train) is det

    def test_multivariate_input(self):
        train = np.stack([_sine(256, 0.05), _sine(256, 0.08)], axis=1)
        det = ScalogramAnomalyDetector(window=32, stride=16, ratio=0.1).fit(train)
        assert det.n_features_in_ == 2
        # PCA grid is capped by the per-dimension budget.
        assert det.omega_ == 32
        assert det.width_ == 32

    def test_random_mapping_univariate_is_all_ones(self):
        det = ScalogramAnomalyDetector(
            mapping="rm", window=32, stride=16, ratio=0.1
        ).fit(_sine(256, 0.05))
        assert det.matrix_.gamma.shape == (2, 1, 32)
        assert np.all(det.matrix_.gamma == 1)

    def test_stage_name_in_errors(self):
        with pytest.raises(ConfigError, match="configure:"):
            ScalogramAnomalyDetector(mapping="tsne", window=32).fit(_sine(64, 0.1))
        with pytest.raises(DataError, match="imaging:"):
            # Long enough for the grid but shorter than one tile.
            ScalogramAnomalyDetector(window=32, stride=16).fit(_sine(16, 0.1))

    def test_crafted_params_validated(self):
        with pytest.raises(ConfigError, match="wavelet"):
            ScalogramAnomalyDetector(wavelets=("ricker",), window=32).fit(
                _sine(64, 0.1)
            )


class TestDetect:
    def test_result_shape_and_edges(self, fitted, univariate_case):
        _, test, _ = univariate_case
        result = fitted.detect(test)
        assert isinstance(result, DetectionResult)
        series = result.series
        assert series.scores.shape == (test.size,)
        assert series.edge_ranges == ((0, 64), (test.size - 64, test.size))
        assert np.all(series.scores[:64] == series.floor_value)
        assert np.all(series.scores[-64:] == series.floor_value)
        assert result.frequency_rows.shape == (test.size,)
        assert result.frequency_rows.min() >= 0
        assert result.frequency_rows.max() < 64

    def test_anomaly_localized(self, fitted, univariate_case):
        _, test, segment = univariate_case
        scores = fitted.score_samples(test)
        peak = int(np.argmax(scores))
        assert segment[0] - 100 <= peak <= segment[1] + 100

    def test_deterministic(self, univariate_case):
        train, test, _ = univariate_case
        runs = []
        for _ in range(2):
            det = ScalogramAnomalyDetector(window=64, stride=32, ratio=0.1).fit(train)
            runs.append(det.score_samples(test))
        np.testing.assert_array_equal(runs[0], runs[1])

    def test_score_samples_matches_detect(self, fitted, univariate_case):
        _, test, _ = univariate_case
        np.testing.assert_array_equal(
            fitted.score_samples(test), fitted.detect(test).series.scores
        )

    def test_dimension_mismatch(self, fitted):
        with pytest.raises(DataError, match="dimensions"):
            fitted.detect(np.zeros((200, 3)))

    def test_short_test_series(self, fitted):
        with pytest.raises(DataError, match="twice the window"):
            fitted.detect(_sine(128, 0.05))

    def test_unfitted_errors(self):
        det = ScalogramAnomalyDetector()
        for call in (det.score_samples, det.predict, det.transform, det.detect):
            with pytest.raises(NotFittedError):
                call(np.zeros(600))


class TestPredict:
    def test_explicit_threshold(self, fitted, univariate_case):
        _, test, _ = univariate_case
        scores = fitted.score_samples(test)
        delta = float(np.median(scores))
        np.testing.assert_array_equal(
            fitted.predict(test, delta=delta), (scores >= delta).astype(int)
        )

    def test_default_threshold_properties(self, fitted, univariate_case):
        # Any score exceeding everything seen in training is flagged, so
        # the peak is flagged and the floored edges never are.
        _, test, _ = univariate_case
        labels = fitted.predict(test)
        scores = fitted.score_samples(test)
        assert set(np.unique(labels)) <= {0, 1}
        assert labels[int(np.argmax(scores))] == 1
        assert np.all(labels[:64] == 0)
        assert np.all(labels[-64:] == 0)
        train_max = fitted.train_scores_.max()
        np.testing.assert_array_equal(labels, (scores > train_max).astype(int))


class TestTransform:
    def test_image_rows(self, fitted, univariate_case):
        _, test, _ = univariate_case
        rows = fitted.transform(test)
        assert rows.shape == (test.size, 3 * 64)
        assert rows.min() >= 0.0 and rows.max() <= 1.0
        # The blue block is the constant frequency ramp.
        blue = rows[:, 2 * 64 :]
        np.testing.assert_array_equal(blue, np.tile(blue[0], (test.size, 1)))
        assert blue[0, 0] == 0.0
        assert blue[0, -1] == 1.0

    def test_short_series_allowed(self, fitted):
        rows = fitted.transform(_sine(40, 0.05))
        assert rows.shape == (40, 3 * 64)


class TestChannelAblation:
    @pytest.mark.parametrize("channels", ["GB", "RB", "RG", "R", "G"])
    def test_masks_run_end_to_end(self, channels):
        train = _sine(256, 0.06, seed=3)
        test = _sine(288, 0.06, seed=4)
        det = ScalogramAnomalyDetector(
            window=32, stride=16, ratio=0.1, channels=channels
        ).fit(train)
        scores = det.score_samples(test)
        assert scores.shape == (288,)
        assert np.isfinite(scores).all()


class TestState:
    def test_round_trip_bit_exact(self, fitted, univariate_case, tmp_path):
        _, test, _ = univariate_case
        save_state(fitted, tmp_path / "state")
        loaded = load_state(tmp_path / "state")
        np.testing.assert_array_equal(
            loaded.score_samples(test), fitted.score_samples(test)
        )
        np.testing.assert_array_equal(loaded.train_scores_, fitted.train_scores_)
        np.testing.assert_array_equal(loaded.bank_.coreset, fitted.bank_.coreset)
        assert loaded.get_params() == fitted.get_params()

    def test_random_mapping_round_trip(self, tmp_path):
        train = np.stack([_sine(256, 0.05), _sine(256, 0.07)], axis=1)
        test = np.stack([_sine(288, 0.05, seed=9), _sine(288, 0.07, seed=9)], axis=1)
        det = ScalogramAnomalyDetector(
            mapping="rm", window=32, stride=16, ratio=0.1, seed=5
        ).fit(train)
        save_state(det, tmp_path / "state")
        loaded = load_state(tmp_path / "state")
        np.testing.assert_array_equal(
            loaded.score_samples(test), det.score_samples(test)
        )
        np.testing.assert_array_equal(loaded.matrix_.gamma, det.matrix_.gamma)

    def test_missing_state(self, tmp_path):
        with pytest.raises(DataError, match="no detector state"):
            load_state(tmp_path / "nothing")

    def test_unfitted_cannot_save(self, tmp_path):
        with pytest.raises(NotFittedError):
            save_state(ScalogramAnomalyDetector(), tmp_path / "state")


class TestSklearnProtocol:
    def test_get_params_round_trip(self, fitted):
        params = fitted.get_params()
        rebuilt = ScalogramAnomalyDetector(**params)
        assert rebuilt.get_params() == params

    def test_clone(self):
        det = ScalogramAnomalyDetector(window=64, seed=3, channels="GB")
        other = clone(det)
        assert other.get_params() == det.get_params()
        assert not hasattr(other, "bank_")

    def test_set_params(self):
        det = ScalogramAnomalyDetector()
        det.set_params(window=128, mapping="rm")
        assert det.window == 128
        assert det.mapping == "rm"
