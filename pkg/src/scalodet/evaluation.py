"""Detection metrics: point adjustment, score partitioning, F1, areas.

Event-style evaluation first replaces every labeled anomaly interval
with its peak score (point adjustment), then optionally collapses the
series into fixed-width sections scored by their maxima (score
partitioning). Threshold metrics sweep the attained score values;
ranking metrics use the usual average-precision and rank-statistic
conventions with ties counted half.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, DataError
from .storage import atomic_write

ADJUSTMENT_MODES = ("none", "pa", "sp")


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation settings.

    n_sp is the section width for score partitioning; adjustments
    selects which variants to compute; ucr_tolerance is the slack, in
    samples, allowed around the labeled segment when judging whether
    the peak score found the anomaly.
    """

    n_sp: int = 100
    adjustments: tuple[str, ...] = ADJUSTMENT_MODES
    ucr_tolerance: int = 100

    def __post_init__(self) -> None:
        if self.n_sp < 1:
            raise ConfigError("n_sp must be at least 1")
        if not self.adjustments:
            raise ConfigError("at least one adjustment mode is required")
        for mode in self.adjustments:
            if mode not in ADJUSTMENT_MODES:
                raise ConfigError(
                    f"unknown adjustment mode {mode!r}; "
                    f"choose from {', '.join(ADJUSTMENT_MODES)}"
                )
        if self.ucr_tolerance < 0:
            raise ConfigError("ucr_tolerance must be non-negative")


@dataclass(frozen=True)
class ThresholdMetrics:
    """Metrics for one adjustment mode."""

    f1: float
    delta: float
    precision: float
    recall: float
    aucpr: float
    auroc: float

    def __post_init__(self) -> None:
        for name in ("f1", "precision", "recall", "aucpr", "auroc"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DataError(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class EvalReport:
    """Per-mode metrics plus the optional peak-location verdict."""

    metrics: dict[str, ThresholdMetrics] = field(default_factory=dict)
    correct: bool | None = None

    def __post_init__(self) -> None:
        if not self.metrics:
            raise DataError("report must contain at least one mode")
        for mode in self.metrics:
            if mode not in ADJUSTMENT_MODES:
                raise DataError(f"unknown adjustment mode {mode!r} in report")


def _check_pair(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or labels.ndim != 1:
        raise DataError("scores and labels must be one-dimensional")
    if scores.size != labels.size:
        raise DataError(
            f"length mismatch: {scores.size} scores vs {labels.size} labels"
        )
    if scores.size == 0:
        raise DataError("empty series")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def label_runs(labels: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, stop) spans of the maximal runs of ones."""
    padded = np.concatenate([[0], labels, [0]])
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def point_adjust(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Replace each labeled anomaly run with its maximum score."""
    scores, labels = _check_pair(scores, labels)
    adjusted = scores.copy()
    for start, stop in label_runs(labels):
        adjusted[start:stop] = adjusted[start:stop].max()
    return adjusted


def score_partition(
    scores: np.ndarray, labels: np.ndarray, n_sp: int
) -> tuple[np.ndarray, np.ndarray]:
    """Collapse the series into sections of width n_sp.

    Each section is represented by its maximum score and labeled
    anomalous when it contains any anomalous point. The final section
    may be shorter.
    """
    if n_sp < 1:
        raise ConfigError("n_sp must be at least 1")
    scores, labels = _check_pair(scores, labels)
    starts = np.arange(0, scores.size, n_sp)
    reps = np.maximum.reduceat(scores, starts)
    section_labels = np.maximum.reduceat(labels, starts)
    return reps, section_labels


@dataclass(frozen=True)
class BestThreshold:
    f1: float
    delta: float
    precision: float
    recall: float


def _sweep_counts(
    scores: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Distinct thresholds (descending) with cumulative tp/fp at each."""
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    # Predictions use >= delta, so each distinct value is evaluated at
    # the last position of its tie group.
    group_ends = np.flatnonzero(
        np.concatenate([sorted_scores[1:] != sorted_scores[:-1], [True]])
    )
    cum_tp = np.cumsum(sorted_labels)
    tp = cum_tp[group_ends]
    fp = group_ends + 1 - tp
    return sorted_scores[group_ends], tp, fp, int(labels.sum())


def best_f1(scores: np.ndarray, labels: np.ndarray) -> BestThreshold:
    """Sweep thresholds over the attained scores and keep the best F1.

    Equal F1 values resolve to the lowest threshold.
    """
    scores, labels = _check_pair(scores, labels)
    positives = int(labels.sum())
    if positives == 0:
        raise DataError("best_f1 requires at least one positive label")
    deltas, tp, fp, _ = _sweep_counts(scores, labels)
    fn = positives - tp
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    precision = tp / (tp + fp)
    recall = tp / positives
    best = None
    for k in range(deltas.size):
        if best is None or f1[k] >= best.f1:
            best = BestThreshold(
                f1=float(f1[k]),
                delta=float(deltas[k]),
                precision=float(precision[k]),
                recall=float(recall[k]),
            )
    return best


def threshold_sweep(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Rows of (delta, precision, recall, f1) over descending thresholds."""
    scores, labels = _check_pair(scores, labels)
    positives = int(labels.sum())
    if positives == 0:
        raise DataError("threshold sweep requires at least one positive label")
    deltas, tp, fp, _ = _sweep_counts(scores, labels)
    fn = positives - tp
    precision = tp / (tp + fp)
    recall = tp / positives
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    return np.stack([deltas, precision, recall, f1], axis=1)


def aucpr(scores: np.ndarray, labels: np.ndarray) -> float:
    """Average precision: sum of precision times recall increments."""
    scores, labels = _check_pair(scores, labels)
    positives = int(labels.sum())
    if positives == 0:
        raise DataError("aucpr requires at least one positive label")
    _, tp, fp, _ = _sweep_counts(scores, labels)
    precision = tp / (tp + fp)
    recall = tp / positives
    previous = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - previous) * precision))


def auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outscores a random negative.

    Computed from average ranks, so tied scores contribute one half.
    """
    scores, labels = _check_pair(scores, labels)
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        raise DataError("auroc requires both positive and negative labels")
    ranks = rankdata(scores)
    positive_rank_sum = float(ranks[labels == 1].sum())
    wins = positive_rank_sum - positives * (positives + 1) / 2.0
    return wins / (positives * negatives)


def anomaly_segment(labels: np.ndarray) -> tuple[int, int]:
    """Inclusive (start, end) of the single labeled anomaly segment."""
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise DataError("labels must be a non-empty vector")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    runs = label_runs(labels.astype(np.int64))
    if not runs:
        raise DataError("labels contain no anomaly segment")
    if len(runs) > 1:
        raise DataError(
            f"expected a single anomaly segment, found {len(runs)}"
        )
    start, stop = runs[0]
    return start, stop - 1


def ucr_correct(
    scores: np.ndarray, segment: tuple[int, int], tolerance: int = 100
) -> bool:
    """Whether the peak score lands within the slack around the segment.

    The peak is the earliest index attaining the maximum score; both
    widened boundaries are inclusive.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1 or scores.size == 0:
        raise DataError("scores must be a non-empty vector")
    if tolerance < 0:
        raise ConfigError("tolerance must be non-negative")
    start, end = segment
    if start > end:
        raise DataError("anomaly segment is empty")
    peak = int(np.argmax(scores))
    return start - tolerance <= peak <= end + tolerance


def mode_series(
    scores: np.ndarray, labels: np.ndarray, mode: str, n_sp: int
) -> tuple[np.ndarray, np.ndarray]:
    if mode == "none":
        return scores, labels
    adjusted = point_adjust(scores, labels)
    if mode == "pa":
        return adjusted, labels
    # Partitioning always runs on the adjusted series.
    return score_partition(adjusted, labels, n_sp)


def evaluate(
    scores: np.ndarray,
    labels: np.ndarray,
    config: EvalConfig | None = None,
    segment: tuple[int, int] | None = None,
) -> EvalReport:
    """Compute threshold and ranking metrics for each adjustment mode.

    Pass the labeled segment to also record whether the peak score
    found it.
    """
    config = config or EvalConfig()
    scores, labels = _check_pair(scores, labels)
    metrics: dict[str, ThresholdMetrics] = {}
    for mode in config.adjustments:
        mode_scores, mode_labels = mode_series(scores, labels, mode, config.n_sp)
        best = best_f1(mode_scores, mode_labels)
        metrics[mode] = ThresholdMetrics(
            f1=best.f1,
            delta=best.delta,
            precision=best.precision,
            recall=best.recall,
            aucpr=aucpr(mode_scores, mode_labels),
            auroc=auroc(mode_scores, mode_labels),
        )
    correct = None
    if segment is not None:
        correct = ucr_correct(scores, segment, config.ucr_tolerance)
    return EvalReport(metrics=metrics, correct=correct)


def report_to_dict(report: EvalReport) -> dict:
    """JSON-ready view of a report."""
    payload: dict = {"modes": {}}
    for mode, values in report.metrics.items():
        payload["modes"][mode] = {
            "f1": values.f1,
            "delta": values.delta,
            "precision": values.precision,
            "recall": values.recall,
            "aucpr": values.aucpr,
            "auroc": values.auroc,
        }
    if report.correct is not None:
        payload["correct"] = report.correct
    return payload


def render_report(report: EvalReport) -> str:
    """Aligned text table, metrics as rows and modes as columns."""
    modes = list(report.metrics)
    rows = ["f1", "delta", "precision", "recall", "aucpr", "auroc"]
    header = ["metric"] + [mode.upper() for mode in modes]
    table = [header]
    for name in rows:
        row = [name]
        for mode in modes:
            row.append(f"{getattr(report.metrics[mode], name):.6f}")
        table.append(row)
    if report.correct is not None:
        table.append(["correct"] + [str(report.correct).lower()] * len(modes))
    widths = [max(len(line[k]) for line in table) for k in range(len(header))]
    lines = []
    for line in table:
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(line, widths)))
    return "\n".join(lines) + "\n"


def write_sweep_csv(path: Path, sweep: np.ndarray) -> None:
    """Write (delta, precision, recall, f1) rows for plotting."""
    if sweep.ndim != 2 or sweep.shape[1] != 4:
        raise DataError("sweep table must have four columns")
    lines = ["delta,precision,recall,f1"]
    for row in sweep:
        lines.append(",".join(repr(float(value)) for value in row))
    with atomic_write(Path(path)) as handle:
        handle.write("\n".join(lines) + "\n")
