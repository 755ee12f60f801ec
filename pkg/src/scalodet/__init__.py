"""Training-free time-series anomaly detection via scalogram imaging.

The pipeline turns a series into wavelet scalograms, compresses them into
three image channels, and scores image patches against a coreset memory of
normal patches. `ScalogramAnomalyDetector` is the high-level entry point;
the stage modules are importable on their own for finer control.
"""

from .config import PipelineConfig, config_from_mapping, load_config
from .detector import (
    DetectionResult,
    ScalogramAnomalyDetector,
    load_state,
    save_state,
)
from .errors import ComputeError, ConfigError, DataError, ScalodetError
from .evaluation import EvalConfig, EvalReport, evaluate
from .series import (
    DatasetBundle,
    LabelSeries,
    MultivariateSeries,
    load_bundle,
    load_csv,
    load_labels,
    load_npy,
)

__version__ = "0.1.0"

__all__ = [
    "ComputeError",
    "ConfigError",
    "DataError",
    "DatasetBundle",
    "DetectionResult",
    "EvalConfig",
    "EvalReport",
    "LabelSeries",
    "MultivariateSeries",
    "PipelineConfig",
    "ScalogramAnomalyDetector",
    "ScalodetError",
    "config_from_mapping",
    "evaluate",
    "load_bundle",
    "load_config",
    "load_csv",
    "load_labels",
    "load_npy",
    "load_state",
    "save_state",
    "__version__",
]
