"""Pipeline configuration: defaults, validation, file loading."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

try:
    import tomllib as tomli
except ModuleNotFoundError:
    import tomli

from .cwt import MORLET, RICKER
from .errors import ConfigError, DataError

PCA_MAPPING = "pca"
RM_MAPPING = "rm"
CHANNEL_CHOICES = ("RGB", "GB", "RB", "RG", "R", "G", "B")


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of a detection run, with the standard defaults."""

    mapping: str = PCA_MAPPING
    window: int = 256
    stride: int = 128
    headroom: float = 1.2
    ratio: float = 0.01
    neighbors: int = 9
    p: int = 5
    seed: int = 0
    n_sp: int = 100
    channels: str = "RGB"
    backbone: str | None = None
    fallback_extractor: bool = False
    reweight: bool = True
    freq_column: bool = False
    has_header: bool = False
    out: str | None = None
    workers: int | None = None
    wavelets: tuple[str, ...] = (MORLET, RICKER)

    def __post_init__(self) -> None:
        if self.mapping not in (PCA_MAPPING, RM_MAPPING):
            raise ConfigError(
                f"mapping must be '{PCA_MAPPING}' or '{RM_MAPPING}', got {self.mapping!r}"
            )
        if self.window < 4:
            raise ConfigError(f"window must be at least 4, got {self.window}")
        if not 1 <= self.stride <= self.window:
            raise ConfigError(
                f"stride must lie in [1, {self.window}], got {self.stride}"
            )
        if self.headroom < 1.0:
            raise ConfigError(f"headroom must be at least 1, got {self.headroom}")
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError(f"ratio must be in (0, 1], got {self.ratio}")
        if self.neighbors < 1:
            raise ConfigError(f"neighbors must be positive, got {self.neighbors}")
        if self.p < 1:
            raise ConfigError(f"p must be positive, got {self.p}")
        if self.n_sp < 1:
            raise ConfigError(f"n_sp must be positive, got {self.n_sp}")
        if self.channels not in CHANNEL_CHOICES:
            raise ConfigError(
                f"channels must be one of {', '.join(CHANNEL_CHOICES)}, "
                f"got {self.channels!r}"
            )
        if self.workers is not None and self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        wavelets = tuple(self.wavelets)
        if len(wavelets) != 2:
            raise ConfigError(
                f"exactly two wavelets are required, got {len(wavelets)}"
            )
        for kind in wavelets:
            if kind not in (MORLET, RICKER):
                raise ConfigError(f"unknown wavelet kind {kind!r}")
        object.__setattr__(self, "wavelets", wavelets)

    @property
    def uses_fallback(self) -> bool:
        """The fallback extractor runs unless a backbone is both given
        and not explicitly overridden."""
        return self.fallback_extractor or self.backbone is None

    def to_dict(self) -> dict:
        payload = {}
        for spec in fields(self):
            value = getattr(self, spec.name)
            if isinstance(value, tuple):
                value = list(value)
            payload[spec.name] = value
        return payload

    def detector_params(self) -> dict:
        """Constructor arguments for the estimator."""
        return {
            "mapping": self.mapping,
            "window": self.window,
            "stride": self.stride,
            "headroom": self.headroom,
            "ratio": self.ratio,
            "neighbors": self.neighbors,
            "p": self.p,
            "seed": self.seed,
            "channels": self.channels,
            "backbone": None if self.uses_fallback else self.backbone,
            "reweight": self.reweight,
            "wavelets": self.wavelets,
        }


_FIELD_NAMES = {spec.name for spec in fields(PipelineConfig)}


def config_from_mapping(values: dict) -> PipelineConfig:
    """Build a config from a plain dict, rejecting unknown keys."""
    unknown = sorted(set(values) - _FIELD_NAMES)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    cleaned = dict(values)
    if "wavelets" in cleaned and isinstance(cleaned["wavelets"], list):
        cleaned["wavelets"] = tuple(cleaned["wavelets"])
    return PipelineConfig(**cleaned)


def load_config(path) -> PipelineConfig:
    """Read a config file; the format follows the extension."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".toml":
        try:
            with open(path, "rb") as handle:
                values = tomli.load(handle)
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    elif suffix == ".json":
        try:
            values = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    else:
        raise ConfigError(
            f"config files must end in .toml or .json, got {path.name!r}"
        )
    if not isinstance(values, dict):
        raise DataError(f"config root must be a table/object in {path}")
    return config_from_mapping(values)
