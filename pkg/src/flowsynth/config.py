"""Pipeline configuration with a YAML file representation.

Every default is materialized when the config is serialized, so a freshly
written file documents the full parameter surface. CLI flags override file
values field by field.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .consistency import AffineSamplingConfig
from .errors import ConfigError
from .geometry import PoseSamplingConfig
from .losses import PHOTOMETRIC_THRESHOLD_DEFAULT, CombinedLossWeights, TrimConfig


@dataclass(frozen=True)
class TrainingMetadata:
    """Bookkeeping for downstream trainers; nothing here is executed."""

    total_iterations: int = 30000
    consistency_start_iteration: int = 10000
    batch_size: int = 4


@dataclass
class PipelineConfig:
    pose: PoseSamplingConfig = field(default_factory=PoseSamplingConfig)
    affine: AffineSamplingConfig = field(default_factory=AffineSamplingConfig)
    trim: TrimConfig = field(default_factory=TrimConfig)
    weights: CombinedLossWeights = field(default_factory=CombinedLossWeights)
    training: TrainingMetadata = field(default_factory=TrainingMetadata)
    photometric_threshold: float = PHOTOMETRIC_THRESHOLD_DEFAULT
    target_focal: float | None = None
    target_size: tuple | None = None
    seed: int = 0

    def __post_init__(self):
        if not self.photometric_threshold >= 0:
            raise ConfigError("photometric_threshold must be >= 0")
        if self.target_size is not None:
            self.target_size = (int(self.target_size[0]), int(self.target_size[1]))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["affine"] = {k: list(v) if isinstance(v, tuple) else v for k, v in d["affine"].items()}
        if self.target_size is not None:
            d["target_size"] = list(self.target_size)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        try:
            pose = PoseSamplingConfig(**d.pop("pose", {}))
            affine_raw = {
                k: tuple(v) if isinstance(v, (list, tuple)) else v
                for k, v in d.pop("affine", {}).items()
            }
            affine = AffineSamplingConfig(**affine_raw)
            trim = TrimConfig(**d.pop("trim", {}))
            weights = CombinedLossWeights(**d.pop("weights", {}))
            training = TrainingMetadata(**d.pop("training", {}))
            if d.get("target_size") is not None:
                d["target_size"] = tuple(d["target_size"])
            return cls(
                pose=pose, affine=affine, trim=trim, weights=weights, training=training, **d
            )
        except TypeError as e:
            raise ConfigError(f"bad configuration: {e}") from e

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=True))

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        raw = yaml.safe_load(Path(path).read_text())
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: configuration must be a mapping")
        return cls.from_dict(raw)
