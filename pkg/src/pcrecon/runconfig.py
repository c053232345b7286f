"""Run-level configuration: model settings plus preprocessing and evaluation knobs."""

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import UsageError
from .geometry.transforms import CENTER_MODES, NORMALIZE_METHODS
from .metrics.scores import DEFAULT_TAU
from .model.config import ModelConfig

GT_SOURCES = ("vertices", "uniform", "lloyd")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    tau: float = DEFAULT_TAU
    normalization: str = "unit_ball"
    center: str = "none"
    scale: float = 1.0
    noise_sigma: float = 0.01
    sampling: str = "vertices"
    surface_points: int = 0  # 0 means n_points
    lloyd_iters: int = 8
    lloyd_oversample: int = 16
    projection: bool = True
    steps: int = 1000
    checkpoint_every: int = 100
    output_dir: str = ""
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig.from_dict(self.model)
        self.validate()

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise UsageError(msg)

        need(self.tau > 0, "tau must be > 0")
        need(self.normalization in NORMALIZE_METHODS, f"normalization must be one of {NORMALIZE_METHODS}")
        need(self.center in CENTER_MODES, f"center must be one of {CENTER_MODES}")
        need(self.scale > 0, "scale must be > 0")
        need(self.noise_sigma >= 0, "noise_sigma must be >= 0")
        need(self.sampling in GT_SOURCES, f"sampling must be one of {GT_SOURCES}")
        need(self.surface_points >= 0, "surface_points must be >= 0")
        need(self.lloyd_iters >= 0 and self.lloyd_oversample >= 4, "lloyd_iters >= 0 and lloyd_oversample >= 4")
        need(self.steps >= 0, "steps must be >= 0")
        need(self.checkpoint_every >= 0, "checkpoint_every must be >= 0")
        need(0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")
        self.model.validate()

    def to_dict(self):
        d = asdict(self)
        d["model"] = self.model.to_dict()
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown run config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
