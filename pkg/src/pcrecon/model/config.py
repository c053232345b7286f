import json
from dataclasses import asdict, dataclass, field, fields

from ..errors import UsageError
from ..metrics.scores import AGGREGATIONS, CHAMFER_MODES

ENCODERS = ("tiny_conv", "mlp", "identity")
OUTPUT_ACTIVATIONS = ("tanh", "none")


@dataclass
class ModelConfig:
    """Network architecture plus training settings.

    ``latent_dim`` defaults to 512 so that the decoder inputs are 514 wide
    (UV + latent) and 515 wide (xyz + latent).
    """

    latent_dim: int = 512
    n_points: int = 2048
    n_primitives: int = 8
    hidden: tuple = (512, 256)
    leaky_alpha: float = 0.01
    output_activation: str = "tanh"
    encoder: str = "tiny_conv"
    image_side: int = 32
    image_channels: int = 3
    encoder_channels: tuple = (16, 32, 64, 128)
    mlp_hidden: int = 256
    shared_refiner: bool = True
    chamfer_mode: str = "l2"
    aggregation: str = "mean"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr_decay: float = 1.0
    lr_min: float = 0.0
    batch_size: int = 1
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        self.validate()

    def lr_at(self, step):
        """Learning rate for 1-based ``step``: ``max(lr_min, lr * lr_decay**(step - 1))``."""
        return max(self.lr_min, self.lr * self.lr_decay ** (step - 1))

    @property
    def points_per_primitive(self):
        return self.n_points // self.n_primitives

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise UsageError(msg)

        need(self.latent_dim >= 1, "latent_dim must be >= 1")
        need(self.n_primitives >= 1, "n_primitives must be >= 1")
        need(self.n_points >= self.n_primitives and self.n_points % self.n_primitives == 0,
             f"n_points ({self.n_points}) must be a positive multiple of n_primitives ({self.n_primitives})")
        need(len(self.hidden) == 2 and min(self.hidden) >= 1,
             "hidden must list two positive widths (three-layer perceptrons)")
        need(0 <= self.leaky_alpha < 1, "leaky_alpha must be in [0, 1)")
        need(self.output_activation in OUTPUT_ACTIVATIONS, f"output_activation must be one of {OUTPUT_ACTIVATIONS}")
        need(self.encoder in ENCODERS, f"encoder must be one of {ENCODERS}")
        need(self.image_side >= 1 and self.image_channels >= 1, "image dimensions must be positive")
        need(len(self.encoder_channels) >= 1 and min(self.encoder_channels) >= 1,
             "encoder_channels must list positive widths")
        need(self.mlp_hidden >= 1, "mlp_hidden must be positive")
        need(self.chamfer_mode in CHAMFER_MODES, f"chamfer_mode must be one of {CHAMFER_MODES}")
        need(self.aggregation in AGGREGATIONS, f"aggregation must be one of {AGGREGATIONS}")
        need(self.lr > 0 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0,
             "invalid optimiser hyperparameters")
        need(0 < self.lr_decay <= 1 and self.lr_min >= 0, "lr_decay must be in (0, 1] and lr_min >= 0")
        need(self.batch_size >= 1, "batch_size must be >= 1")
        need(self.init_scale > 0, "init_scale must be > 0")
        need(0 <= self.seed < 2**64, "seed must be a 64-bit unsigned integer")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d["encoder_channels"] = list(self.encoder_channels)
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)
