from .config import ENCODERS, OUTPUT_ACTIVATIONS, ModelConfig
from .network import ReconModel, decode, encode, grid_uv, infer, parameter_shapes
from .train import (LogRecord, TrainResult, TrainSample, load_model, read_log, save_checkpoint, train,
                    train_step)

__all__ = [
    "ENCODERS", "LogRecord", "ModelConfig", "OUTPUT_ACTIVATIONS", "ReconModel", "TrainResult",
    "TrainSample", "decode", "encode", "grid_uv", "infer", "load_model", "parameter_shapes", "read_log",
    "save_checkpoint", "train", "train_step",
]
