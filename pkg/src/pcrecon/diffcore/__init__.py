from .adam import ParamStore, adam_step
from .checkpoint import decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .ops import (add, chamfer_loss, concat_cols, concat_rows, conv2d, im2col, leaky_relu, linear,
                  mean_rows, reshape, scale, split_cols, sum_all, tanh_op, tile_rows, weighted_sum)
from .tape import Tape, Tensor

__all__ = [
    "GradCheckReport", "ParamStore", "Tape", "Tensor", "adam_step", "add", "chamfer_loss",
    "concat_cols", "concat_rows", "conv2d", "decode_checkpoint", "encode_checkpoint", "grad_check",
    "im2col", "leaky_relu", "linear", "mean_rows", "read_checkpoint", "reshape", "scale",
    "split_cols", "sum_all", "tanh_op", "tile_rows", "weighted_sum", "write_checkpoint",
]
