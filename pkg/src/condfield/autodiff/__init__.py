from . import ops
from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from .gradcheck import check_gradients, numerical_grad, relative_error
from .ops import OPS, as_tensor, forward_op
from .params import MissingGradientError, ParamStore, adam_step, glorot_uniform
from .tensor import (Graph, NonFiniteError, ShapeError, Tensor, backward, grad_enabled,
                     make_node, no_grad)

__all__ = [
    "ops", "OPS", "forward_op", "as_tensor",
    "Tensor", "Graph", "backward", "make_node", "no_grad", "grad_enabled",
    "ShapeError", "NonFiniteError",
    "ParamStore", "adam_step", "glorot_uniform", "MissingGradientError",
    "save_checkpoint", "load_checkpoint", "read_checkpoint", "CheckpointError",
    "check_gradients", "numerical_grad", "relative_error",
]
