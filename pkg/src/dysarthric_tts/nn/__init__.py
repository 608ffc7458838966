from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import Conv1d, Dropout, Embedding, LayerNorm, Linear, Module
from .optim import Adam
from .tensor import Parameter, ShapeError, Tensor, no_grad

__all__ = [
    "Adam", "Conv1d", "Dropout", "Embedding", "LayerNorm", "Linear", "Module",
    "Parameter", "ShapeError", "Tensor", "grad_check", "load_checkpoint",
    "no_grad", "save_checkpoint",
]
