"""Small reverse-mode autodiff and the layers the lifting networks need."""
from .autograd import Tensor, as_tensor, backward
from .layers import BatchNorm, Dense, Module, ResidualBlock, ResidualMLP
from .optim import Adam, adam_step

__all__ = [
    "Tensor", "as_tensor", "backward",
    "BatchNorm", "Dense", "Module", "ResidualBlock", "ResidualMLP",
    "Adam", "adam_step",
]
