from .optim import Adam
from .rng import RngStream, gauss, root_stream
from .tensor import DimensionError, Tape, Tensor, concat, matmul

__all__ = ["Adam", "DimensionError", "RngStream", "Tape", "Tensor", "concat", "gauss", "matmul", "root_stream"]
