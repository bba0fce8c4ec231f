"""Instrumented quantized (INT-8/4/2/1) convolutional inference kernels."""

from .backend import available_backends, get_kernels
from .bitops import OpCounters
from .errors import (ContractError, GeometryError, LayerExecutionError, ModelFormatError,
                     ThresholdRangeError, UnsupportedParameterError)
from .layers import (ConvGeometry, conv2d_binary, conv2d_q, fully_connected, im2col,
                     maxpool, relu)
from .microkernel import TileShape, select_tile, tile_cost
from .parallel import ExecContext, scratch_overhead
from .quantfmt import BatchNormParams, QuantParamsInt8, ThresholdSet, compute_thresholds
from .tensor import BitWidth, QTensor, WeightSet

__version__ = "0.1.0"

__all__ = [
    "BatchNormParams", "BitWidth", "ContractError", "ConvGeometry", "ExecContext",
    "GeometryError", "LayerExecutionError", "ModelFormatError", "OpCounters",
    "QTensor", "QuantParamsInt8", "ThresholdRangeError", "ThresholdSet", "TileShape",
    "UnsupportedParameterError", "WeightSet", "available_backends", "compute_thresholds",
    "conv2d_binary", "conv2d_q", "fully_connected", "get_kernels", "im2col", "maxpool",
    "relu", "scratch_overhead", "select_tile", "tile_cost",
]
