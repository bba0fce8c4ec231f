"""CIFAR-10 reference topology with seeded synthetic INT-8 weights.

Three 5x5 convolutions (32, 16 and 32 filters, zero padding 2), each followed
by ReLU and 2x2 stride-2 max-pooling, then a 512 -> 10 fully-connected layer.
Weights are random, so only structure and operation counts are meaningful.
"""

from __future__ import annotations

import math

import numpy as np

from ..quantfmt import QuantParamsInt8
from ..tensor import BitWidth, QTensor, WeightSet
from .network import LayerDef, LayerParams, Model, NetworkDef

INPUT_SHAPE = (32, 32, 3)
WEIGHT_RANGE = 32  # weights drawn uniformly from [-32, 31]


def cifar10_network() -> NetworkDef:
    q = BitWidth.INT8
    layers = []
    for m in (32, 16, 32):
        layers += [
            LayerDef("conv", q, m, (5, 5), 1, 2),
            LayerDef("relu", q),
            LayerDef("maxpool", q, 0, (2, 2), 2),
        ]
    layers.append(LayerDef("fc", q, 10))
    return NetworkDef(INPUT_SHAPE, q, layers)


def _shift_for(k: int) -> int:
    # accumulator spread for uniform weights and activations of magnitude ~64,
    # scaled back so about two standard deviations land inside INT-8
    std = math.sqrt(k) * (WEIGHT_RANGE / math.sqrt(3)) * 64
    return max(0, round(math.log2(2 * std / 128)))


def build_cifar10(seed: int = 0) -> Model:
    rng = np.random.default_rng(seed)
    net = cifar10_network()
    shapes = net.shapes()
    params = []
    for i, layer in enumerate(net.layers):
        if layer.kind == "conv":
            c = shapes[i][2]
            kh, kw = layer.kernel
            w = rng.integers(-WEIGHT_RANGE, WEIGHT_RANGE, (layer.out_ch, kh, kw, c))
            shift = _shift_for(kh * kw * c)
        elif layer.kind == "fc":
            n = int(np.prod(shapes[i]))
            w = rng.integers(-WEIGHT_RANGE, WEIGHT_RANGE, (layer.out_ch, n))
            shift = _shift_for(n)
        else:
            params.append(LayerParams())
            continue
        bias = rng.integers(-(1 << shift), 1 << shift, layer.out_ch)
        params.append(LayerParams(WeightSet.from_array(w, BitWidth.INT8),
                                  QuantParamsInt8(shift, bias)))
    return Model(net, params)


def random_input(seed: int = 0) -> QTensor:
    rng = np.random.default_rng(seed)
    return QTensor.from_array(rng.integers(-128, 128, INPUT_SHAPE), BitWidth.INT8)
