"""End-to-end inference over a :class:`Model`."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import layers
from ..bitops import OpCounters
from ..errors import ContractError
from ..parallel import ExecContext
from ..tensor import QTensor
from .network import Model


@dataclass
class InferenceResult:
    scores: np.ndarray
    output: QTensor
    counters: OpCounters
    wall_ns: int

    @property
    def scores_hash(self) -> str:
        return hashlib.sha256(self.output.data.tobytes()).hexdigest()[:16]


def run_layer(model: Model, index: int, x: QTensor, ctx: ExecContext) -> QTensor:
    net = model.net
    layer = net.layers[index]
    p = model.params[index]
    if layer.kind == "conv":
        g = net.geometry(index, x.shape)
        return layers.conv2d_q(x, p.weights, g, p.requant, ctx=ctx)
    if layer.kind == "conv_binary":
        g = net.geometry(index, x.shape)
        return layers.conv2d_binary(x, p.weights, g, p.requant, ctx=ctx)
    if layer.kind == "fc":
        return layers.fully_connected(x, p.weights, p.requant, ctx=ctx)
    if layer.kind == "relu":
        return layers.relu(x, ctx=ctx)
    ph, pw = layer.kernel
    return layers.maxpool(x, ph, pw, layer.stride, ctx=ctx)


def run_inference(model: Model, x: QTensor, ctx: Optional[ExecContext] = None) -> InferenceResult:
    """Run every layer in order; counters cover this call only."""
    ctx = ctx if ctx is not None else ExecContext()
    net = model.net
    if x.shape != net.input_shape or x.bits != net.input_bits:
        raise ContractError(f"input is {x.shape} INT-{int(x.bits)}, model expects "
                            f"{net.input_shape} INT-{int(net.input_bits)}")
    before = ctx.counters.to_array()
    t0 = time.perf_counter_ns()
    for i in range(len(net.layers)):
        x = run_layer(model, i, x, ctx)
    wall = time.perf_counter_ns() - t0
    counters = OpCounters.from_array(ctx.counters.to_array() - before)
    return InferenceResult(x.to_array().ravel().astype(np.int64), x, counters, wall)
