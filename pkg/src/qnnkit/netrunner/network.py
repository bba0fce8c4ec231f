"""Network definitions, per-layer parameters and static cost accounting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from ..errors import ContractError
from ..layers import ConvGeometry, pool_output_dims
from ..quantfmt import QuantParamsInt8, ThresholdSet
from ..tensor import BitWidth, WeightSet

KINDS = ("conv", "conv_binary", "fc", "relu", "maxpool")


@dataclass(frozen=True)
class LayerDef:
    """One layer.  For ``maxpool``, ``kernel`` is the window and ``stride`` its step."""

    kind: str
    bits: BitWidth
    out_ch: int = 0
    kernel: tuple[int, int] = (1, 1)
    stride: int = 1
    pad: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ContractError(f"unknown layer kind {self.kind!r}")
        object.__setattr__(self, "bits", BitWidth(self.bits))
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))


Shape = tuple[int, int, int]


@dataclass
class NetworkDef:
    input_shape: Shape
    input_bits: BitWidth
    layers: list[LayerDef] = field(default_factory=list)

    def __post_init__(self):
        self.input_bits = BitWidth(self.input_bits)
        self.input_shape = tuple(int(v) for v in self.input_shape)

    def geometry(self, index: int, in_shape: Shape) -> Optional[ConvGeometry]:
        layer = self.layers[index]
        if layer.kind not in ("conv", "conv_binary"):
            return None
        h, w, c = in_shape
        kh, kw = layer.kernel
        return ConvGeometry(h, w, c, layer.out_ch, kh, kw, layer.stride, layer.pad)

    def shapes(self) -> list[Shape]:
        """Input shape followed by every layer's output shape; validates the chain."""
        shape = self.input_shape
        bits = self.input_bits
        out = [shape]
        for i, layer in enumerate(self.layers):
            if layer.bits != bits:
                raise ContractError(
                    f"layer {i} ({layer.kind}) expects INT-{int(layer.bits)}, gets INT-{int(bits)}")
            if layer.kind == "conv_binary" and bits != BitWidth.INT1:
                raise ContractError(f"layer {i}: binary convolution needs INT-1")
            if layer.kind in ("conv", "fc") and bits == BitWidth.INT1:
                raise ContractError(f"layer {i}: {layer.kind} does not take INT-1")
            if layer.kind == "relu" and bits == BitWidth.INT1:
                raise ContractError(f"layer {i}: ReLU does not take INT-1")
            if layer.kind in ("conv", "conv_binary"):
                g = self.geometry(i, shape)
                shape = (g.out_h, g.out_w, g.out_ch)
            elif layer.kind == "fc":
                shape = (1, 1, layer.out_ch)
            elif layer.kind == "maxpool":
                ph, pw = layer.kernel
                oh, ow = pool_output_dims(shape[0], shape[1], ph, pw, layer.stride)
                shape = (oh, ow, shape[2])
            out.append(shape)
        return out

    @property
    def output_shape(self) -> Shape:
        return self.shapes()[-1]


Requant = Union[QuantParamsInt8, ThresholdSet, None]


@dataclass
class LayerParams:
    weights: Optional[WeightSet] = None
    requant: Requant = None


@dataclass
class Model:
    net: NetworkDef
    params: list[LayerParams]

    def __post_init__(self):
        if len(self.params) != len(self.net.layers):
            raise ContractError("one LayerParams entry is needed per layer")
        self.validate()

    def validate(self) -> None:
        shapes = self.net.shapes()
        for i, (layer, p) in enumerate(zip(self.net.layers, self.params)):
            in_shape = shapes[i]
            if layer.kind in ("relu", "maxpool"):
                continue
            if p.weights is None or p.requant is None:
                raise ContractError(f"layer {i} ({layer.kind}) needs weights and requantization")
            if p.weights.bits != layer.bits:
                raise ContractError(f"layer {i}: weight width differs from layer width")
            if layer.kind == "fc":
                expect = (layer.out_ch, int(np.prod(in_shape)))
                got = (p.weights.out_channels, p.weights.bank_size)
            else:
                kh, kw = layer.kernel
                expect = (layer.out_ch, kh, kw, in_shape[2])
                got = (p.weights.out_channels, p.weights.kernel_h,
                       p.weights.kernel_w, p.weights.in_channels)
            if expect != got:
                raise ContractError(f"layer {i}: weight shape {got}, expected {expect}")
            if layer.bits == BitWidth.INT8:
                ok = isinstance(p.requant, QuantParamsInt8) and p.requant.channels == layer.out_ch
            else:
                ok = (isinstance(p.requant, ThresholdSet) and p.requant.bits == layer.bits
                      and p.requant.channels == layer.out_ch)
            if not ok:
                raise ContractError(f"layer {i}: requantization does not match the layer")


def _binary_effective_taps(g: ConvGeometry) -> int:
    """Sum over output pixels of in-image taps (padded taps are not computed)."""
    def axis(n_in, k, n_out):
        total = 0
        for o in range(n_out):
            lo = o * g.stride - g.pad
            total += sum(1 for t in range(k) if 0 <= lo + t < n_in)
        return total
    return (axis(g.in_h, g.kernel_h, g.out_h) * axis(g.in_w, g.kernel_w, g.out_w)
            * g.in_ch)


def layer_macs(net: NetworkDef) -> list[int]:
    shapes = net.shapes()
    macs = []
    for i, layer in enumerate(net.layers):
        if layer.kind == "conv":
            macs.append(net.geometry(i, shapes[i]).macs)
        elif layer.kind == "conv_binary":
            g = net.geometry(i, shapes[i])
            macs.append(_binary_effective_taps(g) * g.out_ch)
        elif layer.kind == "fc":
            macs.append(layer.out_ch * int(np.prod(shapes[i])))
        else:
            macs.append(0)
    return macs


def count_params_macs(model: Union[Model, NetworkDef]) -> tuple[int, int]:
    """(weight count, multiply-accumulate count) without running anything.

    Parameters are weights only; biases and thresholds are not counted.
    """
    net = model.net if isinstance(model, Model) else model
    shapes = net.shapes()
    params = 0
    for i, layer in enumerate(net.layers):
        if layer.kind in ("conv", "conv_binary"):
            params += layer.out_ch * net.geometry(i, shapes[i]).field_size
        elif layer.kind == "fc":
            params += layer.out_ch * int(np.prod(shapes[i]))
    return params, sum(layer_macs(net))
