"""Binary model container ("PNNM").

Layout, all integers little-endian::

    0   magic "PNNM"
    4   version u8 (=1)
    5   flags u8 (bit 0 set: little-endian payloads)
    6   layer count u16
    8   input H u16, W u16, C u16
    14  input bits u8, reserved u8
    16  CRC-32 u32 over every byte of the file except these four
    20  layer records

Each record is ``kind u8, bits u8, reserved u16, body length u32`` and a body:

    conv / conv_binary: M u16, kh u8, kw u8, stride u8, pad u8, mode u8, 0 u8,
                        weights (u32 length + packed bytes), requant
    fc:                 M u16, mode u8, 0 u8, N u32, weights, requant
    maxpool:            ph u8, pw u8, stride u8, 0 u8
    relu:               empty

``requant`` is ``shift u8, 0 u8 x3, M x int32 bias`` (mode 0) or
``L u16, M*L x int16 thresholds`` (mode 1).
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import ContractError, ModelFormatError
from ..quantfmt import QuantParamsInt8, ThresholdSet, levels
from ..tensor import BitWidth, WeightSet, packed_nbytes
from .network import LayerDef, LayerParams, Model, NetworkDef

MAGIC = b"PNNM"
VERSION = 1
FLAG_LITTLE_ENDIAN = 0x01
HEADER = struct.Struct("<4sBBHHHHBB")
CRC = struct.Struct("<I")
RECORD = struct.Struct("<BBHI")
KIND_CODES = {"conv": 1, "conv_binary": 2, "fc": 3, "relu": 4, "maxpool": 5}
KIND_NAMES = {v: k for k, v in KIND_CODES.items()}
_CRC_AT = HEADER.size
_BODY_AT = HEADER.size + CRC.size


def _requant_bytes(requant) -> tuple[int, bytes]:
    if isinstance(requant, QuantParamsInt8):
        return 0, struct.pack("<B3x", requant.out_shift) + requant.bias.astype("<i4").tobytes()
    if isinstance(requant, ThresholdSet):
        v = requant.values
        return 1, struct.pack("<H", v.shape[1]) + v.astype("<i2").tobytes()
    raise ContractError(f"cannot serialize requantization {type(requant).__name__}")


def _weights_bytes(w: WeightSet) -> bytes:
    return struct.pack("<I", w.data.size) + w.data.tobytes()


def _layer_body(layer: LayerDef, p: LayerParams, in_shape) -> bytes:
    if layer.kind in ("conv", "conv_binary"):
        mode, rq = _requant_bytes(p.requant)
        kh, kw = layer.kernel
        head = struct.pack("<HBBBBBx", layer.out_ch, kh, kw, layer.stride, layer.pad, mode)
        return head + _weights_bytes(p.weights) + rq
    if layer.kind == "fc":
        mode, rq = _requant_bytes(p.requant)
        n = int(np.prod(in_shape))
        return struct.pack("<HBxI", layer.out_ch, mode, n) + _weights_bytes(p.weights) + rq
    if layer.kind == "maxpool":
        ph, pw = layer.kernel
        return struct.pack("<BBBx", ph, pw, layer.stride)
    return b""


def dump_model(model: Model) -> bytes:
    net = model.net
    shapes = net.shapes()
    h, w, c = net.input_shape
    parts = []
    for i, (layer, p) in enumerate(zip(net.layers, model.params)):
        body = _layer_body(layer, p, shapes[i])
        parts.append(RECORD.pack(KIND_CODES[layer.kind], int(layer.bits), 0, len(body)) + body)
    header = HEADER.pack(MAGIC, VERSION, FLAG_LITTLE_ENDIAN, len(net.layers),
                         h, w, c, int(net.input_bits), 0)
    rest = b"".join(parts)
    crc = zlib.crc32(rest, zlib.crc32(header))
    return header + CRC.pack(crc) + rest


class _Reader:
    def __init__(self, blob: bytes, start: int, end: int, layer=None):
        self.blob, self.pos, self.end, self.layer = blob, start, end, layer

    def take(self, fmt: str, what: str):
        s = struct.Struct("<" + fmt)
        if self.pos + s.size > self.end:
            raise ModelFormatError(f"truncated {what}: need {s.size} bytes, "
                                   f"{self.end - self.pos} left", self.pos, self.layer)
        vals = s.unpack_from(self.blob, self.pos)
        self.pos += s.size
        return vals if len(vals) > 1 else vals[0]

    def raw(self, n: int, what: str) -> np.ndarray:
        if self.pos + n > self.end:
            raise ModelFormatError(f"truncated {what}: need {n} bytes, "
                                   f"{self.end - self.pos} left", self.pos, self.layer)
        out = np.frombuffer(self.blob, dtype=np.uint8, count=n, offset=self.pos).copy()
        self.pos += n
        return out

    def fail(self, message: str, at=None):
        raise ModelFormatError(message, self.pos if at is None else at, self.layer)


def _read_weights(r: _Reader, bits: BitWidth, m: int, kh: int, kw: int, c: int) -> WeightSet:
    at = r.pos
    n = r.take("I", "weight length")
    expect = packed_nbytes(m * kh * kw * c, bits)
    if n != expect:
        r.fail(f"weight payload holds {n} bytes, geometry needs {expect}", at)
    return WeightSet(m, kh, kw, c, bits, r.raw(n, "weights"))


def _read_requant(r: _Reader, mode: int, bits: BitWidth, m: int):
    at = r.pos
    if mode == 0:
        if bits != BitWidth.INT8:
            r.fail(f"scale-and-clamp requantization on an INT-{int(bits)} layer", at)
        shift = r.take("B3x", "output shift")
        bias = r.raw(4 * m, "biases").view("<i4")
        try:
            return QuantParamsInt8(shift, bias)
        except ContractError as exc:
            r.fail(str(exc), at)
    if mode == 1:
        n_levels = r.take("H", "threshold count")
        if n_levels != levels(bits):
            r.fail(f"{n_levels} thresholds per channel, INT-{int(bits)} needs {levels(bits)}", at)
        tau = r.raw(2 * m * n_levels, "thresholds").view("<i2").reshape(m, n_levels)
        try:
            return ThresholdSet(int(bits), tau)
        except ContractError as exc:
            r.fail(str(exc), at)
    r.fail(f"unknown requantization mode {mode}", at)


def parse_model(blob: bytes) -> Model:
    blob = bytes(blob)
    if len(blob) < _BODY_AT:
        raise ModelFormatError(f"file is {len(blob)} bytes, shorter than the header", len(blob))
    magic, version, flags, count, h, w, c, in_bits, _ = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise ModelFormatError(f"unsupported version {version}", 4)
    if not flags & FLAG_LITTLE_ENDIAN:
        raise ModelFormatError("big-endian payloads are not supported", 5)
    try:
        net = NetworkDef((h, w, c), in_bits)
    except ValueError as exc:
        raise ModelFormatError(f"bad input description: {exc}", 8) from None

    params = []
    pos = _BODY_AT
    shape = net.input_shape
    for i in range(count):
        r = _Reader(blob, pos, len(blob), layer=i)
        code, bits, _, length = r.take("BBHI", "layer record header")
        if code not in KIND_NAMES:
            r.fail(f"unknown layer kind code {code}", pos)
        kind = KIND_NAMES[code]
        try:
            bits = BitWidth(bits)
        except ValueError:
            r.fail(f"unsupported bit width {bits}", pos + 1)
        body = _Reader(blob, r.pos, r.pos + length, layer=i)
        if body.end > len(blob):
            r.fail(f"record body of {length} bytes runs past the end of the file", r.pos)
        if kind in ("conv", "conv_binary"):
            m, kh, kw, stride, pad, mode = body.take("HBBBBBx", "conv header")
            layer = LayerDef(kind, bits, m, (kh, kw), stride, pad)
            wts = _read_weights(body, bits, m, kh, kw, shape[2])
            p = LayerParams(wts, _read_requant(body, mode, bits, m))
        elif kind == "fc":
            m, mode, n = body.take("HBxI", "fc header")
            if n != int(np.prod(shape)):
                body.fail(f"fc expects {n} inputs, previous layer yields {int(np.prod(shape))}")
            layer = LayerDef(kind, bits, m)
            p = LayerParams(_read_weights(body, bits, m, 1, 1, n), _read_requant(body, mode, bits, m))
        elif kind == "maxpool":
            ph, pw, stride = body.take("BBBx", "pool header")
            layer = LayerDef(kind, bits, 0, (ph, pw), stride)
            p = LayerParams()
        else:
            layer = LayerDef(kind, bits)
            p = LayerParams()
        if body.pos != body.end:
            body.fail(f"{body.end - body.pos} unexpected bytes at the end of the record")
        net.layers.append(layer)
        try:
            shape = net.shapes()[-1]
        except ContractError as exc:
            raise ModelFormatError(str(exc), pos, i) from None
        params.append(p)
        pos = body.end
    if pos != len(blob):
        raise ModelFormatError(f"{len(blob) - pos} trailing bytes after the last layer", pos)
    (stored,) = CRC.unpack_from(blob, _CRC_AT)
    actual = zlib.crc32(blob[_BODY_AT:], zlib.crc32(blob[:_CRC_AT]))
    if stored != actual:
        raise ModelFormatError(f"checksum mismatch: stored {stored:#010x}, computed {actual:#010x}",
                               _CRC_AT)
    try:
        return Model(net, params)
    except ContractError as exc:
        raise ModelFormatError(str(exc)) from None


def save_model(model: Model, path) -> None:
    Path(path).write_bytes(dump_model(model))


def load_model(path) -> Model:
    return parse_model(Path(path).read_bytes())
