"""s x r matrix-multiplication inner kernels and their static cost model.

A tile computes ``s`` output channels for ``r`` output pixels per pass over
the receptive field.  Each 4-element step loads one vector per weight bank
and one per im2col buffer, then issues ``s*r`` four-way dot products.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

from . import bitops
from .bitops import OpCounters
from .errors import ContractError

VALID_TILES = ((1, 2), (2, 1), (2, 2), (4, 2), (2, 4), (4, 4))


@dataclass(frozen=True)
class TileShape:
    s: int
    r: int

    def __post_init__(self):
        if (self.s, self.r) not in VALID_TILES:
            raise ContractError(f"tile {self.s}x{self.r} not one of {VALID_TILES}")

    @classmethod
    def parse(cls, text: str) -> "TileShape":
        try:
            s, r = (int(v) for v in text.lower().split("x"))
        except ValueError:
            raise ContractError(f"tile must look like SxR, got {text!r}") from None
        return cls(s, r)

    def __str__(self):
        return f"{self.s}x{self.r}"


ALL_TILES = tuple(TileShape(s, r) for s, r in VALID_TILES)


@dataclass(frozen=True)
class TileCost:
    loads_per_iter: int
    dots_per_iter: int
    macs_per_load: Fraction
    registers_needed: int


def tile_cost(tile: TileShape) -> TileCost:
    s, r = tile.s, tile.r
    return TileCost(
        loads_per_iter=s + r,
        dots_per_iter=s * r,
        macs_per_load=Fraction(4 * s * r, s + r),
        # accumulators plus operand vectors; address registers not counted
        registers_needed=s * r + s + r,
    )


def select_tile(register_budget: int) -> TileShape:
    """Best-reuse tile that fits the register budget; ties prefer fewer im2col buffers."""
    if register_budget < 4:
        raise ContractError("register budget must be at least 4")
    feasible = [t for t in ALL_TILES if tile_cost(t).registers_needed <= register_budget]
    if not feasible:
        raise ContractError(f"no tile fits in {register_budget} registers")
    return max(feasible, key=lambda t: (tile_cost(t).macs_per_load, -t.r))


VecLoader = Callable[[int, int, Optional[OpCounters]], Sequence[int]]
ScalarLoader = Callable[[int, int, Optional[OpCounters]], int]


def run_tile(s: int, r: int, k_len: int,
             weight_vec: VecLoader, weight_scalar: ScalarLoader,
             buf_vec: VecLoader, buf_scalar: ScalarLoader,
             counters: Optional[OpCounters] = None) -> list[list[int]]:
    """Tile loop over abstract operand loaders.

    ``weight_vec(i, k, counters)`` yields four INT-8 lanes of bank ``i`` from
    element ``k`` (unpacking sub-byte data as needed); the ``*_scalar``
    loaders serve the K-tail.  Returns accumulators indexed ``[i][j]``.
    """
    acc = [[0] * r for _ in range(s)]
    full = k_len - k_len % 4
    for k in range(0, full, 4):
        wv = []
        for i in range(s):
            wv.append(weight_vec(i, k, counters))
            if counters is not None:
                counters.loads += 1
        xv = []
        for j in range(r):
            xv.append(buf_vec(j, k, counters))
            if counters is not None:
                counters.loads += 1
        for i in range(s):
            row = acc[i]
            for j in range(r):
                row[j] = bitops.dot4_acc(wv[i], xv[j], row[j], counters)
    for k in range(full, k_len):
        w = [weight_scalar(i, k, counters) for i in range(s)]
        x = [buf_scalar(j, k, counters) for j in range(r)]
        if counters is not None:
            counters.loads += s + r
            counters.scalar_loads += s + r
            counters.macs += s * r
            counters.scalar_macs += s * r
        for i in range(s):
            for j in range(r):
                acc[i][j] += w[i] * x[j]
    return acc


def matmul_tile(weights: Sequence[Sequence[int]], buffers: Sequence[Sequence[int]],
                tile: TileShape, counters: Optional[OpCounters] = None) -> list[list[int]]:
    """Exact s x r block of dot products between INT-8 weight banks and im2col buffers."""
    s, r = tile.s, tile.r
    weights = [[int(v) for v in w] for w in weights]
    buffers = [[int(v) for v in b] for b in buffers]
    if len(weights) != s or len(buffers) != r:
        raise ContractError(f"tile {tile} needs {s} weight banks and {r} buffers")
    k_len = len(buffers[0])
    if k_len == 0:
        raise ContractError("empty receptive field")
    if any(len(b) != k_len for b in buffers) or any(len(w) != k_len for w in weights):
        raise ContractError("weight banks and buffers must share one length")
    return run_tile(
        s, r, k_len,
        lambda i, k, c: bitops.pack4(*weights[i][k:k + 4]),
        lambda i, k, c: weights[i][k],
        lambda j, k, c: bitops.pack4(*buffers[j][k:k + 4]),
        lambda j, k, c: buffers[j][k],
        counters,
    )
