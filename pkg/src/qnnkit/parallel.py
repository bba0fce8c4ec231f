"""Fork-join execution of layer kernels over balanced chunks of output work.

Convolutions split flattened output pixels, fully-connected layers split
neurons, and element-wise kernels split elements.  Each worker owns its
im2col scratch and counter array; a layer returns only after every worker
has finished, so consecutive layers never overlap.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from types import ModuleType
from typing import Callable, Optional

import numpy as np

from .backend import backend_name, get_kernels
from .bitops import NUM_COUNTERS, OpCounters
from .errors import ContractError, LayerExecutionError
from .microkernel import TileShape


@dataclass(frozen=True)
class Chunk:
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ContractError(f"chunk start {self.start} after end {self.end}")

    def __len__(self):
        return self.end - self.start


def _balanced(total: int, workers: int) -> list[Chunk]:
    if workers < 1:
        raise ContractError("need at least one worker")
    if total < 0:
        raise ContractError("work size must be non-negative")
    base, extra = divmod(total, workers)
    chunks = []
    start = 0
    for w in range(workers):
        n = base + (1 if w < extra else 0)
        chunks.append(Chunk(start, start + n))
        start += n
    return chunks


def partition_spatial(total_pixels: int, workers: int) -> list[Chunk]:
    """Balanced split of row-major output pixels; every pixel keeps all channels."""
    return _balanced(total_pixels, workers)


def partition_channels(total_neurons: int, workers: int) -> list[Chunk]:
    return _balanced(total_neurons, workers)


partition_elements = _balanced


def default_workers() -> int:
    env = os.environ.get("QNNKIT_WORKERS")
    return int(env) if env else 1


class ExecContext:
    """Worker pool, per-worker scratch and running counter totals.

    ``counters`` accumulates everything executed through this context;
    ``last_counters`` holds the most recent layer alone.
    """

    def __init__(self, num_workers: int = 1, backend: str | ModuleType | None = None,
                 tile: TileShape = TileShape(4, 2)):
        if num_workers < 1:
            raise ContractError("num_workers must be >= 1")
        self.num_workers = int(num_workers)
        self.kernels = backend if isinstance(backend, ModuleType) else get_kernels(backend)
        self.tile = tile
        self.counters = OpCounters()
        self.last_counters = OpCounters()
        self._pool: Optional[ThreadPoolExecutor] = None
        self._scratch: dict[int, np.ndarray] = {}
        self._bin_scratch: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def backend_name(self) -> str:
        return backend_name(self.kernels)

    def pool(self) -> ThreadPoolExecutor:
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.num_workers,
                                            thread_name_prefix="qnnkit")
        return self._pool

    def scratch(self, worker: int, rows: int, length: int) -> np.ndarray:
        """Worker-private im2col buffers, exactly ``rows`` x ``length`` INT-8."""
        buf = self._scratch.get(worker)
        if buf is None or buf.shape != (rows, length):
            buf = np.zeros((rows, length), dtype=np.int8)
            self._scratch[worker] = buf
        return buf

    def binary_scratch(self, worker: int, nwords: int) -> tuple[np.ndarray, np.ndarray]:
        pair = self._bin_scratch.get(worker)
        if pair is None or pair[0].size != nwords:
            pair = (np.zeros(nwords, np.uint32), np.zeros(nwords, np.uint32))
            self._bin_scratch[worker] = pair
        return pair

    @property
    def scratch_nbytes(self) -> int:
        return sum(b.nbytes for b in self._scratch.values())

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        pool = getattr(self, "_pool", None)
        if pool is not None:
            pool.shutdown(wait=False)


RunFn = Callable[[int, Chunk, np.ndarray, np.ndarray], None]


@dataclass
class ParallelOp:
    """One layer's worth of partitionable work.

    ``run(worker, chunk, out, counters)`` must write only the outputs of
    ``chunk``.  ``packed`` outputs share bytes across chunk boundaries, so each
    worker then fills a private zeroed buffer and the results are OR-merged.
    """

    name: str
    total: int
    out_nbytes: int
    run: RunFn
    packed: bool = False
    split: Callable[[int, int], list[Chunk]] = field(default=_balanced)


def run_parallel_layer(op: ParallelOp, ctx: ExecContext,
                       out: Optional[np.ndarray] = None) -> tuple[np.ndarray, OpCounters]:
    chunks = op.split(op.total, ctx.num_workers)
    if out is None:
        out = np.zeros(op.out_nbytes, dtype=np.uint8)
    counters = [np.zeros(NUM_COUNTERS, dtype=np.int64) for _ in chunks]
    private = op.packed and len(chunks) > 1
    targets = [np.zeros_like(out) if private else out for _ in chunks]

    def work(w: int):
        if len(chunks[w]):
            op.run(w, chunks[w], targets[w], counters[w])

    try:
        if len(chunks) == 1:
            work(0)
        else:
            futures = [ctx.pool().submit(work, w) for w in range(len(chunks))]
            errors = [f.exception() for f in futures]
            failed = next((e for e in errors if e is not None), None)
            if failed is not None:
                raise failed
    except LayerExecutionError:
        raise
    except Exception as exc:
        raise LayerExecutionError(f"{op.name}: worker failed: {exc}") from exc

    if private:
        for t in targets:
            np.bitwise_or(out, t, out=out)
    merged = OpCounters.from_array(np.sum(counters, axis=0))
    ctx.last_counters = merged
    ctx.counters += merged
    return out, merged


def scratch_overhead(geom, workers: int, tile: TileShape) -> Fraction:
    """Share of private im2col scratch in the layer's 8-bit memory footprint."""
    if workers < 1:
        raise ContractError("need at least one worker")
    k = geom.kernel_h * geom.kernel_w * geom.in_ch
    scratch = workers * tile.r * k
    inp = geom.in_h * geom.in_w * geom.in_ch
    out = geom.out_h * geom.out_w * geom.out_ch
    weights = geom.out_ch * k
    return Fraction(scratch, inp + out + weights + scratch)
