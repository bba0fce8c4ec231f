"""Benchmark harness: run kernels or whole networks and report counters as CSV/JSON.

Examples::

    qnnkit-bench --kernel conv --q 8 --tile 4x2 --workers 8
    qnnkit-bench --kernel conv --sweep tiles --format json
    qnnkit-bench --emit-cifar10 cifar10.pnn
    qnnkit-bench --net cifar10.pnn --workers 1..8
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from typing import Callable, Optional

import numpy as np

from .. import layers
from ..bitops import OpCounters
from ..errors import ContractError, ModelFormatError
from ..layers import ConvGeometry
from ..microkernel import ALL_TILES, TileShape
from ..parallel import ExecContext
from ..quantfmt import QuantParamsInt8, ThresholdSet, levels
from ..tensor import BitWidth, QTensor, WeightSet
from .cifar10 import build_cifar10
from .modelio import load_model, save_model
from .runner import run_inference

COLUMNS = ["kernel", "Q", "tile", "workers", "macs", "loads", "stores", "macs_per_load",
           "wall_ns", "macs_per_second", "backend", "scores_hash"]

KERNEL_WIDTHS = {
    "conv": (8, 4, 2),
    "conv-bin": (1,),
    "fc": (8, 4, 2),
    "relu": (8, 4, 2),
    "maxpool": (8, 4, 2, 1),
}

# Default shapes: the conv layer is 16x16x32 -> 64 with a 3x3 kernel.
CONV_GEOM = ConvGeometry(16, 16, 32, 64, 3, 3, 1, 1)
FC_SHAPE = (256, 64)
ACT_SHAPE = (16, 16, 32)


def parse_workers(text: str) -> list[int]:
    """``"N"`` or an inclusive range ``"A..B"``."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split("..", 1))
            out = list(range(lo, hi + 1))
        else:
            out = [int(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"workers must be N or A..B, got {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"worker counts must be >= 1, got {text!r}")
    return out


def parse_tile(text: str) -> TileShape:
    try:
        return TileShape.parse(text)
    except ContractError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _rand_values(rng, bits: int, shape) -> np.ndarray:
    if bits == 1:
        return rng.choice(np.array([-1, 1]), size=shape)
    b = BitWidth(bits)
    return rng.integers(b.min_value, b.max_value + 1, shape)


def _requant(rng, bits: int, channels: int, terms: int):
    if bits == 8:
        shift = max(0, int(np.log2(max(terms, 1))) + 5)
        return QuantParamsInt8(shift, rng.integers(-(1 << shift), 1 << shift, channels))
    spread = int(np.sqrt(terms) * (1 << (bits - 1)))
    tau = rng.integers(-spread, spread + 1, (channels, levels(bits)))
    return ThresholdSet(bits, np.sort(tau, axis=1))


def make_kernel_job(kernel: str, bits: int, tile: TileShape, seed: int) -> Callable:
    """A closure ``job(ctx) -> QTensor`` with freshly generated seeded operands."""
    if bits not in KERNEL_WIDTHS[kernel]:
        raise ContractError(f"kernel {kernel} does not run at INT-{bits}")
    rng = np.random.default_rng(seed)
    g = CONV_GEOM
    if kernel in ("conv", "conv-bin"):
        x = QTensor.from_array(_rand_values(rng, bits, (g.in_h, g.in_w, g.in_ch)), bits)
        w = WeightSet.from_array(
            _rand_values(rng, bits, (g.out_ch, g.kernel_h, g.kernel_w, g.in_ch)), bits)
        if kernel == "conv-bin":
            tau = rng.integers(-g.field_size // 8, g.field_size // 8 + 1, g.out_ch)
            return lambda ctx: layers.conv2d_binary(x, w, g, tau, ctx)
        rq = _requant(rng, bits, g.out_ch, g.field_size)
        return lambda ctx: layers.conv2d_q(x, w, g, rq, tile, ctx)
    if kernel == "fc":
        n, m = FC_SHAPE
        x = QTensor.from_array(_rand_values(rng, bits, (1, 1, n)), bits)
        w = WeightSet.from_array(_rand_values(rng, bits, (m, n)), bits)
        rq = _requant(rng, bits, m, n)
        return lambda ctx: layers.fully_connected(x, w, rq, ctx)
    x = QTensor.from_array(_rand_values(rng, bits, ACT_SHAPE), bits)
    if kernel == "relu":
        return lambda ctx: layers.relu(x, ctx)
    return lambda ctx: layers.maxpool(x, 2, 2, 2, ctx)


def _row(kernel, bits, tile, workers, counters, wall_ns, backend, out_bytes) -> dict:
    mps = counters.macs / (wall_ns * 1e-9) if wall_ns else 0.0
    return {
        "kernel": kernel,
        "Q": int(bits),
        "tile": str(tile),
        "workers": workers,
        "macs": counters.macs,
        "loads": counters.loads,
        "stores": counters.stores,
        "macs_per_load": round(counters.macs_per_load, 4),
        "wall_ns": int(wall_ns),
        "macs_per_second": round(mps, 1),
        "backend": backend,
        "scores_hash": hashlib.sha256(out_bytes).hexdigest()[:16],
    }


def run_kernel(kernel: str, bits: int, tile: TileShape, workers: int, seed: int,
               backend: Optional[str] = None) -> dict:
    job = make_kernel_job(kernel, bits, tile, seed)
    with ExecContext(workers, backend, tile) as ctx:
        before = ctx.counters.to_array()
        t0 = time.perf_counter_ns()
        out = job(ctx)
        wall = time.perf_counter_ns() - t0
        counters = OpCounters.from_array(ctx.counters.to_array() - before)
        shown_tile = tile if kernel == "conv" else ("2x1" if kernel == "fc" else "-")
        return _row(kernel, bits, shown_tile, workers, counters, wall, ctx.backend_name,
                    out.data.tobytes())


def run_net(path: str, workers: int, seed: int, tile: TileShape,
            backend: Optional[str] = None) -> dict:
    model = load_model(path)
    net = model.net
    rng = np.random.default_rng(seed)
    x = QTensor.from_array(_rand_values(rng, int(net.input_bits), net.input_shape),
                           net.input_bits)
    with ExecContext(workers, backend, tile) as ctx:
        res = run_inference(model, x, ctx)
        name = "net:" + os.path.basename(path)
        return _row(name, net.input_bits, tile, workers, res.counters, res.wall_ns,
                    ctx.backend_name, res.output.data.tobytes())


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qnnkit-bench", description=__doc__.splitlines()[0])
    ap.add_argument("--net", metavar="PATH", help="model file to run end to end")
    ap.add_argument("--kernel", choices=sorted(KERNEL_WIDTHS), default="conv")
    ap.add_argument("--q", type=int, choices=(8, 4, 2, 1), default=None,
                    help="bit width (default: 8, or 1 for conv-bin)")
    ap.add_argument("--tile", type=parse_tile, default=TileShape(4, 2), metavar="SxR")
    ap.add_argument("--workers", type=parse_workers, default=None, metavar="N|A..B",
                    help="worker count or range; QNNKIT_WORKERS sets the default")
    ap.add_argument("--sweep", choices=("tiles", "widths", "workers"))
    ap.add_argument("--out", metavar="PATH", help="write the report here instead of stdout")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--backend", choices=("auto", "cython", "python"), default=None)
    ap.add_argument("--emit-cifar10", metavar="PATH",
                    help="write the synthetic CIFAR-10 model file and exit")
    return ap


def _resolve_workers(arg: Optional[list[int]], sweep: Optional[str]) -> list[int]:
    if arg is None:
        env = os.environ.get("QNNKIT_WORKERS")
        arg = parse_workers(env) if env else [1]
    if sweep == "workers" and len(arg) == 1:
        arg = list(range(1, arg[0] + 1)) if arg[0] > 1 else list(range(1, 9))
    return arg


def collect_rows(args) -> list[dict]:
    workers = _resolve_workers(args.workers, args.sweep)
    if args.net:
        return [run_net(args.net, w, args.seed, args.tile, args.backend) for w in workers]
    bits = args.q if args.q is not None else (1 if args.kernel == "conv-bin" else 8)
    tiles = [args.tile]
    widths = [bits]
    if args.sweep == "tiles":
        if args.kernel != "conv":
            raise ContractError("--sweep tiles applies to --kernel conv")
        tiles = list(ALL_TILES)
    elif args.sweep == "widths":
        widths = list(KERNEL_WIDTHS[args.kernel])
    rows = []
    for q in widths:
        for t in tiles:
            for w in workers:
                rows.append(run_kernel(args.kernel, q, t, w, args.seed, args.backend))
    return rows


def format_rows(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.emit_cifar10:
        save_model(build_cifar10(args.seed), args.emit_cifar10)
        print(f"wrote {args.emit_cifar10}", file=sys.stderr)
        return 0
    try:
        rows = collect_rows(args)
    except (ContractError, ModelFormatError, FileNotFoundError) as exc:
        print(f"qnnkit-bench: error: {exc}", file=sys.stderr)
        return 2
    text = format_rows(rows, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
