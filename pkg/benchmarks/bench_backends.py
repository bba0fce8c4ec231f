"""Compare the compiled and pure-Python kernel backends on identical inputs.

    python3 benchmarks/bench_backends.py --repeat 3

Each kernel runs once per backend to check the outputs and counters agree,
then is timed ``--repeat`` times; the best time is reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qnnkit import (BitWidth, ConvGeometry, ExecContext, QTensor, QuantParamsInt8, ThresholdSet,
                    TileShape, WeightSet, available_backends, conv2d_binary, conv2d_q,
                    fully_connected, maxpool, relu)


def _vals(rng, bits, shape):
    if bits == 1:
        return rng.choice(np.array([-1, 1]), size=shape)
    b = BitWidth(bits)
    return rng.integers(b.min_value, b.max_value + 1, shape)


def make_jobs(seed: int):
    rng = np.random.default_rng(seed)
    g = ConvGeometry(8, 8, 16, 16, 3, 3, 1, 1)
    jobs = {}
    for bits in (8, 4, 2):
        x = QTensor.from_array(_vals(rng, bits, (8, 8, 16)), bits)
        w = WeightSet.from_array(_vals(rng, bits, (16, 3, 3, 16)), bits)
        if bits == 8:
            rq = QuantParamsInt8(10, rng.integers(-512, 512, 16))
        else:
            rq = ThresholdSet(bits, np.sort(rng.integers(-40, 40, (16, (1 << bits) - 1)), axis=1))
        jobs[f"conv int{bits}"] = (lambda ctx, x=x, w=w, rq=rq: conv2d_q(x, w, g, rq, ctx=ctx))
    xb = QTensor.from_array(_vals(rng, 1, (8, 8, 16)), 1)
    wb = WeightSet.from_array(_vals(rng, 1, (16, 3, 3, 16)), 1)
    tau = rng.integers(-20, 20, 16)
    jobs["conv int1"] = lambda ctx: conv2d_binary(xb, wb, g, tau, ctx)
    xf = QTensor.from_array(_vals(rng, 8, (1, 1, 256)), 8)
    wf = WeightSet.from_array(_vals(rng, 8, (32, 256)), 8)
    rqf = QuantParamsInt8(12, np.zeros(32))
    jobs["fc int8"] = lambda ctx: fully_connected(xf, wf, rqf, ctx)
    xa = QTensor.from_array(_vals(rng, 8, (16, 16, 32)), 8)
    jobs["relu int8"] = lambda ctx: relu(xa, ctx)
    jobs["maxpool int8"] = lambda ctx: maxpool(xa, 2, 2, 2, ctx)
    return jobs


def best_time(job, ctx, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        job(ctx)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the Python kernels are available")
    print(f"{'kernel':<14}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, job in make_jobs(args.seed).items():
        results, times = {}, {}
        for b in backends:
            ctx = ExecContext(1, b, TileShape(4, 2))
            out = job(ctx)
            results[b] = (out.data.tobytes(), ctx.counters.to_array().tolist())
            times[b] = best_time(job, ctx, args.repeat)
        if len({r for r in map(repr, results.values())}) != 1:
            raise SystemExit(f"{name}: backends disagree")
        speed = times["python"] / times["cython"] if len(times) == 2 else float("nan")
        row = "".join(f"{times[b] * 1e3:>12.2f}ms" for b in backends)
        print(f"{name:<14}{row}{speed:>9.0f}x")


if __name__ == "__main__":
    main()
