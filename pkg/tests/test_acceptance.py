"""Exit criteria, one or more tests per criterion, each timed against its budget.

The summary printed at the end of the run (see conftest) gives one
pass/fail line per criterion with the measured values.
"""

import os
import time
from fractions import Fraction

import numpy as np
import pytest

import _gen
from qnnkit import (BatchNormParams, ConvGeometry, ExecContext, ThresholdRangeError,
                    TileShape, WeightSet, bitops, compute_thresholds,
                    conv2d_binary, conv2d_q, fully_connected, get_kernels, maxpool, oracle, relu,
                    scratch_overhead, select_tile, tile_cost)
from qnnkit.bitops import NUM_COUNTERS, OpCounters
from qnnkit.microkernel import ALL_TILES, matmul_tile
from qnnkit.netrunner import (build_cifar10, count_params_macs, layer_macs, load_model,
                              random_input, run_inference, save_model)
from qnnkit.quantfmt import QuantParamsInt8, compress_staircase_array
from qnnkit.tensor import pack_elements

KERN = get_kernels()


class Timer:
    def __init__(self, limit_s):
        self.limit = limit_s
        self.t0 = time.perf_counter()

    def check(self):
        elapsed = time.perf_counter() - self.t0
        assert elapsed < self.limit, f"took {elapsed:.2f} s, budget {self.limit} s"
        return elapsed


# -- 1 ----------------------------------------------------------------------

@pytest.mark.criterion(1, "static tile ratios match the dynamic counters")
def test_c1_tile_ratios(report):
    timer = Timer(1.0)
    expected = {(2, 2): Fraction(4), (4, 2): Fraction(32, 6), (2, 4): Fraction(32, 6),
                (4, 4): Fraction(8)}
    for (s, r), ratio in expected.items():
        assert tile_cost(TileShape(s, r)).macs_per_load == ratio
    rng = np.random.default_rng(1)
    K = 144
    for tile in ALL_TILES:
        w = rng.integers(-128, 128, (tile.s, K), dtype=np.int8)
        x = rng.integers(-128, 128, (tile.r, K), dtype=np.int8)
        cnt = np.zeros(NUM_COUNTERS, dtype=np.int64)
        acc = KERN.matmul_tile(w, x, cnt)
        assert np.array_equal(acc, w.astype(np.int64) @ x.astype(np.int64).T)
        c = OpCounters.from_array(cnt)
        assert c.scalar_loads == 0 and c.scalar_macs == 0
        assert Fraction(c.macs, c.loads) == tile_cost(tile).macs_per_load
        assert c.loads == (K // 4) * (tile.s + tile.r)
        assert c.vector_dots == (K // 4) * tile.s * tile.r
        # scalar model agrees too
        py = OpCounters()
        matmul_tile(w, x, tile, py)
        assert py == c
    report(", ".join(f"{t}: {tile_cost(t).macs_per_load}" for t in ALL_TILES))
    timer.check()


# -- 2 ----------------------------------------------------------------------

@pytest.mark.criterion(2, "register-pressure tile selection")
def test_c2_register_pressure(report):
    timer = Timer(1.0)
    assert tile_cost(TileShape(4, 4)).registers_needed == 24
    assert select_tile(23) == TileShape(4, 2)
    assert select_tile(24) == TileShape(4, 4)
    report(f"registers(4x4)={tile_cost(TileShape(4, 4)).registers_needed}, "
           f"select_tile(23)={select_tile(23)}")
    timer.check()


# -- 3 ----------------------------------------------------------------------

CASES = 500


def _ctx_pool():
    cache = {}

    def get(workers, tile):
        key = (workers, tile)
        if key not in cache:
            cache[key] = ExecContext(workers, KERN, tile)
        return cache[key]
    return get, cache


@pytest.mark.criterion(3, "oracle equivalence, 7 kernels x 500 geometries")
def test_c3_oracle_equivalence(report):
    timer = Timer(120.0)
    rng = np.random.default_rng(3)
    ctx_for, cache = _ctx_pool()
    counts = {}
    mismatches = []

    def check(name, got, want):
        counts[name] = counts.get(name, 0) + 1
        if got != want:
            mismatches.append(name)

    for i in range(CASES):
        workers = int(rng.integers(1, 5))
        for bits in (8, 4, 2):
            case = _gen.conv_case(rng, bits, i)
            ctx = ctx_for(workers, case.tile)
            check(f"conv INT-{bits}", conv2d_q(case.x, case.w, case.geom, case.rq, ctx=ctx),
                  oracle.conv2d_ref(case.x, case.w, case.geom, case.rq))
        case = _gen.conv_case(rng, 1, i)
        check("conv INT-1", conv2d_binary(case.x, case.w, case.geom, case.rq,
                                          ctx_for(workers, case.tile)),
              oracle.conv2d_binary_ref(case.x, case.w, case.geom, case.rq))
        bits = (8, 4, 2)[i % 3]
        ctx = ctx_for(workers, ALL_TILES[0])
        x, w, rq = _gen.fc_case(rng, bits)
        check("fc", fully_connected(x, w, rq, ctx), oracle.fc_ref(x, w, rq))
        t = _gen.activation_case(rng, bits)
        check("relu", relu(t, ctx), oracle.relu_ref(t))
        t = _gen.activation_case(rng, (8, 4, 2, 1)[i % 4])
        ph, pw, stride = _gen.pool_params(rng, t)
        check("maxpool", maxpool(t, ph, pw, stride, ctx), oracle.pool_ref(t, ph, pw, stride))
    for c in cache.values():
        c.close()
    elapsed = timer.check()
    report(f"{sum(counts.values())} comparisons in {elapsed:.1f} s, "
           f"{len(mismatches)} mismatches; per kernel: {counts}")
    assert not mismatches, sorted(set(mismatches))
    assert all(n >= CASES for n in counts.values())


# -- 4 ----------------------------------------------------------------------

SWEEP = np.arange(-32768, 32768, dtype=np.int64)


@pytest.mark.criterion(4, "staircase tree vs linear scan, thresholds vs BN pipeline")
def test_c4_staircase_tree(report):
    timer = Timer(60.0)
    rng = np.random.default_rng(4)
    acc32 = SWEEP.astype(np.int32)
    for q in (4, 2):
        for _ in range(200):
            tau = np.sort(rng.integers(-32768, 32768, (1 << q) - 1)).astype(np.int16)
            want = oracle.staircase_ref(SWEEP, tau, q)
            assert np.array_equal(KERN.staircase_many(acc32, tau, q), want)
            assert np.array_equal(compress_staircase_array(SWEEP, tau, q), want)
    report("tree == linear scan on 200 sets x 65,536 accumulators for Q=4 and Q=2")
    timer.check()


@pytest.mark.criterion(4, "staircase tree vs linear scan, thresholds vs BN pipeline")
def test_c4_thresholds_match_bn_pipeline(report):
    timer = Timer(60.0)
    rng = np.random.default_rng(44)
    checked = {4: 0, 2: 0, 1: 0}
    for q in checked:
        sets = [BatchNormParams(1.0, 1.0, 0.0, 0.0, 0.0)]
        while len(sets) < 20:
            sets.append(BatchNormParams(
                gamma=float(rng.uniform(0.05, 3.0)), sigma=float(rng.uniform(0.2, 3.0)),
                mu=float(rng.uniform(-4, 4)), beta=float(rng.uniform(-1, 1)),
                bias_b=float(rng.uniform(-2, 2))))
        for bn in sets:
            try:
                tau = compute_thresholds(bn, q)
            except ThresholdRangeError:
                continue
            got = compress_staircase_array(SWEEP, tau, q)
            assert np.array_equal(got, oracle.bn_pipeline_ref(bn, q, SWEEP)), (bn, q)
            checked[q] += 1
    assert all(n >= 15 for n in checked.values()), checked
    report(f"BN pipeline matched pointwise over INT-16 for {checked} parameter sets per Q")
    timer.check()


# -- 5 ----------------------------------------------------------------------

@pytest.mark.criterion(5, "pack/unpack and bextract/bitinsert exhaustive")
def test_c5_pack_unpack_exhaustive(report):
    timer = Timer(10.0)
    for size, count in ((4, 1 << 16), (2, 1 << 8)):
        codes = np.arange(count, dtype=np.int64)
        fields = np.stack([(codes >> (size * i)) & ((1 << size) - 1) for i in range(4)], axis=1)
        lanes = np.where(fields >= 1 << (size - 1), fields - (1 << size), fields)
        packed = pack_elements(lanes.ravel(), size)
        words = packed.reshape(count, -1).astype(np.uint32)
        words = words[:, 0] | (words[:, 1] << 8) if size == 4 else words[:, 0]
        assert np.array_equal(words, codes)
        assert np.array_equal(KERN.unpack4_many(np.ascontiguousarray(words, np.uint32), size),
                              lanes)
        scalar = bitops.unpack_int4_to_vec if size == 4 else bitops.unpack_int2_to_vec
        assert all(tuple(scalar(int(wd))) == tuple(ln) for wd, ln in zip(words, lanes.tolist()))
    rng = np.random.default_rng(5)
    dests = rng.integers(0, 1 << 32, 8, dtype=np.uint64)
    n = 0
    for size in (1, 2, 4, 8):
        for off in range(0, 33 - size, size):
            for v in range(-(1 << (size - 1)), 1 << (size - 1)):
                for d in dests.tolist():
                    word = bitops.bitinsert(d, v, off, size)
                    assert bitops.bextract(word, off, size) == v
                    mask = ((1 << size) - 1) << off
                    assert word & ~mask == d & ~mask
                    n += 1
                srcs = np.full(dests.size, v, dtype=np.int64)
                words = KERN.bitinsert_many(dests.astype(np.uint32), srcs, off, size)
                assert np.all(KERN.bextract_many(words, off, size) == v)
    report(f"INT-4: 65,536 words, INT-2: 256 bytes, {n} insert/extract roundtrips")
    timer.check()


# -- 6 ----------------------------------------------------------------------

def _xnor_popcount_dot(w_bits, x_bits, n):
    words = (n + 31) // 32
    pad = words * 32 - n
    wp = np.packbits(np.concatenate([w_bits, np.zeros(pad, np.uint8)]), bitorder="little")
    xp = np.packbits(np.concatenate([x_bits, np.zeros(pad, np.uint8)]), bitorder="little")
    ww = wp.view("<u4")
    xw = xp.view("<u4")
    p = 0
    for i in range(words):
        valid = 32 if i < words - 1 or n % 32 == 0 else n % 32
        mask = (1 << valid) - 1
        p += bitops.popcount(~(int(ww[i]) ^ int(xw[i])) & mask)
    return 2 * p - n


@pytest.mark.criterion(6, "binary XNOR-popcount identity")
def test_c6_binary_identity(report):
    timer = Timer(10.0)
    rng = np.random.default_rng(6)
    for _ in range(10_000):
        n = int(rng.integers(1, 513))
        w = rng.integers(0, 2, n, dtype=np.uint8)
        x = rng.integers(0, 2, n, dtype=np.uint8)
        want = int(((2 * w.astype(np.int64) - 1) * (2 * x.astype(np.int64) - 1)).sum())
        assert _xnor_popcount_dot(w, x, n) == want
    # border pixels: pin the kernel accumulator exactly with thresholds acc and acc + 1
    border = 0
    for i in range(300):
        case = _gen.conv_case(rng, 1, i, max_dim=8)
        g = case.geom
        if g.pad == 0:
            g = ConvGeometry(g.in_h, g.in_w, g.in_ch, g.out_ch, g.kernel_h, g.kernel_w,
                             g.stride, 1)
        acc = oracle.binary_conv_accumulators(oracle.tensor_values(case.x),
                                              oracle.weight_values(case.w), g.stride, g.pad)
        corner = acc[0, 0]
        for delta, bit in ((0, 1), (1, -1)):
            out = conv2d_binary(case.x, case.w, g, corner + delta)
            assert np.all(out.to_array()[0, 0] == bit)
        border += 1
    report(f"10,000 random dot products (N <= 512) and {border} padded corner pixels exact")
    timer.check()


# -- 7 ----------------------------------------------------------------------

@pytest.mark.criterion(7, "parallel determinism, MAC conservation, scratch overhead")
def test_c7_parallel_determinism(report):
    timer = Timer(30.0)
    rng = np.random.default_rng(7)
    g = ConvGeometry(16, 16, 32, 64, 3, 3, 1, 1)
    tile = TileShape(4, 2)
    for bits in (8, 4, 2):
        case_x = _gen.tensor(rng, bits, (16, 16, 32))
        w = WeightSet.from_array(_gen.values(rng, bits, (64, 3, 3, 32)), bits)
        rq = _gen.requant(rng, bits, 64, g.field_size)
        outs, macs = [], []
        for workers in (1, 2, 4, 8):
            with ExecContext(workers, KERN, tile) as ctx:
                out = conv2d_q(case_x, w, g, rq, ctx=ctx)
                outs.append(out.data.tobytes())
                macs.append(ctx.counters.macs)
                assert ctx.scratch_nbytes == workers * tile.r * g.field_size
        assert all(o == outs[0] for o in outs)
        assert macs == [g.macs] * 4
    ratio = scratch_overhead(g, 8, tile)
    scratch = 8 * tile.r * g.field_size
    footprint = 16 * 16 * 32 + 16 * 16 * 64 + 64 * g.field_size + scratch
    assert (scratch, footprint) == (4608, 47616)
    assert ratio == Fraction(scratch, footprint)
    assert abs(float(ratio) - 0.09) <= 0.01
    report(f"byte-identical for workers 1/2/4/8 at INT-8/4/2; macs {g.macs}; "
           f"scratch overhead {scratch}/{footprint} = {float(ratio):.4f}")
    timer.check()


# -- 8 ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def cifar(tmp_path_factory):
    path = tmp_path_factory.mktemp("model") / "cifar10.pnn"
    save_model(build_cifar10(0), path)
    return load_model(path)


@pytest.mark.criterion(8, "CIFAR-10 accounting")
def test_c8_static_macs_exact(cifar, report):
    timer = Timer(30.0)
    params, macs = count_params_macs(cifar)
    per_layer = [m for m in layer_macs(cifar.net) if m]
    report(f"count_params_macs: {macs:,} MACs (layers {per_layer}), {params:,} weights")
    assert macs == 6_553_600
    timer.check()


@pytest.mark.criterion(8, "CIFAR-10 accounting")
def test_c8_rounds_to_6_56_mmacs(cifar):
    _, macs = count_params_macs(cifar)
    assert round(macs / 1e6, 2) == 6.56


@pytest.mark.criterion(8, "CIFAR-10 accounting")
def test_c8_static_equals_dynamic(cifar, report):
    timer = Timer(30.0)
    compute = [l for l in cifar.net.layers if l.kind in ("conv", "conv_binary", "fc")]
    assert len(compute) == 4
    _, static = count_params_macs(cifar)
    with ExecContext(1, KERN) as ctx:
        res = run_inference(cifar, random_input(0), ctx)
    report(f"static {static:,} == dynamic {res.counters.macs:,}")
    assert res.counters.macs == static
    timer.check()


# -- 9 ----------------------------------------------------------------------

def _hardware_contexts() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


@pytest.mark.criterion(9, "8-worker speedup >= 3x on a 32x32x32->64 INT-8 layer")
def test_c9_parallel_speedup(report):
    timer = Timer(60.0)
    rng = np.random.default_rng(9)
    g = ConvGeometry(32, 32, 32, 64, 3, 3, 1, 1)
    x = _gen.tensor(rng, 8, (32, 32, 32))
    w = WeightSet.from_array(_gen.values(rng, 8, (64, 3, 3, 32)), 8)
    rq = QuantParamsInt8(14, np.zeros(64))
    best = {}
    for workers in (1, 8):
        with ExecContext(workers, KERN) as ctx:
            conv2d_q(x, w, g, rq, ctx=ctx)  # warm-up, pool start
            times = []
            for _ in range(5):
                t0 = time.perf_counter()
                conv2d_q(x, w, g, rq, ctx=ctx)
                times.append(time.perf_counter() - t0)
            best[workers] = min(times)
    speedup = best[1] / best[8]
    contexts = _hardware_contexts()
    report(f"{contexts} hardware contexts, backend {ctx.backend_name}: "
           f"1 worker {best[1] * 1e3:.2f} ms, 8 workers {best[8] * 1e3:.2f} ms, "
           f"speedup {speedup:.2f}x")
    timer.check()
    if contexts < 8:
        pytest.skip(f"needs >= 8 hardware execution contexts, host has {contexts}")
    if ctx.backend_name != "cython":
        pytest.skip("the pure-Python kernels hold the GIL")
    assert speedup >= 3.0

