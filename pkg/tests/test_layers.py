import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import _gen
from qnnkit import (ContractError, ConvGeometry, ExecContext, GeometryError, QTensor,
                    QuantParamsInt8, ThresholdSet, WeightSet, conv2d_binary,
                    conv2d_q, fully_connected, im2col, maxpool, oracle, relu)
from qnnkit.layers import new_im2col_buffer
from qnnkit.microkernel import ALL_TILES


def identity_requant(bits, channels):
    if bits == 8:
        return QuantParamsInt8(0, [0] * channels)
    half = 1 << (bits - 1)
    # tau_p = p makes the staircase the identity on [-half, half - 1]
    return ThresholdSet(bits, np.tile(np.arange(-half + 1, half), (channels, 1)))


def test_im2col_1x1_is_channel_vector():
    rng = np.random.default_rng(0)
    t = _gen.tensor(rng, 8, (3, 4, 5))
    g = ConvGeometry(3, 4, 5, 2, 1, 1)
    dest = new_im2col_buffer(g)
    im2col(t, g, 2, 1, dest)
    assert np.array_equal(dest, t.to_array()[1, 2])


@pytest.mark.parametrize("bits", [8, 4, 2])
def test_im2col_corner_zero_fill(bits):
    rng = np.random.default_rng(bits)
    vals = _gen.values(rng, bits, (4, 4, 3))
    vals[vals == 0] = 1
    t = QTensor.from_array(vals, bits)
    g = ConvGeometry(4, 4, 3, 1, 3, 3, 1, 1)
    dest = new_im2col_buffer(g)
    im2col(t, g, 0, 0, dest)
    taps = dest.reshape(3, 3, 3)
    zero_taps = [(ky, kx) for ky in range(3) for kx in range(3) if not taps[ky, kx].any()]
    assert zero_taps == [(0, 0), (0, 1), (0, 2), (1, 0), (2, 0)]
    assert np.array_equal(taps[1:, 1:], vals[:2, :2])


def test_im2col_dot_matches_oracle():
    rng = np.random.default_rng(3)
    case = _gen.conv_case(rng, 8)
    g = case.geom
    wv = oracle.weight_values(case.w)
    acc = oracle.conv_accumulators(oracle.tensor_values(case.x), wv, g.stride, g.pad)
    dest = new_im2col_buffer(g)
    for oy in range(g.out_h):
        for ox in range(g.out_w):
            im2col(case.x, g, ox, oy, dest)
            got = wv.reshape(g.out_ch, -1) @ dest.astype(np.int64)
            assert np.array_equal(got, acc[oy, ox])


def test_im2col_errors():
    t = QTensor.zeros(4, 4, 2, 8)
    g = ConvGeometry(4, 4, 2, 1, 3, 3)
    with pytest.raises(ContractError):
        im2col(t, ConvGeometry(4, 4, 3, 1, 3, 3), 0, 0, np.zeros(27, np.int8))
    with pytest.raises(ContractError):
        im2col(t, g, 0, 0, np.zeros(17, np.int8))
    with pytest.raises(ContractError):
        im2col(t, g, 2, 0, new_im2col_buffer(g))


def test_geometry_rejected():
    with pytest.raises(GeometryError):
        ConvGeometry(2, 2, 1, 1, 3, 3)
    with pytest.raises(GeometryError):
        ConvGeometry(4, 4, 1, 1, 3, 3, stride=0)
    g = ConvGeometry(16, 16, 32, 64, 3, 3, 1, 1)
    assert (g.out_h, g.out_w, g.field_size) == (16, 16, 288)
    assert g.macs == 16 * 16 * 64 * 288


@pytest.mark.parametrize("bits", [8, 4, 2])
def test_conv_identity_passthrough(bits, backend):
    rng = np.random.default_rng(bits)
    c = 6
    t = _gen.tensor(rng, bits, (5, 3, c))
    w = WeightSet.from_array(np.eye(c, dtype=int).reshape(c, 1, 1, c), bits)
    g = ConvGeometry.for_layer(t, w)
    out = conv2d_q(t, w, g, identity_requant(bits, c), ctx=ExecContext(backend=backend))
    assert out == t


@pytest.mark.parametrize("bits", [8, 4, 2])
def test_conv_zero_weights(bits):
    rng = np.random.default_rng(1)
    t = _gen.tensor(rng, bits, (6, 6, 4))
    w = WeightSet.from_array(np.zeros((3, 3, 3, 4), int), bits)
    g = ConvGeometry.for_layer(t, w, pad=1)
    rq = _gen.requant(rng, bits, 3, g.field_size)
    out = conv2d_q(t, w, g, rq).to_array()
    if bits == 8:
        want = [oracle.requant_fraction_ref(0, int(b), rq.out_shift) for b in rq.bias]
    else:
        want = [int(oracle.staircase_ref(0, tau, bits)) for tau in rq.values]
    assert np.array_equal(out, np.broadcast_to(want, out.shape))


def test_conv_int4_8x8x8_matches_oracle(backend):
    rng = np.random.default_rng(848)
    t = _gen.tensor(rng, 4, (8, 8, 8))
    w = WeightSet.from_array(_gen.values(rng, 4, (8, 3, 3, 8)), 4)
    g = ConvGeometry.for_layer(t, w, pad=1)
    rq = _gen.requant(rng, 4, 8, g.field_size)
    got = conv2d_q(t, w, g, rq, ctx=ExecContext(backend=backend))
    assert got == oracle.conv2d_ref(t, w, g, rq)


@pytest.mark.parametrize("bits", [8, 4, 2])
def test_output_independent_of_tile(bits):
    rng = np.random.default_rng(10 + bits)
    case = _gen.conv_case(rng, bits, max_dim=9, max_ch=12)
    outs = {conv2d_q(case.x, case.w, case.geom, case.rq, tile=t).data.tobytes() for t in ALL_TILES}
    assert len(outs) == 1


@settings(max_examples=40, deadline=None)
@given(bits=st.sampled_from([4, 2]), seed=st.integers(0, 2**32 - 1))
def test_subbyte_outputs_in_range(bits, seed):
    case = _gen.conv_case(np.random.default_rng(seed), bits, max_dim=8, max_ch=10)
    vals = conv2d_q(case.x, case.w, case.geom, case.rq).to_array()
    assert vals.min() >= -(1 << (bits - 1)) and vals.max() < (1 << (bits - 1))


def test_conv_accumulator_bound_rejected():
    t = QTensor.zeros(4, 4, 57, 4)
    w = WeightSet.from_array(np.zeros((1, 3, 3, 57), int), 4)  # K = 513
    with pytest.raises(GeometryError):
        conv2d_q(t, w, ConvGeometry.for_layer(t, w, pad=1), identity_requant(4, 1))


def test_conv_width_mismatch():
    t = QTensor.zeros(4, 4, 2, 4)
    w = WeightSet.from_array(np.zeros((1, 1, 1, 2), int), 8)
    with pytest.raises(ContractError):
        conv2d_q(t, w, ConvGeometry.for_layer(t, w), QuantParamsInt8(0, [0]))
    w4 = WeightSet.from_array(np.zeros((1, 1, 1, 2), int), 4)
    with pytest.raises(ContractError):
        conv2d_q(t, w4, ConvGeometry.for_layer(t, w4), QuantParamsInt8(0, [0]))
    with pytest.raises(ContractError):
        conv2d_q(t, w4, ConvGeometry.for_layer(t, w4), ThresholdSet(2, [[-1, 0, 1]]))


def test_conv_counts_full_macs():
    rng = np.random.default_rng(5)
    case = _gen.conv_case(rng, 8)
    ctx = ExecContext()
    conv2d_q(case.x, case.w, case.geom, case.rq, ctx=ctx)
    assert ctx.last_counters.macs == case.geom.macs


def test_binary_all_agree_and_disagree(backend):
    rng = np.random.default_rng(7)
    x = _gen.values(rng, 1, (3, 3, 5))
    t = QTensor.from_array(x, 1)
    w = WeightSet.from_array(np.stack([x, -x]), 1)
    g = ConvGeometry.for_layer(t, w)
    n = g.field_size
    ctx = ExecContext(backend=backend)
    # tau = +N fires only for a perfect match, tau = -N fires always
    assert conv2d_binary(t, w, g, [n, n], ctx=ctx).to_array().ravel().tolist() == [1, -1]
    assert conv2d_binary(t, w, g, [-n, -n], ctx=ctx).to_array().ravel().tolist() == [1, 1]
    assert conv2d_binary(t, w, g, [-n, -n + 1], ctx=ctx).to_array().ravel().tolist() == [1, -1]


def test_binary_matches_oracle(backend):
    rng = np.random.default_rng(11)
    for i in range(10):
        case = _gen.conv_case(rng, 1, i, max_dim=10, max_ch=40)
        got = conv2d_binary(case.x, case.w, case.geom, case.rq, ctx=ExecContext(backend=backend))
        assert got == oracle.conv2d_binary_ref(case.x, case.w, case.geom, case.rq)


def test_binary_counts_popcounts():
    t = QTensor.from_array(np.ones((2, 2, 64), int), 1)
    w = WeightSet.from_array(np.ones((3, 1, 1, 64), int), 1)
    ctx = ExecContext()
    conv2d_binary(t, w, ConvGeometry.for_layer(t, w), [0, 0, 0], ctx=ctx)
    assert ctx.last_counters.popcounts == 4 * 3 * 2


def test_binary_rejects_wrong_width():
    t = QTensor.zeros(2, 2, 4, 8)
    w = WeightSet.from_array(np.ones((1, 1, 1, 4), int), 1)
    with pytest.raises(ContractError):
        conv2d_binary(t, w, ConvGeometry.for_layer(t, w), [0])


@pytest.mark.parametrize("bits", [8, 4, 2])
def test_fc_single_neuron_identity(bits):
    t = QTensor.from_array(np.array([[[1]]]), bits)
    w = WeightSet.from_array(np.array([[1]]), bits)
    assert fully_connected(t, w, identity_requant(bits, 1)).to_array().ravel().tolist() == [1]


def test_fc_2x1_iteration_counts():
    rng = np.random.default_rng(0)
    x = _gen.tensor(rng, 8, (1, 1, 16))
    w = WeightSet.from_array(_gen.values(rng, 8, (4, 16)), 8)
    ctx = ExecContext()
    fully_connected(x, w, QuantParamsInt8(0, [0] * 4), ctx=ctx)
    c = ctx.last_counters
    iters = (4 // 2) * (16 // 4)
    assert (c.loads, c.vector_dots, c.macs) == (3 * iters, 2 * iters, 64)


def test_fc_256_to_64_matches_oracle(backend):
    rng = np.random.default_rng(256)
    x = _gen.tensor(rng, 8, (4, 4, 16))
    w = WeightSet.from_array(_gen.values(rng, 8, (64, 256)), 8)
    rq = _gen.requant(rng, 8, 64, 256)
    out = fully_connected(x, w, rq, ctx=ExecContext(backend=backend))
    assert out.shape == (1, 1, 64)
    assert out == oracle.fc_ref(x, w, rq)


def test_fc_length_mismatch():
    x = QTensor.zeros(1, 1, 8, 8)
    w = WeightSet.from_array(np.zeros((2, 9), int), 8)
    with pytest.raises(ContractError):
        fully_connected(x, w, QuantParamsInt8(0, [0, 0]))


@pytest.mark.parametrize("bits", [8, 4, 2])
def test_relu_examples(bits):
    rng = np.random.default_rng(bits)
    lo = -(1 << (bits - 1))
    neg = QTensor.from_array(rng.integers(lo, 0, (3, 3, 5)), bits)
    assert not relu(neg).to_array().any()
    pos = QTensor.from_array(rng.integers(0, -lo, (3, 3, 5)), bits)
    assert relu(pos) == pos
    t = _gen.tensor(rng, bits, (4, 5, 7))
    assert relu(t) == oracle.relu_ref(t)


def test_relu_rejects_int1():
    with pytest.raises(ContractError):
        relu(QTensor.zeros(1, 1, 8, 1))


def test_pool_single_window():
    t = QTensor.from_array(np.array([1, 5, 3, 2]).reshape(2, 2, 1), 8)
    assert maxpool(t, 2, 2, 2).to_array().ravel().tolist() == [5]


@pytest.mark.parametrize("bits", [8, 4, 2, 1])
def test_pool_constant(bits):
    t = QTensor.from_array(np.full((6, 6, 3), -1), bits)
    out = maxpool(t, 3, 3, 2)
    assert out.shape == (2, 2, 3) and (out.to_array() == -1).all()


@pytest.mark.parametrize("bits", [8, 4, 2, 1])
@pytest.mark.parametrize("win", [2, 3])
def test_pool_matches_oracle(bits, win, backend):
    rng = np.random.default_rng(win * 10 + bits)
    t = _gen.tensor(rng, bits, (9, 8, 5))
    for workers in (1, 3):
        got = maxpool(t, win, win, 2, ctx=ExecContext(workers, backend=backend))
        assert got == oracle.pool_ref(t, win, win, 2)


def test_pool_inplace_only_when_requested():
    rng = np.random.default_rng(1)
    t = _gen.tensor(rng, 8, (4, 4, 2))
    before = t.data.copy()
    maxpool(t, 2, 2, 2)
    assert np.array_equal(t.data, before)
    out = maxpool(t, 2, 2, 2, inplace=True)
    assert out == oracle.pool_ref(QTensor(4, 4, 2, 8, before), 2, 2, 2)


def test_pool_degenerate_window():
    t = QTensor.zeros(4, 4, 1, 8)
    with pytest.raises(ContractError):
        maxpool(t, 0, 2, 1)
    with pytest.raises(ContractError):
        maxpool(t, 5, 1, 1)
