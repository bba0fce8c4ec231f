import csv
import io
import json

import numpy as np
import pytest

from qnnkit import ContractError, ExecContext, ModelFormatError, QTensor, QuantParamsInt8, WeightSet
from qnnkit.netrunner import (LayerDef, LayerParams, Model, NetworkDef, build_cifar10,
                              count_params_macs, dump_model, load_model, parse_model,
                              random_input, run_inference, save_model)
from qnnkit.netrunner.cli import COLUMNS, main
from qnnkit.netrunner.modelio import HEADER


def tiny_model(h=5, w=4):
    net = NetworkDef((h, w, 1), 8, [LayerDef("conv", 8, 1, (1, 1))])
    return Model(net, [LayerParams(WeightSet.from_array(np.full((1, 1, 1, 1), 3), 8),
                                   QuantParamsInt8(1, [1]))])


def test_single_1x1_conv_counts():
    params, macs = count_params_macs(tiny_model())
    assert (params, macs) == (1, 5 * 4)


def test_tiny_model_roundtrip(tmp_path):
    m = tiny_model()
    path = tmp_path / "tiny.pnn"
    save_model(m, path)
    again = load_model(path)
    assert dump_model(again) == path.read_bytes() == dump_model(m)


def test_cifar_roundtrip_byte_identical():
    blob = dump_model(build_cifar10(3))
    assert dump_model(parse_model(blob)) == blob


def test_truncated_file_names_layer_and_offset():
    blob = dump_model(build_cifar10(0))
    with pytest.raises(ModelFormatError) as err:
        parse_model(blob[:400])
    assert err.value.layer == 0 and err.value.offset is not None
    assert "layer 0" in str(err.value) and "byte offset" in str(err.value)


def test_truncation_anywhere_is_reported():
    blob = dump_model(tiny_model())
    for n in range(len(blob)):
        with pytest.raises(ModelFormatError):
            parse_model(blob[:n])


def test_bad_magic_and_crc():
    blob = bytearray(dump_model(tiny_model()))
    bad = bytes(b"XXXX" + blob[4:])
    with pytest.raises(ModelFormatError, match="magic"):
        parse_model(bad)
    blob[-1] ^= 0x01
    with pytest.raises(ModelFormatError, match="checksum"):
        parse_model(bytes(blob))


def test_invariant_violation_reported():
    blob = bytearray(dump_model(tiny_model()))
    # claim a second layer that is not there
    blob[6] = 2
    with pytest.raises(ModelFormatError, match="layer 1"):
        parse_model(bytes(blob))
    assert HEADER.size == 16


def test_zero_input_is_deterministic():
    m = build_cifar10(0)
    x = QTensor.zeros(*m.net.input_shape, 8)
    a = run_inference(m, x)
    b = run_inference(m, x)
    assert np.array_equal(a.scores, b.scores) and a.scores.shape == (10,)


def test_workers_1_vs_8_same_scores():
    m = build_cifar10(1)
    x = random_input(1)
    one = run_inference(m, x, ExecContext(1))
    with ExecContext(8) as ctx:
        eight = run_inference(m, x, ctx)
    assert np.array_equal(one.scores, eight.scores)
    assert one.counters.macs == eight.counters.macs


def test_input_shape_mismatch():
    m = tiny_model()
    with pytest.raises(ContractError):
        run_inference(m, QTensor.zeros(4, 5, 1, 8))


def test_network_validation():
    with pytest.raises(ContractError):
        NetworkDef((4, 4, 1), 8, [LayerDef("relu", 4)]).shapes()
    with pytest.raises(ContractError):
        LayerDef("softmax", 8)
    with pytest.raises(ContractError):
        Model(NetworkDef((4, 4, 1), 8, [LayerDef("conv", 8, 2, (3, 3))]), [LayerParams()])


def rows_of(capsys, argv):
    assert main(argv) == 0
    return list(csv.DictReader(io.StringIO(capsys.readouterr().out)))


def test_cli_default_row(capsys):
    (row,) = rows_of(capsys, ["--kernel", "conv", "--q", "8", "--tile", "4x2", "--workers", "2"])
    assert list(row) == COLUMNS
    assert row["tile"] == "4x2" and row["workers"] == "2"
    assert int(row["macs"]) == 16 * 16 * 64 * 288
    assert float(row["macs_per_load"]) == pytest.approx(32 / 6, abs=1e-3)


def test_cli_net_worker_range(tmp_path, capsys):
    path = tmp_path / "c10.pnn"
    assert main(["--emit-cifar10", str(path)]) == 0
    capsys.readouterr()
    rows = rows_of(capsys, ["--net", str(path), "--workers", "1..8"])
    assert [int(r["workers"]) for r in rows] == list(range(1, 9))
    assert len({r["macs"] for r in rows}) == 1
    assert len({r["scores_hash"] for r in rows}) == 1


def test_cli_tile_sweep(capsys):
    rows = rows_of(capsys, ["--kernel", "conv", "--sweep", "tiles"])
    assert sorted(r["tile"] for r in rows) == sorted(["1x2", "2x1", "2x2", "4x2", "2x4", "4x4"])
    assert len({r["scores_hash"] for r in rows}) == 1


def test_cli_env_default_and_flag_override(capsys, monkeypatch):
    monkeypatch.setenv("QNNKIT_WORKERS", "3")
    (row,) = rows_of(capsys, ["--kernel", "relu"])
    assert row["workers"] == "3"
    (row,) = rows_of(capsys, ["--kernel", "relu", "--workers", "2"])
    assert row["workers"] == "2"


def test_cli_json_to_file(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["--kernel", "fc", "--sweep", "widths", "--format", "json", "--out", str(out)]) == 0
    rows = json.loads(out.read_text())
    assert [r["Q"] for r in rows] == [8, 4, 2]
    assert set(rows[0]) == set(COLUMNS)


def test_cli_errors(tmp_path, capsys):
    assert main(["--net", str(tmp_path / "missing.pnn")]) == 2
    assert main(["--kernel", "fc", "--sweep", "tiles"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["--no-such-flag"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit):
        main(["--workers", "0"])
