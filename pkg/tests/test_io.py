import numpy as np
import pytest

from ddn import io as dio
from ddn.calibration import Predictions, evaluate
from ddn.data import Dataset
from ddn.distill import DistillDataset, uniform_record
from ddn.errors import FormatError, SchemaError
from ddn.network import forward, init_weights, mlp_specs, one_hot
from ddn.tensor import RngStream

import oracles


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    net = init_weights(mlp_specs([4, 9, 7, 3]), RngStream(5), keep_prob=0.8)
    for b in net.biases:
        b += np.random.default_rng(0).normal(size=b.shape)
    dio.save_checkpoint(tmp_path / "net.json", net, {"seed": 5})
    back, meta = dio.load_checkpoint(tmp_path / "net.json")
    x = np.random.default_rng(1).standard_normal((20, 4))
    assert forward(back, x)[0].tobytes() == forward(net, x)[0].tobytes()
    assert back.keep_prob == 0.8 and back.layers == net.layers
    assert meta == {"seed": 5}


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(FormatError):
        dio.load_checkpoint(tmp_path / "bad.json")
    (tmp_path / "v.json").write_text('{"format_version": 99}')
    with pytest.raises(FormatError):
        dio.load_checkpoint(tmp_path / "v.json")


def test_dataset_csv_roundtrip(tmp_path):
    ds = Dataset(np.random.default_rng(2).standard_normal((15, 3)), np.arange(15) % 4)
    dio.write_dataset_csv(tmp_path / "d.csv", ds)
    assert (tmp_path / "d.csv").read_text().splitlines()[0] == "f0,f1,f2,label"
    back = dio.read_dataset_csv(tmp_path / "d.csv")
    assert back.x.tobytes() == ds.x.tobytes()
    assert back.labels.tolist() == ds.labels.tolist()


def test_dataset_csv_header_mismatch(tmp_path):
    (tmp_path / "d.csv").write_text("a,b,label\n1,2,0\n")
    with pytest.raises(SchemaError):
        dio.read_dataset_csv(tmp_path / "d.csv")


def test_distill_csv_roundtrip(tmp_path):
    gen = np.random.default_rng(3)
    x = gen.standard_normal((6, 2))
    ds = DistillDataset(x, one_hot(gen.integers(0, 3, 6), 3), gen.standard_normal((6, 3)), np.ones(6, bool))
    recs = list(ds.records()) + [uniform_record([0.1, 0.2], 3)]
    ds = DistillDataset.from_records(recs)
    dio.write_distill_csv(tmp_path / "t.csv", ds)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "f0,f1,label,has_gt,z0,z1,z2"
    assert lines[-1].split(",")[2:4] == ["-1", "0"]
    back = dio.read_distill_csv(tmp_path / "t.csv")
    for a, b in [(back.x, ds.x), (back.z, ds.z), (back.y_onehot, ds.y_onehot)]:
        assert a.tobytes() == b.tobytes()
    assert back.has_gt.tolist() == ds.has_gt.tolist()


def test_reliability_csv(tmp_path):
    gen = np.random.default_rng(4)
    rep = evaluate(Predictions(*oracles.random_predictions(gen, 50, 3)), 10)
    dio.emit_reliability_csv(tmp_path / "r.csv", rep)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "bin_index,bin_lo,bin_hi,count,conf,freq,gap"
    assert len(lines) == 11
    # confidence >= 1/3 so the lowest bins are empty: blank conf/freq/gap
    assert lines[1].endswith(",0,,,")
    assert dio.read_reliability_csv(tmp_path / "r.csv") == rep.bins


def test_reliability_csv_perfect_calibration(tmp_path):
    probs = np.tile([0.75, 0.25], (4, 1))
    rep = evaluate(Predictions(probs, [0, 0, 0, 1]), 10)
    dio.emit_reliability_csv(tmp_path / "r.csv", rep)
    gaps = [b.gap for b in dio.read_reliability_csv(tmp_path / "r.csv") if b.count]
    assert gaps == [0.0]


def test_reliability_header_mismatch(tmp_path):
    (tmp_path / "r.csv").write_text("bin,lo,hi\n")
    with pytest.raises(SchemaError):
        dio.read_reliability_csv(tmp_path / "r.csv")


def test_risk_coverage_csv_roundtrip(tmp_path):
    gen = np.random.default_rng(5)
    rep = evaluate(Predictions(*oracles.random_predictions(gen, 80, 4)), 5)
    dio.emit_risk_coverage_csv(tmp_path / "rc.csv", rep.risk_coverage)
    assert (tmp_path / "rc.csv").read_text().startswith("threshold,coverage,risk,covered_count\n")
    assert dio.read_risk_coverage_csv(tmp_path / "rc.csv") == rep.risk_coverage


def test_metrics_csv_roundtrip(tmp_path):
    gen = np.random.default_rng(6)
    reps = {name: evaluate(Predictions(*oracles.random_predictions(gen, 40, 3)), 10) for name in ("baseline", "ddn")}
    dio.write_metrics_csv(tmp_path / "m.csv", reps)
    back = dio.read_metrics_csv(tmp_path / "m.csv")
    assert list(back) == ["baseline", "ddn"]
    assert back["ddn"]["msce"] == reps["ddn"].msce
    assert back["ddn"]["msce_x100"] == 100 * reps["ddn"].msce
