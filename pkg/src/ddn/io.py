"""On-disk formats: CSV datasets, targets and reports; JSON checkpoints.

Floats are written with ``repr`` (shortest round-tripping decimal), so every
file reloads bit-exactly and identical runs produce identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .calibration import BinStats, CalibrationReport, RiskCoveragePoint
from .data import Dataset
from .distill import DistillDataset
from .errors import FormatError, SchemaError
from .network import LayerSpec, MlpNetwork

SCHEMA_VERSION = 1
CHECKPOINT_VERSION = 1

RELIABILITY_HEADER = ["bin_index", "bin_lo", "bin_hi", "count", "conf", "freq", "gap"]
RISK_COVERAGE_HEADER = ["threshold", "coverage", "risk", "covered_count"]
CURVE_HEADER = ["epoch", "loss", "accuracy"]
METRICS_HEADER = [
    "system", "n", "accuracy", "risk", "msce", "mce", "nll", "nll_true", "entropy",
    "frac_conf_gt_0.95", "msce_x100", "mce_x100",
]


def fmt(v):
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _read_rows(path, expected_header=None):
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if expected_header is not None and header != list(expected_header):
            raise SchemaError(f"{path}: header {header} does not match {list(expected_header)}")
        return header, list(reader)


def feature_header(n_features):
    return [f"f{i}" for i in range(n_features)]


def write_dataset_csv(path, ds: Dataset):
    header = feature_header(ds.n_features) + ["label"]
    return _write_rows(path, header, ([*row, int(lab)] for row, lab in zip(ds.x, ds.labels)))


def read_dataset_csv(path) -> Dataset:
    header, rows = _read_rows(path)
    d = len(header) - 1
    if d < 1 or header != feature_header(d) + ["label"]:
        raise SchemaError(f"{path}: unexpected dataset header {header}")
    arr = np.array([[float(v) for v in r[:d]] for r in rows]).reshape(len(rows), d)
    labels = np.array([int(r[d]) for r in rows], dtype=np.int64)
    return Dataset(arr, labels)


def distill_header(n_features, n_classes):
    return feature_header(n_features) + ["label", "has_gt"] + [f"z{i}" for i in range(n_classes)]


def write_distill_csv(path, ds: DistillDataset):
    header = distill_header(ds.x.shape[1], ds.z.shape[1])
    labels = ds.labels
    rows = ([*x, int(lab), bool(g), *z] for x, lab, g, z in zip(ds.x, labels, ds.has_gt, ds.z))
    return _write_rows(path, header, rows)


def read_distill_csv(path) -> DistillDataset:
    """Unlabelled records carry ``label = -1`` and ``has_gt = 0``."""
    header, rows = _read_rows(path)
    try:
        d = header.index("label")
    except ValueError:
        raise SchemaError(f"{path}: no label column") from None
    c = len(header) - d - 2
    if c < 1 or header != distill_header(d, c):
        raise SchemaError(f"{path}: unexpected distillation header {header}")
    x = np.array([[float(v) for v in r[:d]] for r in rows]).reshape(len(rows), d)
    labels = np.array([int(r[d]) for r in rows], dtype=np.int64)
    has_gt = np.array([r[d + 1] == "1" for r in rows], dtype=bool)
    z = np.array([[float(v) for v in r[d + 2:]] for r in rows]).reshape(len(rows), c)
    y = np.zeros_like(z)
    y[has_gt, labels[has_gt]] = 1.0
    return DistillDataset(x, y, z, has_gt)


def emit_reliability_csv(path, report: CalibrationReport):
    rows = ([b.index, b.lo, b.hi, b.count, b.conf, b.freq, b.gap] for b in report.bins)
    return _write_rows(path, RELIABILITY_HEADER, rows)


def read_reliability_csv(path):
    _, rows = _read_rows(path, RELIABILITY_HEADER)

    def opt(v):
        return float(v) if v != "" else None

    return [
        BinStats(index=int(r[0]), lo=float(r[1]), hi=float(r[2]), count=int(r[3]), conf=opt(r[4]), freq=opt(r[5]))
        for r in rows
    ]


def emit_risk_coverage_csv(path, points):
    rows = ([p.threshold, p.coverage, p.risk, p.covered_count] for p in points)
    return _write_rows(path, RISK_COVERAGE_HEADER, rows)


def read_risk_coverage_csv(path):
    _, rows = _read_rows(path, RISK_COVERAGE_HEADER)
    return [RiskCoveragePoint(float(r[0]), float(r[1]), float(r[2]), int(r[3])) for r in rows]


def write_curve_csv(path, curve):
    return _write_rows(path, CURVE_HEADER, curve)


def write_metrics_csv(path, reports: dict):
    rows = []
    for name, r in reports.items():
        rows.append([
            name, r.n, r.accuracy, r.risk, r.msce, r.mce, r.nll, r.nll_true, r.mean_entropy,
            r.frac_over_95, 100 * r.msce, 100 * r.mce,
        ])
    return _write_rows(path, METRICS_HEADER, rows)


def read_metrics_csv(path):
    _, rows = _read_rows(path, METRICS_HEADER)
    out = {}
    for r in rows:
        out[r[0]] = {k: (int(v) if k == "n" else float(v)) for k, v in zip(METRICS_HEADER[1:], r[1:])}
    return out


def save_checkpoint(path, net: MlpNetwork, metadata=None):
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "layers": [
            {"input_dim": s.input_dim, "output_dim": s.output_dim, "activation": s.activation}
            for s in net.layers
        ],
        "keep_prob": float(net.keep_prob),
        "weights": [[float(v) for v in w.ravel()] for w in net.weights],
        "biases": [[float(v) for v in b] for b in net.biases],
        "metadata": metadata or {},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def load_checkpoint(path):
    """Returns ``(network, metadata)``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a valid checkpoint ({exc})", offset=exc.pos) from None
    if doc.get("format_version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {doc.get('format_version')!r}")
    try:
        specs = [LayerSpec(l["input_dim"], l["output_dim"], l["activation"]) for l in doc["layers"]]
        weights = [np.array(w, dtype=np.float64).reshape(s.input_dim, s.output_dim) for w, s in zip(doc["weights"], specs)]
        biases = [np.array(b, dtype=np.float64) for b in doc["biases"]]
        net = MlpNetwork(specs, weights, biases, float(doc["keep_prob"]))
    except (KeyError, ValueError, TypeError) as exc:
        raise FormatError(f"{path}: malformed checkpoint ({exc})") from None
    return net, doc.get("metadata", {})
