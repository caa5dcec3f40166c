"""Experiment configuration and the staged teacher -> targets -> student -> evaluation run.

Every stage reads its inputs from and writes its outputs to one run
directory, so stages can be run one at a time from the CLI or all together
with :func:`run_pipeline`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import platform
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from . import io as dio
from .calibration import Predictions, default_thresholds, evaluate
from .data import DatasetSpec, bayes_error, gen_dataset, noise_for_bayes_error
from .distill import DistillConfig, DistillDataset, generate_targets, train_student
from .errors import ConfigError, DDNError
from .mc_dropout import draw_samples, ensemble_probabilities
from .network import TrainConfig, init_weights, mlp_specs, one_hot, predict_logits, train_classifier
from .tensor import RngStream, softmax

log = logging.getLogger(__name__)

# stream ids under the run seed
TEACHER_INIT, TEACHER_TRAIN, TARGET_SAMPLES, STUDENT, EVAL_SAMPLES = 1, 2, 3, 4, 5

TRAIN_CSV, TEST_CSV, DATASET_JSON = "train.csv", "test.csv", "dataset.json"
TEACHER_CKPT, STUDENT_CKPT = "teacher.json", "student.json"
TARGETS_CSV = "distill_targets.csv"
METRICS_CSV, REPORT_TXT, MANIFEST = "metrics.csv", "report.txt", "manifest.json"


@dataclass
class DatasetConfig:
    kind: str = "gaussians"
    n_train: int = 2000
    n_test: int = 1000
    n_classes: int = 3
    noise: Optional[float] = None  # None: tune to bayes_error_target
    bayes_error_target: float = 0.12
    spacing: float = 1.0
    seed: Optional[int] = None  # None: use the run seed


@dataclass
class ArchitectureConfig:
    hidden: list = field(default_factory=lambda: [32, 32])


@dataclass
class TeacherConfig:
    keep_prob: float = 0.8
    learning_rate: float = 0.01
    epochs: int = 200
    batch_size: int = 64
    momentum: float = 0.9
    weight_decay: float = 1e-4


@dataclass
class StudentConfig:
    samples: int = 100
    lam: float = 0.5
    warm_start: bool = False
    student_dropout: bool = False


@dataclass
class EvaluationConfig:
    bins: int = 10
    thresholds: int = 101


@dataclass
class ExperimentConfig:
    seed: int = 7
    out: str = "runs/default"
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    distill: StudentConfig = field(default_factory=StudentConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc or {})
        sections = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in doc.items():
            if key not in sections:
                raise ConfigError(f"unknown config key {key!r}")
            sub = _SECTIONS.get(key)
            if sub is None:
                kwargs[key] = value
                continue
            if not isinstance(value, dict):
                raise ConfigError(f"config section {key!r} must be a mapping")
            known = {f.name for f in dataclasses.fields(sub)}
            bad = set(value) - known
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
            kwargs[key] = sub(**value)
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            doc = yaml.safe_load(Path(path).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(doc)

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def validate(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        t = self.teacher
        if not 0 < t.keep_prob <= 1:
            raise ConfigError("teacher.keep_prob must lie in (0, 1]")
        if t.epochs < 0 or t.batch_size < 1 or t.learning_rate < 0:
            raise ConfigError("teacher epochs/batch_size/learning_rate out of range")
        if not 0 <= t.momentum < 1 or t.weight_decay < 0:
            raise ConfigError("teacher momentum/weight_decay out of range")
        if self.distill.samples < 1 or self.distill.lam < 0:
            raise ConfigError("distill.samples must be >= 1 and distill.lam >= 0")
        if self.evaluation.bins < 1 or self.evaluation.thresholds < 2:
            raise ConfigError("evaluation.bins >= 1 and evaluation.thresholds >= 2 required")
        if any(int(h) < 1 for h in self.architecture.hidden):
            raise ConfigError("hidden layer sizes must be positive")
        self.dataset_spec(0.5)  # validates the dataset section

    def dataset_seed(self):
        return self.seed if self.dataset.seed is None else self.dataset.seed

    def dataset_spec(self, noise):
        d = self.dataset
        return DatasetSpec(d.kind, d.n_train, d.n_test, d.n_classes, noise, d.spacing, self.dataset_seed())

    def train_config(self):
        t = self.teacher
        return TrainConfig(t.epochs, t.batch_size, t.learning_rate, t.momentum, t.weight_decay, dropout=True)

    def distill_config(self):
        t, d = self.teacher, self.distill
        return DistillConfig(
            lam=d.lam, weight_decay=t.weight_decay, n_samples=d.samples, epochs=t.epochs,
            batch_size=t.batch_size, learning_rate=t.learning_rate, momentum=t.momentum,
            warm_start=d.warm_start, student_dropout=d.student_dropout,
        )

    def stream(self, stream_id):
        return RngStream(self.seed, stream_id)


_SECTIONS = {
    "dataset": DatasetConfig,
    "architecture": ArchitectureConfig,
    "teacher": TeacherConfig,
    "distill": StudentConfig,
    "evaluation": EvaluationConfig,
}


class StageError(DDNError):
    def __init__(self, stage, cause):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)


@lru_cache(maxsize=32)
def _tuned_noise(target, n_classes, spacing):
    return noise_for_bayes_error(target, n_classes, spacing)


def resolve_noise(cfg: ExperimentConfig):
    d = cfg.dataset
    if d.noise is not None:
        return float(d.noise)
    if d.kind != "gaussians":
        raise ConfigError("noise: auto (null) is only supported for gaussians")
    return _tuned_noise(d.bayes_error_target, d.n_classes, d.spacing)


def _out(cfg, out):
    return Path(out if out is not None else cfg.out)


def stage_gen_data(cfg: ExperimentConfig, out=None):
    out = _out(cfg, out)
    noise = resolve_noise(cfg)
    spec = cfg.dataset_spec(noise)
    train, test = gen_dataset(spec)
    dio.write_dataset_csv(out / TRAIN_CSV, train)
    dio.write_dataset_csv(out / TEST_CSV, test)
    info = dataclasses.asdict(spec)
    info["bayes_error"] = bayes_error(spec.n_classes, noise, spec.spacing) if spec.kind == "gaussians" else None
    (out / DATASET_JSON).write_text(json.dumps(info, indent=1, sort_keys=True) + "\n")
    return train, test


def stage_train_teacher(cfg: ExperimentConfig, out=None):
    out = _out(cfg, out)
    train = dio.read_dataset_csv(out / TRAIN_CSV)
    n_classes = cfg.dataset.n_classes
    specs = mlp_specs([train.n_features, *cfg.architecture.hidden, n_classes])
    teacher = init_weights(specs, cfg.stream(TEACHER_INIT), keep_prob=cfg.teacher.keep_prob)
    curve = train_classifier(teacher, train.x, train.labels, cfg.train_config(), cfg.stream(TEACHER_TRAIN))
    dio.write_curve_csv(out / "teacher_curve.csv", curve)
    final = curve[-1][1] if curve else None
    dio.save_checkpoint(out / TEACHER_CKPT, teacher, {"seed": cfg.seed, "epochs": cfg.teacher.epochs, "final_loss": final})
    return teacher, curve


def stage_sample_targets(cfg: ExperimentConfig, out=None):
    out = _out(cfg, out)
    teacher, _ = dio.load_checkpoint(out / TEACHER_CKPT)
    train = dio.read_dataset_csv(out / TRAIN_CSV)
    z = generate_targets(teacher, train.x, cfg.distill.samples, cfg.stream(TARGET_SAMPLES))
    ds = DistillDataset(train.x, one_hot(train.labels, teacher.n_classes), z, np.ones(len(train), dtype=bool))
    dio.write_distill_csv(out / TARGETS_CSV, ds)
    return ds


def stage_train_student(cfg: ExperimentConfig, out=None):
    out = _out(cfg, out)
    teacher, _ = dio.load_checkpoint(out / TEACHER_CKPT)
    ds = dio.read_distill_csv(out / TARGETS_CSV)
    student, curve = train_student(teacher, ds, cfg.distill_config(), cfg.stream(STUDENT))
    dio.write_curve_csv(out / "student_curve.csv", curve)
    final = curve[-1][1] if curve else None
    dio.save_checkpoint(out / STUDENT_CKPT, student, {"seed": cfg.seed, "epochs": cfg.teacher.epochs, "final_loss": final})
    return student, curve


def system_names(cfg: ExperimentConfig):
    return ["baseline", f"mc{cfg.distill.samples}", "ddn"]


def stage_evaluate(cfg: ExperimentConfig, out=None):
    """Score baseline (teacher, no dropout), MC ensemble and DDN on the test split."""
    out = _out(cfg, out)
    test = dio.read_dataset_csv(out / TEST_CSV)
    teacher, _ = dio.load_checkpoint(out / TEACHER_CKPT)
    student, _ = dio.load_checkpoint(out / STUDENT_CKPT)
    samples = draw_samples(teacher, test.x, cfg.distill.samples, cfg.stream(EVAL_SAMPLES))
    probs = {
        "baseline": softmax(predict_logits(teacher, test.x)),
        f"mc{cfg.distill.samples}": ensemble_probabilities(samples),
        "ddn": softmax(predict_logits(student, test.x)),
    }
    thresholds = default_thresholds(cfg.evaluation.thresholds)
    reports = {}
    for name, p in probs.items():
        rep = evaluate(Predictions(p, test.labels), cfg.evaluation.bins, thresholds)
        dio.emit_reliability_csv(out / f"reliability_{name}.csv", rep)
        dio.emit_risk_coverage_csv(out / f"risk_coverage_{name}.csv", rep.risk_coverage)
        reports[name] = rep
    dio.write_metrics_csv(out / METRICS_CSV, reports)
    return reports


def format_report(metrics: dict, bayes=None):
    cols = ["accuracy", "risk", "msce", "mce", "nll", "nll_true", "entropy", "frac_conf_gt_0.95", "msce_x100", "mce_x100"]
    width = max(len(c) for c in cols) + 2
    names = list(metrics)
    lines = ["metric".ljust(width) + "".join(n.rjust(12) for n in names)]
    for c in cols:
        lines.append(c.ljust(width) + "".join(f"{metrics[n][c]:12.4f}" for n in names))
    if bayes is not None:
        lines.append(f"bayes error (accuracy ceiling {1 - bayes:.4f}): {bayes:.4f}")
    base, ddn = metrics.get("baseline"), metrics.get("ddn")
    if base and ddn:
        lines.append(f"entropy baseline < ddn: {base['entropy'] < ddn['entropy']}")
    return "\n".join(lines) + "\n"


def stage_report(cfg: ExperimentConfig, out=None):
    out = _out(cfg, out)
    metrics = dio.read_metrics_csv(out / METRICS_CSV)
    bayes = None
    if (out / DATASET_JSON).exists():
        bayes = json.loads((out / DATASET_JSON).read_text()).get("bayes_error")
    text = format_report(metrics, bayes)
    (out / REPORT_TXT).write_text(text)
    write_manifest(cfg, out)
    return text


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(cfg: ExperimentConfig, out, status="complete", failed_stage=None):
    out = Path(out)
    artifacts = {
        p.name: _sha256(p) for p in sorted(out.iterdir()) if p.is_file() and p.name != MANIFEST
    }
    doc = {
        "status": status,
        "failed_stage": failed_stage,
        "schema_version": dio.SCHEMA_VERSION,
        "config_sha256": cfg.digest(),
        "config": cfg.to_dict(),
        "seeds": {
            "run": cfg.seed,
            "dataset": cfg.dataset_seed(),
            "streams": {
                "teacher_init": TEACHER_INIT, "teacher_train": TEACHER_TRAIN,
                "target_samples": TARGET_SAMPLES, "student": STUDENT, "eval_samples": EVAL_SAMPLES,
            },
        },
        "versions": {"ddn": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "artifacts": artifacts,
    }
    (out / MANIFEST).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return doc


STAGES = [
    ("gen-data", stage_gen_data),
    ("train-teacher", stage_train_teacher),
    ("sample-targets", stage_sample_targets),
    ("train-student", stage_train_student),
    ("evaluate", stage_evaluate),
    ("report", stage_report),
]


def run_stage(name, cfg: ExperimentConfig, out=None):
    out = _out(cfg, out)
    out.mkdir(parents=True, exist_ok=True)
    fn = dict(STAGES)[name]
    try:
        return fn(cfg, out)
    except Exception as exc:  # noqa: BLE001 - any failure is reported with its stage
        try:
            write_manifest(cfg, out, status="failed", failed_stage=name)
        except OSError:
            pass
        raise StageError(name, exc) from exc


def run_pipeline(cfg: ExperimentConfig, out=None):
    """Run every stage in order; returns the evaluation reports keyed by system."""
    out = _out(cfg, out)
    reports = None
    for name, _ in STAGES:
        log.info("stage %s", name)
        result = run_stage(name, cfg, out)
        if name == "evaluate":
            reports = result
    return reports
