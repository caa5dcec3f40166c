"""Distilling an MC-dropout teacher into a single deterministic student.

The student regresses the teacher's mean MC-dropout logits with a squared L2
loss, plus ``lam`` times cross-entropy against ground truth where a label is
available. L2 regularisation of the weights is handled by the optimiser's
weight decay rather than as a loss term.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, InputError, ParameterError
from .mc_dropout import draw_samples, predictive_mean
from .network import (
    LayerSpec,
    MlpNetwork,
    TrainConfig,
    init_weights,
    l2_logit_loss,
    train_network,
)
from .tensor import RngStream, as_tensor, log_softmax, softmax

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DistillRecord:
    x: np.ndarray
    y_onehot: np.ndarray
    z: np.ndarray
    has_ground_truth: bool = True


@dataclass
class DistillDataset:
    """Column-stacked distillation records.

    ``y_onehot`` rows for records without ground truth are all zero.
    """

    x: np.ndarray
    y_onehot: np.ndarray
    z: np.ndarray
    has_gt: np.ndarray

    def __post_init__(self):
        self.x = as_tensor(self.x, "features")
        self.y_onehot = np.asarray(self.y_onehot, dtype=np.float64)
        self.z = as_tensor(self.z, "targets")
        self.has_gt = np.asarray(self.has_gt, dtype=bool)
        n = self.x.shape[0]
        if not (self.y_onehot.shape[0] == self.z.shape[0] == self.has_gt.shape[0] == n):
            raise DimensionError("distillation columns have different lengths")
        if self.y_onehot.shape != self.z.shape:
            raise DimensionError(f"label shape {self.y_onehot.shape} vs target shape {self.z.shape}")
        labelled = self.y_onehot[self.has_gt]
        if labelled.size and not (
            np.all((labelled == 0) | (labelled == 1)) and np.all(labelled.sum(axis=1) == 1)
        ):
            raise InputError("labelled records must carry one-hot labels")

    def __len__(self):
        return self.x.shape[0]

    @property
    def labels(self):
        """Integer labels, -1 where there is no ground truth."""
        lab = np.argmax(self.y_onehot, axis=1)
        return np.where(self.has_gt, lab, -1)

    @classmethod
    def from_records(cls, records: Sequence[DistillRecord]):
        if not records:
            raise InputError("no distillation records")
        return cls(
            np.stack([r.x for r in records]),
            np.stack([r.y_onehot if r.has_ground_truth else np.zeros_like(r.z) for r in records]),
            np.stack([r.z for r in records]),
            np.array([r.has_ground_truth for r in records]),
        )

    def records(self):
        for i in range(len(self)):
            yield DistillRecord(self.x[i], self.y_onehot[i], self.z[i], bool(self.has_gt[i]))


@dataclass
class DistillConfig:
    lam: float = 0.5
    weight_decay: float = 1e-4
    n_samples: int = 100
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    warm_start: bool = False
    student_dropout: bool = False

    def __post_init__(self):
        if self.lam < 0 or self.weight_decay < 0:
            raise ParameterError("lam and weight_decay must be nonnegative")
        if self.n_samples < 1:
            raise ParameterError("n_samples must be at least 1")

    def train_config(self):
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            weight_decay=self.weight_decay,
            dropout=self.student_dropout,
        )


def generate_targets(teacher: MlpNetwork, xs, n_samples: int, rng: RngStream):
    """Mean teacher logits over ``n_samples`` dropout passes, one row per input."""
    if teacher.keep_prob == 1.0:
        warnings.warn("teacher keep_prob is 1: distillation targets are deterministic logits", stacklevel=2)
    return predictive_mean(draw_samples(teacher, xs, n_samples, rng))


def uniform_target(n_classes: int):
    """Zero logits, whose softmax is uniform over ``n_classes``."""
    if n_classes < 2:
        raise ParameterError(f"need at least two classes, got {n_classes}")
    return np.zeros(n_classes)


def uniform_record(x, n_classes: int) -> DistillRecord:
    """A record with no ground truth that asks the student to be maximally unsure."""
    return DistillRecord(np.asarray(x, dtype=np.float64), np.zeros(n_classes), uniform_target(n_classes), False)


def ddn_loss(student_logits, z, y_onehot, has_gt, lam: float):
    """``L2(student, z) + lam * CE(student, y)`` over a batch, with gradient.

    The cross-entropy sums over labelled rows only but is normalised by the
    full batch size, so unlabelled rows contribute exactly nothing to it.
    """
    if lam < 0:
        raise ParameterError("lam must be nonnegative")
    f = as_tensor(student_logits, "student logits")
    loss, grad = l2_logit_loss(f, z)
    has_gt = np.asarray(has_gt, dtype=bool)
    if lam == 0 or not has_gt.any():
        return loss, grad
    y = np.asarray(y_onehot, dtype=np.float64)
    if y.shape != f.shape:
        raise DimensionError(f"labels {y.shape} vs logits {f.shape}")
    n = f.shape[0]
    fg, yg = f[has_gt], y[has_gt]
    ce = -float(np.sum(yg * log_softmax(fg))) / n
    grad = grad.copy()
    grad[has_gt] += lam * (softmax(fg) - yg) / n
    return loss + lam * ce, grad


def train_student(
    teacher: MlpNetwork,
    dataset: DistillDataset,
    config: DistillConfig,
    rng: RngStream,
    architecture: Optional[Sequence[LayerSpec]] = None,
):
    """Train a student with the teacher's architecture on ``dataset``.

    The student starts from a fresh initialisation (or a copy of the teacher
    when ``config.warm_start``) and uses the teacher's keep probability when
    ``config.student_dropout`` is set. Returns ``(student, curve)`` where
    ``curve`` lists ``(epoch, mean_loss, train_accuracy)``.
    """
    if len(dataset) == 0:
        raise InputError("empty distillation dataset")
    if architecture is not None and list(architecture) != list(teacher.layers):
        raise ConfigError("student architecture must equal the teacher architecture")
    if dataset.x.shape[1] != teacher.input_dim or dataset.z.shape[1] != teacher.n_classes:
        raise DimensionError("dataset shape does not match the teacher network")
    if config.warm_start:
        student = teacher.copy()
    else:
        student = init_weights(teacher.layers, rng.child(0), keep_prob=teacher.keep_prob)

    def loss_fn(logits, idx):
        return ddn_loss(logits, dataset.z[idx], dataset.y_onehot[idx], dataset.has_gt[idx], config.lam)

    curve = train_network(student, dataset.x, loss_fn, config.train_config(), rng.child(1), dataset.labels)
    if curve:
        log.info("student final loss %.5f train acc %.4f", curve[-1][1], curve[-1][2])
    return student, curve
