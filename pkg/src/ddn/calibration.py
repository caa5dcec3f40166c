"""Binned calibration metrics, likelihood/entropy scores and risk-coverage curves.

Confidences are binned into ``K`` equal-width half-open intervals
``((k-1)/K, k/K]``, indexed ``k = 1..K``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InputError, ParameterError

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class PredictionRecord:
    probs: np.ndarray
    true_class: int

    @property
    def predicted_class(self):
        return int(np.argmax(self.probs))

    @property
    def confidence(self):
        return float(np.max(self.probs))


class Predictions:
    """A batch of predictive distributions with their true labels."""

    def __init__(self, probs, labels):
        probs = np.asarray(probs, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if probs.ndim != 2 or probs.shape[0] == 0:
            raise InputError(f"need a non-empty (N, C) probability matrix, got shape {probs.shape}")
        if labels.shape != (probs.shape[0],):
            raise InputError(f"{labels.shape[0]} labels for {probs.shape[0]} predictions")
        if not np.all(np.isfinite(probs)) or probs.min() < 0 or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
            raise InputError("probability rows must lie on the simplex")
        if labels.min() < 0 or labels.max() >= probs.shape[1]:
            raise InputError("true class outside [0, C)")
        self.probs = probs
        self.labels = labels
        self.predicted = np.argmax(probs, axis=1)
        self.confidence = probs[np.arange(len(labels)), self.predicted]
        self.correct = self.predicted == labels

    def __len__(self):
        return len(self.labels)

    @property
    def n_classes(self):
        return self.probs.shape[1]

    @classmethod
    def from_records(cls, records: Sequence[PredictionRecord]):
        if not records:
            raise InputError("no prediction records")
        return cls(np.stack([r.probs for r in records]), [r.true_class for r in records])

    def records(self):
        return [PredictionRecord(p, int(y)) for p, y in zip(self.probs, self.labels)]


@dataclass(frozen=True)
class BinStats:
    index: int
    lo: float
    hi: float
    count: int
    freq: Optional[float]
    conf: Optional[float]

    @property
    def gap(self):
        if self.count == 0:
            return None
        return abs(self.freq - self.conf)


@dataclass(frozen=True)
class RiskCoveragePoint:
    threshold: float
    coverage: float
    risk: float
    covered_count: int

    @property
    def defined(self):
        return self.covered_count > 0


@dataclass
class CalibrationReport:
    bins: list
    msce: float
    mce: float
    nll: float
    nll_true: float
    mean_entropy: float
    accuracy: float
    risk: float
    frac_over_95: float
    n_bins: int
    n: int
    risk_coverage: list = field(default_factory=list)

    def scalars(self):
        return {
            "msce": self.msce,
            "mce": self.mce,
            "nll": self.nll,
            "nll_true": self.nll_true,
            "entropy": self.mean_entropy,
            "accuracy": self.accuracy,
            "risk": self.risk,
            "frac_conf_gt_0.95": self.frac_over_95,
        }


def bin_index(confidence, n_bins: int):
    """1-based bin index of each confidence, ``ceil(c * K)`` clamped to ``[1, K]``.

    The product ``c * K`` can round across a boundary, so the result is
    nudged until ``(k-1)/K < c <= k/K`` holds with the boundaries computed
    as ``k / K``.
    """
    if n_bins < 1:
        raise ParameterError(f"need at least one bin, got {n_bins}")
    c = np.asarray(confidence, dtype=np.float64)
    k = np.clip(np.ceil(c * n_bins).astype(np.int64), 1, n_bins)
    too_high = (k > 1) & (c <= (k - 1) / n_bins)
    k = np.where(too_high, k - 1, k)
    too_low = (k < n_bins) & (c > k / n_bins)
    return np.where(too_low, k + 1, k)


def bin_predictions(preds: Predictions, n_bins: int = 10):
    if len(preds) == 0:
        raise InputError("no predictions to bin")
    k = bin_index(preds.confidence, n_bins)
    counts = np.bincount(k, minlength=n_bins + 1)[1:]
    hits = np.bincount(k, weights=preds.correct.astype(np.float64), minlength=n_bins + 1)[1:]
    conf_sum = np.bincount(k, weights=preds.confidence, minlength=n_bins + 1)[1:]
    bins = []
    for i in range(n_bins):
        n_i = int(counts[i])
        freq = float(hits[i] / n_i) if n_i else None
        conf = float(conf_sum[i] / n_i) if n_i else None
        bins.append(BinStats(i + 1, i / n_bins, (i + 1) / n_bins, n_i, freq, conf))
    return bins


def msce(bins, n: int):
    """Count-weighted mean of squared per-bin ``freq - conf`` gaps."""
    return float(sum(b.count / n * (b.freq - b.conf) ** 2 for b in bins if b.count))


def mce(bins):
    gaps = [b.gap for b in bins if b.count]
    if not gaps:
        raise InputError("every bin is empty")
    return float(max(gaps))


def nll(preds: Predictions):
    """Mean negative log of the *predicted*-class probability."""
    return float(-np.mean(np.log(np.maximum(preds.confidence, PROB_FLOOR))))


def nll_true(preds: Predictions):
    """Mean negative log of the probability given to the true class."""
    p = preds.probs[np.arange(len(preds)), preds.labels]
    return float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))


def mean_entropy(preds: Predictions):
    p = preds.probs
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    return float(-plogp.sum(axis=1).mean())


def accuracy(preds: Predictions):
    return int(preds.correct.sum()) / len(preds)


def default_thresholds(n_points: int = 101):
    return [i / (n_points - 1) for i in range(n_points)]


def risk_coverage_curve(preds: Predictions, thresholds=None):
    """Coverage and error rate among predictions with confidence ``>= t``.

    Risk is reported as 0 when nothing is covered; ``covered_count`` (and
    :attr:`RiskCoveragePoint.defined`) flags that case.
    """
    if thresholds is None:
        thresholds = default_thresholds()
    t = np.asarray(thresholds, dtype=np.float64)
    if t.size and (t.min() < 0 or t.max() > 1):
        raise ParameterError("thresholds must lie in [0, 1]")
    n = len(preds)
    order = np.argsort(preds.confidence, kind="stable")
    conf_sorted = preds.confidence[order]
    # correct_tail[j] = number of correct predictions among sorted positions >= j
    correct_tail = np.concatenate([np.cumsum(preds.correct[order][::-1])[::-1], [0]])
    points = []
    for thr in t:
        start = int(np.searchsorted(conf_sorted, thr, side="left"))
        count = n - start
        if count:
            risk = 1.0 - int(correct_tail[start]) / count
        else:
            risk = 0.0
        points.append(RiskCoveragePoint(float(thr), count / n, risk, count))
    return points


def evaluate(preds: Predictions, n_bins: int = 10, thresholds=None) -> CalibrationReport:
    bins = bin_predictions(preds, n_bins)
    acc = accuracy(preds)
    return CalibrationReport(
        bins=bins,
        msce=msce(bins, len(preds)),
        mce=mce(bins),
        nll=nll(preds),
        nll_true=nll_true(preds),
        mean_entropy=mean_entropy(preds),
        accuracy=acc,
        risk=1.0 - acc,
        frac_over_95=float(np.mean(preds.confidence > 0.95)),
        n_bins=n_bins,
        n=len(preds),
        risk_coverage=risk_coverage_curve(preds, thresholds),
    )
