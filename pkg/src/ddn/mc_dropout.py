"""Monte Carlo dropout: repeated stochastic passes and their moments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .network import MlpNetwork, forward
from .tensor import RngStream, check_finite, softmax


@dataclass(frozen=True)
class SampleSet:
    """Logits from ``M`` train-mode passes, shape ``(M, batch, C)``."""

    logits: np.ndarray
    keep_prob: float
    stream_ids: tuple

    def __post_init__(self):
        if self.logits.ndim != 3 or self.logits.shape[0] < 1:
            raise ParameterError(f"sample logits must have shape (M>=1, batch, C), got {self.logits.shape}")
        check_finite(self.logits, "sample logits")

    @property
    def sample_count(self):
        return self.logits.shape[0]


def draw_samples(net: MlpNetwork, x, n_samples: int, rng: RngStream) -> SampleSet:
    """``n_samples`` dropout passes; pass ``m`` uses stream ``rng.child(m)``."""
    if n_samples < 1:
        raise ParameterError(f"need at least one MC sample, got {n_samples}")
    streams = [rng.child(m) for m in range(n_samples)]
    logits = np.stack([forward(net, x, "train", s)[0] for s in streams])
    return SampleSet(logits, net.keep_prob, tuple(s.stream_id for s in streams))


def predictive_mean(samples: SampleSet):
    return samples.logits.mean(axis=0)


def predictive_variance(samples: SampleSet):
    """Per-class and total (trace) variance over the sample axis.

    Uses the one-pass ``E[y^2] - E[y]^2`` form and clamps tiny negative
    results from cancellation to zero. ``total`` is the per-row sum of
    ``per_class``.
    """
    s = samples.logits
    mean = s.mean(axis=0)
    per_class = np.maximum((s * s).mean(axis=0) - mean * mean, 0.0)
    total = np.maximum(np.einsum("mbc,mbc->b", s, s) / s.shape[0] - np.einsum("bc,bc->b", mean, mean), 0.0)
    return per_class, total


def ensemble_probabilities(samples: SampleSet):
    """Average of the per-sample softmax distributions (not softmax of the mean)."""
    return softmax(samples.logits).mean(axis=0)
