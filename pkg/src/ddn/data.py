"""Synthetic classification datasets and IDX (MNIST-style) ingestion."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError
from .tensor import RngStream

IDX_IMAGES_MAGIC = b"\x00\x00\x08\x03"
IDX_LABELS_MAGIC = b"\x00\x00\x08\x01"

KINDS = ("gaussians", "spirals")


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "gaussians"
    n_train: int = 2000
    n_test: int = 1000
    n_classes: int = 3
    noise: float = 0.5
    spacing: float = 1.0
    seed: int = 7

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown dataset kind {self.kind!r}; expected one of {KINDS}")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("train and test sizes must be positive")
        if self.noise < 0 or self.spacing <= 0:
            raise ConfigError("noise must be >= 0 and spacing > 0")


@dataclass
class Dataset:
    x: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self):
        return self.x.shape[1]


def gaussian_means(n_classes, spacing=1.0):
    """Class centres on a regular polygon whose neighbouring vertices are ``spacing`` apart."""
    if n_classes == 2:
        return np.array([[-spacing / 2, 0.0], [spacing / 2, 0.0]])
    radius = spacing / (2.0 * np.sin(np.pi / n_classes))
    ang = 2.0 * np.pi * np.arange(n_classes) / n_classes
    return radius * np.stack([np.cos(ang), np.sin(ang)], axis=1)


def balanced_labels(n, n_classes):
    counts = [n // n_classes + (c < n % n_classes) for c in range(n_classes)]
    return np.repeat(np.arange(n_classes), counts)


def _sample(spec: DatasetSpec, n: int, rng: RngStream) -> Dataset:
    labels = balanced_labels(n, spec.n_classes)
    gen = rng.generator()
    if spec.kind == "gaussians":
        x = gaussian_means(spec.n_classes, spec.spacing)[labels] + spec.noise * gen.standard_normal((n, 2))
    else:
        t = gen.random(n)
        r = spec.spacing * (0.1 + t)
        ang = 4.0 * t + 2.0 * np.pi * labels / spec.n_classes
        x = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1) + spec.noise * gen.standard_normal((n, 2))
    order = gen.permutation(n)
    return Dataset(x[order], labels[order])


def gen_dataset(spec: DatasetSpec):
    """Deterministic stratified train/test split for ``spec``."""
    root = RngStream(spec.seed, 0x5EED)
    return _sample(spec, spec.n_train, root.child(0)), _sample(spec, spec.n_test, root.child(1))


def bayes_error(n_classes, noise, spacing=1.0, draws=1_000_000, seed=0):
    """Monte Carlo estimate of the Bayes error of the equal-prior Gaussian mixture.

    With isotropic, equal covariances and equal priors the Bayes rule is the
    nearest class centre, so the estimate is the nearest-centre error rate on
    ``draws`` fresh samples.
    """
    means = gaussian_means(n_classes, spacing)
    gen = RngStream(seed, 0xBA7E5).generator()
    labels = gen.integers(0, n_classes, draws)
    pts = means[labels] + noise * gen.standard_normal((draws, 2))
    d2 = ((pts[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    return float(np.mean(np.argmin(d2, axis=1) != labels))


def noise_for_bayes_error(target, n_classes, spacing=1.0, draws=200_000, seed=0, iters=40):
    """Bisect the blob standard deviation so the Bayes error hits ``target``.

    Uses common random numbers so the estimated error is monotone in the noise.
    """
    if not 0 < target < 1 - 1 / n_classes:
        raise ConfigError(f"Bayes error target {target} unreachable with {n_classes} classes")
    means = gaussian_means(n_classes, spacing)
    gen = RngStream(seed, 0x7E57).generator()
    labels = gen.integers(0, n_classes, draws)
    eps = gen.standard_normal((draws, 2))

    def err(sigma):
        pts = means[labels] + sigma * eps
        d2 = ((pts[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
        return np.mean(np.argmin(d2, axis=1) != labels)

    lo, hi = 1e-6, 10.0 * spacing
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if err(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _read_idx(path, magic, ndim, what):
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise FormatError(f"{what} file too short for magic number", offset=len(data))
    if data[:4] != magic:
        raise FormatError(f"{what} file has magic {data[:4].hex()}, expected {magic.hex()}", offset=0)
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise FormatError(f"{what} header truncated", offset=len(data))
    dims = struct.unpack(f">{ndim}I", data[4:header_end])
    expected = header_end + int(np.prod(dims, dtype=np.int64))
    if len(data) < expected:
        raise FormatError(f"{what} data truncated: {len(data)} of {expected} bytes", offset=len(data))
    if len(data) > expected:
        raise FormatError(f"{what} file has {len(data) - expected} trailing bytes", offset=expected)
    return dims, np.frombuffer(data, dtype=np.uint8, offset=header_end).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair; pixels are flattened and scaled to [0, 1]."""
    (n, rows, cols), images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3, "image")
    (n_labels,), labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1, "label")
    if n != n_labels:
        raise DataError(f"{n} images but {n_labels} labels")
    x = images.reshape(n, rows * cols).astype(np.float64) / 255.0
    return Dataset(x, labels.astype(np.int64))
