"""Multilayer perceptron with Bernoulli dropout and exact backpropagation.

Dropout masks are *not* rescaled during training. ``keep_prob`` is the
probability of retaining a hidden unit, and evaluation mode simply uses every
unit (keep probability 1). Activations at evaluation time are therefore
larger than their training-time expectation by a factor ``1 / keep_prob`` per
hidden layer; that is the convention the teacher/baseline comparison relies on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, InputError, NumericError, ParameterError, StateError
from .tensor import RngStream, as_tensor, bernoulli_mask, check_finite, log_softmax, softmax

log = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str = "relu"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigError(f"layer dimensions must be positive: {self}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")


def mlp_specs(dims: Sequence[int]) -> list[LayerSpec]:
    """Chain ``dims = [d_in, h1, ..., C]`` into ReLU layers ending in logits."""
    if len(dims) < 2:
        raise ConfigError("need at least input and output dimensions")
    n = len(dims) - 1
    return [
        LayerSpec(int(dims[i]), int(dims[i + 1]), "identity" if i == n - 1 else "relu")
        for i in range(n)
    ]


def validate_specs(specs: Sequence[LayerSpec]):
    if not specs:
        raise ConfigError("network needs at least one layer")
    for prev, nxt in zip(specs, specs[1:]):
        if prev.output_dim != nxt.input_dim:
            raise ConfigError(f"layer dims do not chain: {prev} -> {nxt}")
    if specs[-1].activation != "identity":
        raise ConfigError("final layer must be identity (it emits logits)")


@dataclass
class MlpNetwork:
    layers: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    keep_prob: float = 1.0

    def __post_init__(self):
        validate_specs(self.layers)
        if not 0.0 < self.keep_prob <= 1.0:
            raise ParameterError(f"keep_prob must lie in (0, 1], got {self.keep_prob}")
        if len(self.weights) != len(self.layers) or len(self.biases) != len(self.layers):
            raise ConfigError("one weight and one bias tensor per layer required")
        for i, (spec, w, b) in enumerate(zip(self.layers, self.weights, self.biases)):
            if w.shape != (spec.input_dim, spec.output_dim) or b.shape != (spec.output_dim,):
                raise DimensionError(f"layer {i}: parameter shapes {w.shape}, {b.shape} do not match {spec}")

    @property
    def input_dim(self):
        return self.layers[0].input_dim

    @property
    def n_classes(self):
        return self.layers[-1].output_dim

    @property
    def dims(self):
        return [self.layers[0].input_dim] + [s.output_dim for s in self.layers]

    def copy(self):
        return MlpNetwork(
            list(self.layers),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.keep_prob,
        )

    def same_architecture(self, other: "MlpNetwork") -> bool:
        return list(self.layers) == list(other.layers)


def init_weights(specs: Sequence[LayerSpec], rng: RngStream, keep_prob: float = 1.0) -> MlpNetwork:
    """He-normal weights with std ``sqrt(2 / input_dim)``; zero biases."""
    specs = list(specs)
    validate_specs(specs)
    weights = [
        rng.child(i).normal((s.input_dim, s.output_dim)) * np.sqrt(2.0 / s.input_dim)
        for i, s in enumerate(specs)
    ]
    biases = [np.zeros(s.output_dim) for s in specs]
    return MlpNetwork(specs, weights, biases, keep_prob)


@dataclass
class ForwardTrace:
    """Everything backward() needs: inputs to every layer plus dropout masks.

    ``inputs[l]`` is the (masked) activation fed to layer ``l``; ``pre[l]`` its
    pre-activation. ``masks[l]`` is the mask applied to layer ``l``'s output
    (all ones for the logit layer).
    """

    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    masks: list[np.ndarray]
    layer_shapes: list[tuple]

    def __len__(self):
        return len(self.pre)


def forward(net: MlpNetwork, x, mode="eval", rng: Optional[RngStream] = None, masks=None):
    """Run the network on a batch; returns ``(logits, trace)``.

    In ``train`` mode each hidden layer output is multiplied by a fresh
    Bernoulli(keep_prob) mask drawn from ``rng.child(layer)``. Passing
    ``masks`` pins them instead (used for gradient checks).
    """
    x = as_tensor(x, "input")
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(f"input shape {x.shape} does not match input_dim {net.input_dim}")
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    stochastic = mode == "train" and net.keep_prob < 1.0 and masks is None
    if stochastic and rng is None:
        raise ParameterError("train-mode forward with dropout needs an RngStream")

    n_layers = len(net.layers)
    trace = ForwardTrace([], [], [], [w.shape for w in net.weights])
    h = x
    for i, (spec, w, b) in enumerate(zip(net.layers, net.weights, net.biases)):
        trace.inputs.append(h)
        with np.errstate(over="ignore", invalid="ignore"):
            a = h @ w + b
        trace.pre.append(a)
        out = np.maximum(a, 0.0) if spec.activation == "relu" else a
        if masks is not None and i < n_layers - 1:
            m = np.asarray(masks[i], dtype=np.float64)
            if m.shape != out.shape:
                raise DimensionError(f"pinned mask {i} has shape {m.shape}, expected {out.shape}")
        elif stochastic and i < n_layers - 1:
            m = bernoulli_mask(out.shape, net.keep_prob, rng.child(i))
        else:
            m = np.ones_like(out)
        trace.masks.append(m)
        with np.errstate(invalid="ignore"):
            h = out * m
    if not np.all(np.isfinite(h)):
        raise NumericError("non-finite logits in forward pass")
    return h, trace


def predict_logits(net: MlpNetwork, x):
    return forward(net, x, "eval")[0]


def check_one_hot(y):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2:
        raise InputError(f"labels must be a 2-d one-hot matrix, got shape {y.shape}")
    binary = np.all((y == 0.0) | (y == 1.0))
    if not binary or not np.all(y.sum(axis=1) == 1.0):
        raise InputError("every label row must be one-hot")
    return y


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise InputError(f"labels outside [0, {n_classes})")
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def cross_entropy_loss(logits, y_onehot):
    """Batch-mean softmax cross-entropy and its gradient ``(softmax - y) / N``."""
    logits = as_tensor(logits, "logits")
    y = check_one_hot(y_onehot)
    if logits.shape != y.shape:
        raise DimensionError(f"logits {logits.shape} vs labels {y.shape}")
    n = logits.shape[0]
    loss = -float(np.sum(y * log_softmax(logits))) / n
    grad = (softmax(logits) - y) / n
    return loss, grad


def l2_logit_loss(student_logits, teacher_logits):
    """Batch-mean squared L2 distance between logit vectors, with gradient."""
    f = as_tensor(student_logits, "student logits")
    z = as_tensor(teacher_logits, "teacher logits")
    if f.shape != z.shape:
        raise DimensionError(f"student {f.shape} vs teacher {z.shape}")
    n = f.shape[0]
    diff = f - z
    return float(np.sum(diff * diff)) / n, 2.0 * diff / n


def backward(net: MlpNetwork, trace: ForwardTrace, grad_logits):
    """Reverse-mode gradients; returns a list of ``(dW, db)`` per layer."""
    if len(trace) != len(net.layers) or trace.layer_shapes != [w.shape for w in net.weights]:
        raise StateError("trace was not produced by this network")
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.shape != trace.pre[-1].shape:
        raise DimensionError(f"grad_logits shape {g.shape} vs logits {trace.pre[-1].shape}")
    grads = [None] * len(net.layers)
    for i in reversed(range(len(net.layers))):
        g = g * trace.masks[i]
        if net.layers[i].activation == "relu":
            g = g * (trace.pre[i] > 0.0)
        grads[i] = (trace.inputs[i].T @ g, g.sum(axis=0))
        if i > 0:
            g = g @ net.weights[i].T
    return grads


@dataclass
class OptimState:
    learning_rate: float
    momentum: float = 0.0
    weight_decay: float = 0.0
    velocity: list = field(default_factory=list)

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ParameterError("learning_rate must be nonnegative")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError("momentum must lie in [0, 1)")
        if not self.weight_decay >= 0:
            raise ParameterError("weight_decay must be nonnegative")

    @classmethod
    def for_network(cls, net: MlpNetwork, learning_rate, momentum=0.0, weight_decay=0.0):
        vel = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
        return cls(learning_rate, momentum, weight_decay, vel)


def sgd_step(net: MlpNetwork, grads, optim: OptimState):
    """One momentum-SGD update with L2 weight decay, in place.

    ``v <- momentum * v + (g + weight_decay * w)``; ``w <- w - lr * v``.
    Applied identically to weights and biases.
    """
    if len(grads) != len(net.layers):
        raise DimensionError("one gradient pair per layer required")
    if not optim.velocity:
        optim.velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(net.weights, net.biases)]
    mu, gamma, lr = optim.momentum, optim.weight_decay, optim.learning_rate
    updates = []
    for i, ((gw, gb), w, b, (vw, vb)) in enumerate(zip(grads, net.weights, net.biases, optim.velocity)):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise DimensionError(f"layer {i}: gradient shapes {gw.shape}, {gb.shape} do not match parameters")
        new_vw = mu * vw + (gw + gamma * w)
        new_vb = mu * vb + (gb + gamma * b)
        new_w = w - lr * new_vw
        new_b = b - lr * new_vb
        if not (np.all(np.isfinite(new_w)) and np.all(np.isfinite(new_b))):
            raise NumericError(f"non-finite parameter update in layer {i}")
        updates.append((new_w, new_b, new_vw, new_vb))
    for i, (new_w, new_b, new_vw, new_vb) in enumerate(updates):
        net.weights[i] = new_w
        net.biases[i] = new_b
        optim.velocity[i] = (new_vw, new_vb)
    return net, optim


def step_decay_lr(base_lr, epoch, epochs, factor=0.1, milestones=(0.5, 0.75)):
    """Learning rate divided by 10 once half and again three quarters of training is done."""
    drops = sum(1 for m in milestones if epoch >= int(m * epochs))
    return base_lr * factor**drops


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    dropout: bool = True


LossFn = Callable[[np.ndarray, np.ndarray], tuple]


def train_network(
    net: MlpNetwork,
    x,
    loss_fn: LossFn,
    config: TrainConfig,
    rng: RngStream,
    labels=None,
):
    """Minibatch momentum SGD with a step-decay schedule.

    ``loss_fn(logits, batch_index)`` returns ``(loss, grad_logits)`` for the
    rows ``batch_index`` of ``x``. Returns the training curve as a list of
    ``(epoch, mean_loss, accuracy)`` tuples; accuracy is measured on the
    train-mode predictions against ``labels`` (rows with label < 0 are skipped).
    """
    x = as_tensor(x, "features")
    n = x.shape[0]
    if n == 0:
        raise InputError("empty training set")
    optim = OptimState.for_network(net, config.learning_rate, config.momentum, config.weight_decay)
    mode = "train" if config.dropout else "eval"
    curve = []
    for epoch in range(config.epochs):
        optim.learning_rate = step_decay_lr(config.learning_rate, epoch, config.epochs)
        order = rng.child(0, epoch).generator().permutation(n)
        total_loss = 0.0
        correct = counted = 0
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start:start + config.batch_size]
            logits, trace = forward(net, x[idx], mode, rng.child(1, epoch, step))
            loss, grad = loss_fn(logits, idx)
            check_finite(np.asarray(loss), "loss")
            sgd_step(net, backward(net, trace, grad), optim)
            total_loss += loss * len(idx)
            if labels is not None:
                lab = labels[idx]
                keep = lab >= 0
                correct += int(np.sum(np.argmax(logits[keep], axis=1) == lab[keep]))
                counted += int(keep.sum())
        acc = correct / counted if counted else float("nan")
        curve.append((epoch, total_loss / n, acc))
        log.debug("epoch %d loss %.5f acc %.4f", epoch, total_loss / n, acc)
    return curve


def train_classifier(net: MlpNetwork, x, labels, config: TrainConfig, rng: RngStream):
    """Plain cross-entropy training, used for the teacher/baseline network."""
    labels = np.asarray(labels, dtype=np.int64)
    y = one_hot(labels, net.n_classes)
    return train_network(net, x, lambda logits, idx: cross_entropy_loss(logits, y[idx]), config, rng, labels)
