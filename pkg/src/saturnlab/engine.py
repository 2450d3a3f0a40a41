"""Minimal dense feedforward engine with exact hand-derived backprop.

Everything runs on 2-D float64 numpy arrays, batch rows first. The engine
provides Dense / Tanh / ReLU / Dropout layers, a numerically stable
softmax cross-entropy, SGD with momentum and weight decay, and a
deterministic training loop. Magnitude-constrained layers plug in by
subclassing Layer (see srcm.py).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NumericError, ShapeError, StateError

TRAIN = "train"
EVAL = "eval"


def as_matrix(x) -> np.ndarray:
    """Coerce to a 2-D float64 array (1-D input becomes a single row)."""
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a[np.newaxis, :]
    if a.ndim != 2:
        raise ShapeError(f"expected a 1-D or 2-D array, got ndim={a.ndim}")
    return a


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Layer:
    """Base layer: forward caches what backward needs, nothing more."""

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray, mode: str, rng: np.random.Generator | None = None):
        """Returns (output, cache)."""
        raise NotImplementedError

    def backward(self, cache, grad_out: np.ndarray, want_param_grads: bool = True):
        """Returns (param_grads dict, grad_in)."""
        raise NotImplementedError

    def in_dim(self) -> int | None:
        return None

    def out_dim(self) -> int | None:
        return None

    def describe(self) -> tuple:
        """Architecture signature element, used for contract checks."""
        return (type(self).__name__,)


class Dense(Layer):
    """Affine layer y = x W + b with W of shape (in, out)."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator):
        self.W = glorot_uniform(rng, fan_in, fan_out)
        self.b = np.zeros(fan_out)

    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x, mode, rng=None):
        if x.shape[1] != self.W.shape[0]:
            raise ShapeError(
                f"Dense expects {self.W.shape[0]} input columns, got {x.shape[1]}"
            )
        out = x @ self.W
        out += self.b
        return out, x

    def backward(self, cache, grad_out, want_param_grads=True):
        x = cache
        if grad_out.shape != (x.shape[0], self.W.shape[1]):
            raise StateError(
                f"Dense backward got gradient {grad_out.shape}, cached batch {x.shape}"
            )
        grads = {}
        if want_param_grads:
            grads = {"W": x.T @ grad_out, "b": grad_out.sum(axis=0)}
        return grads, grad_out @ self.W.T

    def in_dim(self):
        return self.W.shape[0]

    def out_dim(self):
        return self.W.shape[1]

    def describe(self):
        return ("Dense", self.W.shape[0], self.W.shape[1])


class Tanh(Layer):
    def forward(self, x, mode, rng=None):
        y = np.tanh(x)
        return y, y

    def backward(self, cache, grad_out, want_param_grads=True):
        y = cache
        if grad_out.shape != y.shape:
            raise StateError("Tanh backward shape drift")
        return {}, grad_out * (1.0 - y * y)


class ReLU(Layer):
    def forward(self, x, mode, rng=None):
        return np.maximum(x, 0.0), x

    def backward(self, cache, grad_out, want_param_grads=True):
        x = cache
        if grad_out.shape != x.shape:
            raise StateError("ReLU backward shape drift")
        # derivative at exactly 0 taken as 0
        return {}, grad_out * (x > 0.0)


class Dropout(Layer):
    """Inverted dropout: scales kept units by 1/(1-p) so Eval is identity."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise InputError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, mode, rng=None):
        if mode == EVAL or self.rate == 0.0:
            return x, None
        if rng is None:
            raise StateError("train-mode Dropout needs an rng")
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * mask, mask

    def backward(self, cache, grad_out, want_param_grads=True):
        mask = cache
        if mask is None:
            return {}, grad_out
        if grad_out.shape != mask.shape:
            raise StateError("Dropout backward shape drift")
        return {}, grad_out * mask

    def describe(self):
        return ("Dropout", self.rate)


class Model:
    """Ordered layer stack with a mode switch and a head-design tag.

    The bottleneck is the input to the last parametric layer: that is the
    representation whose magnitude the annulus projection constrains, and
    the quantity diagnostics record.
    """

    def __init__(self, layers: Sequence[Layer], head_design: str = "vanilla", seed: int = 0):
        self.layers = list(layers)
        self.head_design = head_design
        self.seed = seed
        self.mode = TRAIN
        self.train_stamp: dict | None = None
        self._classifier_index = self._find_classifier()
        self._check_widths()

    def _find_classifier(self) -> int:
        for i in range(len(self.layers) - 1, -1, -1):
            if self.layers[i].params():
                return i
        return 0

    def _check_widths(self):
        cur = None
        for i, layer in enumerate(self.layers):
            need = layer.in_dim()
            if need is not None and cur is not None and need != cur:
                raise ShapeError(
                    f"layer {i} ({type(layer).__name__}) expects width {need}, "
                    f"previous layer produces {cur}"
                )
            out = layer.out_dim()
            if out is not None:
                cur = out

    def train(self):
        self.mode = TRAIN
        return self

    def eval(self):
        self.mode = EVAL
        return self

    def param_items(self) -> list[tuple[int, str, np.ndarray]]:
        return [
            (i, name, arr)
            for i, layer in enumerate(self.layers)
            for name, arr in layer.params().items()
        ]

    def signature(self) -> tuple:
        return (self.head_design,) + tuple(l.describe() for l in self.layers)

    def copy(self) -> "Model":
        return copy.deepcopy(self)


def model_forward(model: Model, batch: np.ndarray, rng: np.random.Generator | None = None):
    """Full forward pass.

    Returns (logits, bottleneck, caches); caches feed model_backward.
    """
    x = as_matrix(batch)
    bottleneck = x
    caches = []
    for i, layer in enumerate(model.layers):
        if i == model._classifier_index:
            bottleneck = x
        try:
            x, cache = layer.forward(x, model.mode, rng)
        except ShapeError as e:
            raise ShapeError(f"layer {i}: {e}") from None
        caches.append(cache)
    return x, bottleneck, caches


def model_backward(
    model: Model,
    caches: list,
    dlogits: np.ndarray,
    want_input_grad: bool = False,
    want_param_grads: bool = True,
):
    """Backprop dlogits through the stack.

    Returns (param_grads, input_grad) where param_grads maps
    (layer_index, param_name) -> gradient array; input_grad is None
    unless requested.
    """
    if len(caches) != len(model.layers):
        raise StateError(
            f"got {len(caches)} caches for {len(model.layers)} layers; "
            "caches must come from an immediately preceding forward pass"
        )
    grad = dlogits
    param_grads: dict[tuple[int, str], np.ndarray] = {}
    for i in range(len(model.layers) - 1, -1, -1):
        need_input = want_input_grad or i > 0
        layer_grads, grad = model.layers[i].backward(
            caches[i], grad, want_param_grads=want_param_grads
        )
        for name, g in layer_grads.items():
            param_grads[(i, name)] = g
        if not need_input:
            grad = None
            break
    return param_grads, (grad if want_input_grad else None)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise log-softmax via max shift; never overflows on finite input."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise InputError(f"labels must be 1-D, got shape {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= num_classes):
        raise InputError(
            f"label out of range [0, {num_classes}): found {y.min()}..{y.max()}"
        )
    return y.astype(np.intp)


def softmax_cross_entropy(logits: np.ndarray, labels):
    """Mean negative log-likelihood.

    Returns (loss, probs, dlogits) with dlogits = (probs - onehot) / N.
    """
    logits = as_matrix(logits)
    y = _check_labels(labels, logits.shape[1])
    if y.size != logits.shape[0]:
        raise ShapeError(f"{logits.shape[0]} logit rows but {y.size} labels")
    logp = log_softmax(logits)
    n = logits.shape[0]
    loss = float(np.mean(-logp[np.arange(n), y]))
    probs = np.exp(logp)
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    return loss, probs, dlogits


def sigmoid_binary_cross_entropy(logits: np.ndarray, targets):
    """Stable BCE on a single-logit column; used by the membership attacker.

    Returns (loss, probs, dlogits) with dlogits = (sigmoid - target) / N.
    """
    z = as_matrix(logits)
    if z.shape[1] != 1:
        raise ShapeError(f"expected one logit column, got {z.shape[1]}")
    t = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    if t.shape[0] != z.shape[0]:
        raise ShapeError(f"{z.shape[0]} logits but {t.shape[0]} targets")
    # log(1 + e^-|z|) form keeps both tails finite
    ez = np.exp(-np.abs(z))
    loss = float(np.mean(np.maximum(z, 0.0) - z * t + np.log1p(ez)))
    # sign-split sigmoid: only non-positive exponents, so no overflow
    p = np.where(z >= 0.0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    return loss, p, (p - t) / z.shape[0]


@dataclass
class OptimizerState:
    """SGD with momentum; weight decay folds into the velocity update."""

    learning_rate: float
    momentum: float = 0.09
    weight_decay: float = 0.0
    velocity: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise InputError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise InputError("weight_decay must be non-negative")


def sgd_step(model: Model, grads: dict, opt: OptimizerState):
    """One update: v <- mu v + (g + wd w); w <- w - lr v. In place.

    Aborts (no parameter touched) if any gradient is non-finite.
    """
    items = model.param_items()
    for (i, name, w) in items:
        g = grads.get((i, name))
        if g is None:
            raise StateError(f"missing gradient for layer {i} param '{name}'")
        if g.shape != w.shape:
            raise StateError(
                f"gradient shape {g.shape} != parameter shape {w.shape} "
                f"(layer {i}, '{name}')"
            )
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient at layer {i} param '{name}'; step aborted")
    for (i, name, w) in items:
        key = (i, name)
        v = opt.velocity.get(key)
        if v is None:
            v = np.zeros_like(w)
        v = opt.momentum * v + (grads[key] + opt.weight_decay * w)
        opt.velocity[key] = v
        w -= opt.learning_rate * v


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    eval_acc: float | None = None


@dataclass
class TrainLog:
    epochs: list[EpochStats] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int | None = None


LossModifier = Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]]


def cross_entropy_loss(logits, labels):
    """Default loss hook: plain softmax cross-entropy."""
    loss, _, dlogits = softmax_cross_entropy(logits, labels)
    return loss, dlogits


def predict_probs(model: Model, x: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Eval-mode softmax outputs, sharded over the batch axis.

    All layers act row-wise in eval mode, so the result is independent of
    the shard size.
    """
    x = as_matrix(x)
    mode = model.mode
    model.eval()
    out = []
    for start in range(0, x.shape[0], batch_size):
        logits, _, _ = model_forward(model, x[start : start + batch_size])
        out.append(softmax(logits))
    model.mode = mode
    return np.vstack(out) if out else np.zeros((0, 1))


def accuracy(model: Model, x: np.ndarray, labels, batch_size: int = 512) -> float:
    probs = predict_probs(model, x, batch_size)
    y = np.asarray(labels)
    return float(np.mean(probs.argmax(axis=1) == y))


def train_epochs(
    model: Model,
    train_x: np.ndarray,
    train_y,
    opt: OptimizerState,
    epochs: int,
    *,
    loss_modifier: LossModifier = cross_entropy_loss,
    batch_size: int = 128,
    seed: int = 0,
    eval_x: np.ndarray | None = None,
    eval_y=None,
    stop_check: Callable[[list[float]], int | None] | None = None,
    lr_decay_at: tuple[float, ...] = (0.5, 0.75),
    lr_decay_factor: float = 0.1,
) -> TrainLog:
    """Deterministic SGD training loop.

    Batch order reshuffles each epoch from `seed`. The learning rate
    multiplies by `lr_decay_factor` at the given epoch fractions.
    `stop_check` consumes the per-epoch eval-accuracy history and returns
    the best epoch when training should stop; the best-eval parameters
    are restored on exit whenever a stop_check is installed.
    """
    train_x = as_matrix(train_x)
    y = _check_labels(train_y, num_classes=np.iinfo(np.intp).max)
    n = train_x.shape[0]
    if n == 0:
        raise InputError("empty training set")
    if y.size != n:
        raise ShapeError(f"{n} training rows but {y.size} labels")
    if stop_check is not None and eval_x is None:
        raise InputError("stop_check requires an eval split")

    rng = np.random.default_rng(seed)
    log = TrainLog()
    decay_epochs = {int(epochs * frac) for frac in lr_decay_at if epochs > 0}
    base_lr = opt.learning_rate
    eval_history: list[float] = []
    best_params = None
    best_acc = -np.inf

    for epoch in range(epochs):
        if epoch in decay_epochs and epoch > 0:
            opt.learning_rate *= lr_decay_factor
        model.train()
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            logits, _, caches = model_forward(model, train_x[idx], rng)
            loss, dlogits = loss_modifier(logits, y[idx])
            grads, _ = model_backward(model, caches, dlogits)
            sgd_step(model, grads, opt)
            losses.append(loss)
        stats = EpochStats(
            epoch=epoch,
            loss=float(np.mean(losses)),
            train_acc=accuracy(model, train_x, y),
        )
        if eval_x is not None:
            stats.eval_acc = accuracy(model, eval_x, eval_y)
            eval_history.append(stats.eval_acc)
            if stop_check is not None and stats.eval_acc > best_acc:
                best_acc = stats.eval_acc
                best_params = [(i, name, w.copy()) for i, name, w in model.param_items()]
        log.epochs.append(stats)
        if stop_check is not None:
            best = stop_check(eval_history)
            if best is not None:
                log.stopped_early = True
                log.best_epoch = best
                break

    if stop_check is not None and best_params is not None:
        if not log.stopped_early:
            log.best_epoch = int(np.argmax(eval_history))
        for (i, name, saved), (_, _, live) in zip(best_params, model.param_items()):
            live[...] = saved
    opt.learning_rate = base_lr
    model.eval()
    return log
