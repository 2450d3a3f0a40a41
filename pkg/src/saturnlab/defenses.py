"""Baseline training-time defenses: label smoothing, confidence penalty,
early stopping.

The two loss variants plug into train_epochs as loss_modifier hooks and
reduce bit-identically to plain cross-entropy at epsilon = 0 / beta = 0.
Early stopping is a pure decision function over the validation-accuracy
history plus an adapter producing the train_epochs stop hook.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import LossModifier, as_matrix, cross_entropy_loss, log_softmax, _check_labels
from .errors import ConfigError, InputError

NONE = "none"
LABEL_SMOOTHING = "label_smoothing"
CONFIDENCE_PENALTY = "confidence_penalty"
EARLY_STOPPING = "early_stopping"
DEFENSE_KINDS = (NONE, LABEL_SMOOTHING, CONFIDENCE_PENALTY, EARLY_STOPPING)


@dataclass
class DefenseConfig:
    kind: str = NONE
    epsilon: float = 0.1
    beta: float = 0.1
    patience: int = 10
    min_delta: float = 0.0
    # fraction of the training members held out as the early-stopping
    # validation split; the attack-evaluation sets are never used
    val_fraction: float = 0.1

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ConfigError(f"unknown defense '{self.kind}'; expected one of {DEFENSE_KINDS}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ConfigError(f"label-smoothing epsilon must be in [0, 1), got {self.epsilon}")
        if self.beta < 0.0:
            raise ConfigError(f"confidence-penalty beta must be >= 0, got {self.beta}")
        if self.patience < 1:
            raise ConfigError(f"early-stopping patience must be >= 1, got {self.patience}")
        if self.min_delta < 0.0:
            raise ConfigError(f"early-stopping min_delta must be >= 0, got {self.min_delta}")
        if not 0.0 < self.val_fraction < 0.5:
            raise ConfigError(f"val_fraction must be in (0, 0.5), got {self.val_fraction}")


def label_smoothing_loss(logits, y, epsilon: float):
    """Cross-entropy against smoothed targets.

    True class gets (1 - epsilon) + epsilon/C, every other class
    epsilon/C; targets sum to 1 exactly.
    """
    if not 0.0 <= epsilon < 1.0:
        raise InputError(f"epsilon must be in [0, 1), got {epsilon}")
    logits = as_matrix(logits)
    n, c = logits.shape
    y = _check_labels(y, c)
    if y.size != n:
        raise InputError(f"{n} logit rows but {y.size} labels")
    logp = log_softmax(logits)
    targets = np.full((n, c), epsilon / c)
    targets[np.arange(n), y] += 1.0 - epsilon
    loss = float(np.mean(-(targets * logp).sum(axis=1)))
    probs = np.exp(logp)
    return loss, (probs - targets) / n


def confidence_penalty_loss(logits, y, beta: float):
    """Cross-entropy minus beta times the prediction entropy.

    Pushing entropy up flattens confident predictions; the gradient
    carries the exact entropy derivative beta * p * (log p + H).
    """
    if beta < 0.0:
        raise InputError(f"beta must be >= 0, got {beta}")
    logits = as_matrix(logits)
    n, c = logits.shape
    y = _check_labels(y, c)
    if y.size != n:
        raise InputError(f"{n} logit rows but {y.size} labels")
    logp = log_softmax(logits)
    probs = np.exp(logp)
    nll = -logp[np.arange(n), y]
    entropy = -(probs * logp).sum(axis=1)
    loss = float(np.mean(nll - beta * entropy))
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits += beta * probs * (logp + entropy[:, np.newaxis])
    return loss, dlogits / n


@dataclass
class EarlyStopDecision:
    stop: bool
    best_epoch: int | None = None


def early_stopping_check(history, patience: int, min_delta: float = 0.0) -> EarlyStopDecision:
    """Stop once `patience` consecutive epochs fail to beat the best by
    more than min_delta; best_epoch is the argmax of the history."""
    if len(history) == 0:
        raise InputError("early stopping needs a non-empty history")
    if patience < 1:
        raise InputError(f"patience must be >= 1, got {patience}")
    best = history[0]
    stale = 0
    for value in history[1:]:
        if value - best > min_delta:
            best = value
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                return EarlyStopDecision(stop=True, best_epoch=int(np.argmax(history)))
    return EarlyStopDecision(stop=False)


def make_early_stopping_hook(patience: int, min_delta: float = 0.0):
    """Adapter to the train_epochs stop_check signature."""

    def hook(history):
        decision = early_stopping_check(history, patience, min_delta)
        return decision.best_epoch if decision.stop else None

    return hook


def make_loss_modifier(cfg: DefenseConfig) -> LossModifier:
    """The loss hook train_epochs should run under this defense."""
    if cfg.kind == LABEL_SMOOTHING:
        return lambda logits, y: label_smoothing_loss(logits, y, cfg.epsilon)
    if cfg.kind == CONFIDENCE_PENALTY:
        return lambda logits, y: confidence_penalty_loss(logits, y, cfg.beta)
    return cross_entropy_loss
