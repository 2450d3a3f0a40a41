"""Annulus-projected representations and the magnitude-normalized classifier.

The saturn-rings activation (SR) confines each feature row to the annulus
between radii r1 and r2 = r1 + d by radially projecting rows that fall
outside. LinearNorm is a dense classifier whose weight matrix is divided
by its Frobenius norm on the fly, either during training only or in both
modes (all_on). Together with the plain Dense head they form the four
head designs this lab compares.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import Dense, Layer, Model, ReLU, Tanh, as_matrix
from .errors import ConfigError, InputError, NumericError, ShapeError, StateError

# Rows whose norm is within this relative distance of a radius take the
# identity branch. Keeps the projection exactly idempotent: a row pushed
# onto a sphere re-enters through the identity branch despite float
# rounding in norm recomputation.
BOUNDARY_RTOL = 1e-12

VANILLA = "vanilla"
DESIGN_A = "design_a"
DESIGN_B = "design_b"
SRCM = "srcm"
HEAD_DESIGNS = (VANILLA, DESIGN_A, DESIGN_B, SRCM)


@dataclass
class SrcmConfig:
    """Annulus radii and head-layer knobs.

    r2 is derived as r1 + d, so r2 > r1 is structural. all_on controls
    whether LinearNorm normalizes at evaluation time too. hidden_width
    is the width of the extra dense layer feeding SR (None means: reuse
    the bottleneck width).
    """

    r1: float
    d: float
    all_on: bool = True
    hidden_width: int | None = None

    def __post_init__(self):
        if not np.isfinite(self.r1) or self.r1 <= 0:
            raise InputError(f"r1 must be a positive real, got {self.r1}")
        if not np.isfinite(self.d) or self.d <= 0:
            raise InputError(f"d must be a positive real, got {self.d}")
        if self.hidden_width is not None and self.hidden_width < 1:
            raise InputError(f"hidden_width must be >= 1, got {self.hidden_width}")

    @property
    def r2(self) -> float:
        return self.r1 + self.d


def _row_norms(x: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", x, x))[:, None]


def sr_forward(x, cfg: SrcmConfig) -> np.ndarray:
    """Project each row into the [r1, r2] annulus; see sr_branches for masks."""
    y, _, _, _ = sr_branches(x, cfg)
    return y


def sr_branches(x, cfg: SrcmConfig):
    """Forward pass plus the per-row branch data backward needs.

    Returns (y, norms, inner_mask, outer_mask); masks are column vectors
    over rows. Zero rows stay zero and belong to neither mask. Rows whose
    norm ties a radius (within BOUNDARY_RTOL relative) count as inside.
    """
    x = as_matrix(x)
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite input to annulus projection")
    norms = _row_norms(x)
    inner = norms < cfg.r1 * (1.0 - BOUNDARY_RTOL)
    outer = norms > cfg.r2 * (1.0 + BOUNDARY_RTOL)
    inner &= norms > 0.0
    # radius each row is scaled to; inside rows keep their own norm
    target = np.where(inner, cfg.r1, np.where(outer, cfg.r2, norms))
    scale = np.where(inner | outer, target / np.where(norms > 0.0, norms, 1.0), 1.0)
    return x * scale, norms, inner, outer


def sr_backward(x, cfg: SrcmConfig, upstream) -> np.ndarray:
    """Exact Jacobian of the projection applied to `upstream`.

    Identity rows pass the gradient unchanged. A row projected to radius
    r gets r(I/n - x x^T / n^3) u, the derivative of r x/|x|. Zero rows
    emit zero gradient.
    """
    x = as_matrix(x)
    u = as_matrix(upstream)
    if u.shape != x.shape:
        raise ShapeError(f"upstream shape {u.shape} != input shape {x.shape}")
    _, norms, inner, outer = sr_branches(x, cfg)
    zero = norms == 0.0
    projected = inner | outer
    out = np.where(zero, 0.0, u)
    if not projected.any():
        return out
    r = np.where(inner, cfg.r1, cfg.r2)
    safe_n = np.where(norms > 0.0, norms, 1.0)
    dot = (x * u).sum(axis=1, keepdims=True)
    jac_u = (r / safe_n) * u - (r * dot / safe_n**3) * x
    return np.where(projected, jac_u, out)


class SRActivation(Layer):
    """Engine layer wrapping the annulus projection."""

    def __init__(self, cfg: SrcmConfig):
        self.cfg = cfg

    def forward(self, x, mode, rng=None):
        return sr_forward(x, self.cfg), x

    def backward(self, cache, grad_out, want_param_grads=True):
        x = cache
        if grad_out.shape != x.shape:
            raise StateError("SRActivation backward shape drift")
        return {}, sr_backward(x, self.cfg, grad_out)

    def describe(self):
        return ("SRActivation", self.cfg.r1, self.cfg.d)


def _frob(W: np.ndarray) -> float:
    return float(np.sqrt((W * W).sum()))


def linearnorm_forward(g, W, b, mode: str, all_on: bool) -> np.ndarray:
    """f = g (W/|W|_F) + b in Train mode or when all_on, else f = g W + b.

    W is never mutated; the scaling happens on a fresh value.
    """
    g = as_matrix(g)
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if g.shape[1] != W.shape[0]:
        raise ShapeError(f"input has {g.shape[1]} columns, weight has {W.shape[0]} rows")
    if mode == "train" or all_on:
        s = _frob(W)
        if s == 0.0:
            raise NumericError("zero-norm classifier weight; normalization undefined")
        # (g W)/s == g (W/s) without copying W every call
        out = g @ W
        out /= s
        out += b
        return out
    return g @ W + b


def linearnorm_backward(g, W, b, upstream, mode: str, all_on: bool):
    """Gradients (dg, dW, db) through the dual-mode forward.

    The normalized branch differentiates W/|W|_F fully:
    dW = (g^T U)/s - W <U, gW>_F / s^3  with s = |W|_F.
    """
    g = as_matrix(g)
    W = np.asarray(W, dtype=np.float64)
    u = as_matrix(upstream)
    if u.shape != (g.shape[0], W.shape[1]):
        raise ShapeError(f"upstream shape {u.shape} incompatible with g{g.shape} W{W.shape}")
    db = u.sum(axis=0)
    if mode == "train" or all_on:
        s = _frob(W)
        if s == 0.0:
            raise NumericError("zero-norm classifier weight; normalization undefined")
        dg = u @ W.T
        dg /= s
        raw = g.T @ u
        # <U, gW>_F == <g^T U, W>_F, so raw serves both terms
        inner = float((raw * W).sum())
        dW = raw / s - W * (inner / s**3)
        return dg, dW, db
    return u @ W.T, g.T @ u, db


class LinearNorm(Layer):
    """Dense classifier with on-the-fly Frobenius weight normalization."""

    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, all_on: bool):
        from .engine import glorot_uniform

        self.W = glorot_uniform(rng, fan_in, fan_out)
        self.b = np.zeros(fan_out)
        self.all_on = all_on

    def params(self):
        return {"W": self.W, "b": self.b}

    def forward(self, x, mode, rng=None):
        return linearnorm_forward(x, self.W, self.b, mode, self.all_on), (x, mode)

    def backward(self, cache, grad_out, want_param_grads=True):
        x, mode = cache
        dg, dW, db = linearnorm_backward(x, self.W, self.b, grad_out, mode, self.all_on)
        grads = {"W": dW, "b": db} if want_param_grads else {}
        return grads, dg

    def in_dim(self):
        return self.W.shape[0]

    def out_dim(self):
        return self.W.shape[1]

    def describe(self):
        return ("LinearNorm", self.W.shape[0], self.W.shape[1], self.all_on)


def capacity_proxy(n: int, r1: float, d: float) -> float:
    """Volume-growth proxy for the annulus in n dimensions.

    d * sum_{i=0}^{n-1} r1^i (r1+d)^(n-1-i): the factor the annulus
    volume scales by, constants dropped. Strictly increasing in r1 and d.
    """
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InputError(f"n must be an integer >= 1, got {n!r}")
    if r1 <= 0 or d <= 0:
        raise InputError("r1 and d must be positive")
    r2 = r1 + d
    i = np.arange(n, dtype=np.float64)
    with np.errstate(over="ignore"):
        terms = np.power(r1, i) * np.power(r2, n - 1 - i)
        total = d * terms.sum()
    if not np.isfinite(total):
        raise NumericError(f"capacity proxy overflowed for n={n}, r1={r1}, d={d}")
    return float(total)


def build_head(
    design: str,
    bottleneck_width: int,
    num_classes: int,
    cfg: SrcmConfig | None,
    rng: np.random.Generator,
) -> list[Layer]:
    """Layer stack appended after the backbone, one of the four designs.

    vanilla:  Dense(bw -> classes)
    design_a: Dense(bw -> classes), SR on the logits
    design_b: Dense(bw -> D_h), SR, LinearNorm with plain eval weights
    srcm:     Dense(bw -> D_h), SR, LinearNorm normalized in both modes
    """
    if design == VANILLA:
        return [Dense(bottleneck_width, num_classes, rng)]
    if cfg is None:
        raise ConfigError(f"head design '{design}' needs annulus radii (r1, d)")
    if design == DESIGN_A:
        return [Dense(bottleneck_width, num_classes, rng), SRActivation(cfg)]
    if design in (DESIGN_B, SRCM):
        d_h = cfg.hidden_width or bottleneck_width
        all_on = design == SRCM
        return [
            Dense(bottleneck_width, d_h, rng),
            SRActivation(cfg),
            LinearNorm(d_h, num_classes, rng, all_on=all_on),
        ]
    raise ConfigError(f"unknown head design '{design}'; expected one of {HEAD_DESIGNS}")


def build_model(
    input_dim: int,
    num_classes: int,
    design: str = VANILLA,
    cfg: SrcmConfig | None = None,
    hidden: tuple[int, ...] = (1024, 512, 256),
    activation: str = "tanh",
    seed: int = 0,
) -> Model:
    """Backbone MLP plus one of the four classifier heads."""
    if input_dim < 1 or num_classes < 2:
        raise ConfigError(f"need input_dim >= 1 and num_classes >= 2, got {input_dim}, {num_classes}")
    act = {"tanh": Tanh, "relu": ReLU}.get(activation)
    if act is None:
        raise ConfigError(f"unknown activation '{activation}'")
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    width = input_dim
    for h in hidden:
        layers.append(Dense(width, h, rng))
        layers.append(act())
        width = h
    layers.extend(build_head(design, width, num_classes, cfg, rng))
    return Model(layers, head_design=design, seed=seed)
