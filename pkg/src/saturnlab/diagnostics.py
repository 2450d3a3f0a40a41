"""Per-sample prediction anatomy and forward-latency measurement.

The central question diagnosed here: does the magnitude of a sample's
bottleneck representation leak membership, independently of its decision
margin? Records carry (magnitude, margin, attack correctness) per sample;
bin tables aggregate them into heat-map-ready grids, one per membership
class, and Pearson correlations summarize each grid.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .engine import EVAL, Model, model_forward, softmax
from .errors import InputError

# which representation the magnitude column measures, relative to the
# annulus projection
PRE_PROJECTION = "pre_projection"
POST_PROJECTION = "post_projection"


@dataclass
class PredictionRecord:
    sample_id: int
    probs: np.ndarray
    label: int
    is_member: bool
    magnitude: float
    margin: float
    attack_correct: bool | None = None


def margin(p) -> float:
    """Top-1 minus top-2 probability; distance-to-boundary proxy."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2:
        raise InputError(f"margin needs a probability vector of >= 2 classes, got shape {p.shape}")
    top2 = np.partition(p, -2)[-2:]
    return float(top2[1] - top2[0])


def margins(probs: np.ndarray) -> np.ndarray:
    """Row-wise margin over a probability matrix."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[1] < 2:
        raise InputError(f"need an N x C probability matrix with C >= 2, got {probs.shape}")
    top2 = np.partition(probs, -2, axis=1)[:, -2:]
    return top2[:, 1] - top2[:, 0]


def magnitude_stage_of(model: Model) -> str:
    """Whether the recorded magnitude sits before or after the projection.

    The bottleneck is the input to the last parametric layer, so heads
    that interpose SR before their classifier measure the projected
    vector; all other designs measure the raw backbone output.
    """
    return POST_PROJECTION if model.head_design in ("design_b", "srcm") else PRE_PROJECTION


def collect_records(
    model: Model,
    features: np.ndarray,
    labels,
    is_member: bool,
    sample_ids=None,
    attack_correct=None,
    batch_size: int = 512,
) -> list[PredictionRecord]:
    """Eval-mode forward pass over the rows, one record per sample."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    n = features.shape[0]
    if sample_ids is None:
        sample_ids = np.arange(n)
    mode = model.mode
    model.eval()
    records = []
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        logits, bottleneck, _ = model_forward(model, features[start:stop])
        probs = softmax(logits)
        mags = np.sqrt((bottleneck * bottleneck).sum(axis=1))
        margs = margins(probs)
        for i in range(stop - start):
            k = start + i
            records.append(
                PredictionRecord(
                    sample_id=int(sample_ids[k]),
                    probs=probs[i],
                    label=int(labels[k]),
                    is_member=is_member,
                    magnitude=float(mags[i]),
                    margin=float(margs[i]),
                    attack_correct=None if attack_correct is None else bool(attack_correct[k]),
                )
            )
    model.mode = mode
    return records


@dataclass
class BinTable:
    """Equal-width 2-D histogram over (magnitude, margin).

    counts[i, j] is the number of records in magnitude bin i and margin
    bin j; mean_correct[i, j] averages attack correctness there (NaN for
    empty cells or when records carry no correctness flags).
    """

    mag_edges: np.ndarray
    margin_edges: np.ndarray
    counts: np.ndarray
    mean_correct: np.ndarray
    magnitude_stage: str
    warning: str | None = None


def _edges(values: np.ndarray, bins: int) -> tuple[np.ndarray, str | None]:
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        return np.array([lo, hi]), f"degenerate range [{lo}, {hi}]; single bin"
    return np.linspace(lo, hi, bins + 1), None


def _bin_index(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    if len(edges) == 2:
        return np.zeros(len(values), dtype=np.intp)
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def _one_table(records: list[PredictionRecord], bins_mag: int, bins_margin: int, stage: str) -> BinTable:
    mags = np.array([r.magnitude for r in records])
    margs = np.array([r.margin for r in records])
    mag_edges, warn_a = _edges(mags, bins_mag)
    margin_edges, warn_b = _edges(margs, bins_margin)
    nb_mag, nb_margin = len(mag_edges) - 1, len(margin_edges) - 1
    counts = np.zeros((nb_mag, nb_margin), dtype=np.intp)
    correct_sum = np.zeros((nb_mag, nb_margin))
    have_flags = all(r.attack_correct is not None for r in records)
    mi = _bin_index(mags, mag_edges)
    gi = _bin_index(margs, margin_edges)
    for k, r in enumerate(records):
        counts[mi[k], gi[k]] += 1
        if have_flags:
            correct_sum[mi[k], gi[k]] += float(r.attack_correct)
    with np.errstate(invalid="ignore"):
        mean_correct = np.where(counts > 0, correct_sum / np.maximum(counts, 1), np.nan)
    if not have_flags:
        mean_correct[:] = np.nan
    warning = "; ".join(w for w in (warn_a, warn_b) if w) or None
    return BinTable(mag_edges, margin_edges, counts, mean_correct, stage, warning)


def pearson(x, y) -> float:
    """Plain product-moment correlation; NaN when either side is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size != y.size or x.size < 2:
        raise InputError("pearson needs two equal-length vectors of size >= 2")
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt((dx * dx).sum()), np.sqrt((dy * dy).sum())
    if sx == 0.0 or sy == 0.0:
        return float("nan")
    return float((dx * dy).sum() / (sx * sy))


@dataclass
class MagnitudeMarginResult:
    member_table: BinTable
    nonmember_table: BinTable
    member_pearson: float
    nonmember_pearson: float


def magnitude_margin_table(
    records: list[PredictionRecord],
    bins_mag: int = 20,
    bins_margin: int = 20,
    magnitude_stage: str = PRE_PROJECTION,
) -> MagnitudeMarginResult:
    """Separate (magnitude x margin) tables for members and non-members."""
    members = [r for r in records if r.is_member]
    nonmembers = [r for r in records if not r.is_member]
    if not members or not nonmembers:
        raise InputError("need at least one record per membership class")

    def corr(group):
        if len(group) < 2:
            return float("nan")
        return pearson([r.magnitude for r in group], [r.margin for r in group])

    return MagnitudeMarginResult(
        member_table=_one_table(members, bins_mag, bins_margin, magnitude_stage),
        nonmember_table=_one_table(nonmembers, bins_mag, bins_margin, magnitude_stage),
        member_pearson=corr(members),
        nonmember_pearson=corr(nonmembers),
    )


def latency_bench(model: Model, batch: np.ndarray, iters: int = 100, warmup: int = 10) -> dict:
    """Wall-clock forward latency in Eval mode, milliseconds."""
    if iters < 10:
        raise InputError(f"iters must be >= 10, got {iters}")
    if warmup < 1:
        raise InputError(f"warmup must be >= 1, got {warmup}")
    batch = np.asarray(batch, dtype=np.float64)
    mode = model.mode
    model.eval()
    for _ in range(warmup):
        model_forward(model, batch)
    times = np.empty(iters)
    for i in range(iters):
        t0 = time.perf_counter()
        model_forward(model, batch)
        times[i] = (time.perf_counter() - t0) * 1e3
    model.mode = mode
    return {"mean_ms": float(times.mean()), "std_ms": float(times.std())}
