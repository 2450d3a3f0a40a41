"""Tabular dataset ingestion and synthetic generation.

The on-disk format is headerless CSV, one sample per line, class label
first and then exactly 600 binary features (the Purchase-style shopping
basket encoding). The synthetic generator produces the same shape at any
scale: one random binary prototype per class, samples are prototypes
with independent bit flips.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InputError, ParseError

PURCHASE_FEATURES = 600
PURCHASE_CLASSES = 100


@dataclass
class TabularDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.intp)
        if self.features.ndim != 2:
            raise InputError(f"features must be 2-D, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise InputError(
                f"{self.features.shape[0]} feature rows but {self.labels.shape} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InputError(
                f"labels must lie in [0, {self.num_classes}), "
                f"found {self.labels.min()}..{self.labels.max()}"
            )

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "TabularDataset":
        """The only sanctioned row access; keeps data flow auditable."""
        idx = np.asarray(indices, dtype=np.intp)
        return TabularDataset(
            self.features[idx].copy(),
            self.labels[idx].copy(),
            self.num_classes,
            provenance=dict(self.provenance, subset=len(idx)),
        )


def load_purchase_csv(path) -> TabularDataset:
    """Parse a headerless label-first CSV with 600 binary features per row."""
    rows = []
    labels = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != PURCHASE_FEATURES + 1:
                raise ParseError(
                    f"expected {PURCHASE_FEATURES + 1} comma-separated fields, got {len(parts)}",
                    line=lineno,
                )
            try:
                label = int(parts[0])
            except ValueError:
                raise ParseError(f"label '{parts[0]}' is not an integer", line=lineno) from None
            if not 0 <= label < PURCHASE_CLASSES:
                raise ParseError(
                    f"label {label} outside [0, {PURCHASE_CLASSES})", line=lineno
                )
            feats = np.empty(PURCHASE_FEATURES)
            for j, tok in enumerate(parts[1:]):
                if tok == "0":
                    feats[j] = 0.0
                elif tok == "1":
                    feats[j] = 1.0
                else:
                    raise ParseError(
                        f"feature {j + 1} is '{tok}', expected 0 or 1", line=lineno
                    )
            rows.append(feats)
            labels.append(label)
    if not rows:
        raise ParseError(f"no data rows in {path}")
    return TabularDataset(
        np.vstack(rows),
        np.array(labels),
        PURCHASE_CLASSES,
        provenance={"source": "file", "path": str(path)},
    )


def save_purchase_csv(ds: TabularDataset, path):
    """Inverse of load_purchase_csv; round-trips losslessly."""
    if ds.input_dim != PURCHASE_FEATURES:
        raise InputError(f"purchase format needs {PURCHASE_FEATURES} features, got {ds.input_dim}")
    with open(path, "w", encoding="ascii") as fh:
        for label, row in zip(ds.labels, ds.features):
            bits = ",".join("1" if v else "0" for v in row)
            fh.write(f"{label},{bits}\n")


def generate_synthetic(
    n: int = 20_000,
    d: int = PURCHASE_FEATURES,
    classes: int = PURCHASE_CLASSES,
    flip_prob: float = 0.2,
    seed: int = 0,
) -> TabularDataset:
    """Balanced binary dataset: class prototypes plus independent bit flips."""
    if n < classes or n % classes != 0:
        raise ConfigError(f"n={n} must be a positive multiple of classes={classes}")
    if not 0.0 <= flip_prob < 0.5:
        raise ConfigError(f"flip_prob must be in [0, 0.5), got {flip_prob}")
    rng = np.random.default_rng(seed)
    prototypes = (rng.random((classes, d)) < 0.5).astype(np.float64)
    per_class = n // classes
    labels = np.repeat(np.arange(classes), per_class)
    feats = prototypes[labels]
    flips = rng.random((n, d)) < flip_prob
    feats = np.where(flips, 1.0 - feats, feats)
    return TabularDataset(
        feats,
        labels,
        classes,
        provenance={
            "source": "synthetic",
            "n": n,
            "d": d,
            "classes": classes,
            "flip_prob": flip_prob,
            "seed": seed,
        },
    )


def dataset_digest(ds: TabularDataset) -> str:
    """sha256 over the raw feature and label bytes; pins the exact data copy."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(ds.labels, dtype="<i8").tobytes())
    return h.hexdigest()
