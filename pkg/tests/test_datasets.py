"""Dataset ingestion, synthetic generation, digests."""

import numpy as np
import pytest

from saturnlab.datasets import (
    PURCHASE_FEATURES,
    TabularDataset,
    dataset_digest,
    generate_synthetic,
    load_purchase_csv,
    save_purchase_csv,
)
from saturnlab.errors import ConfigError, InputError, ParseError


def purchase_line(label, bits):
    return ",".join([str(label)] + [str(int(b)) for b in bits])


def test_load_purchase_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    feats = (rng.random((5, PURCHASE_FEATURES)) < 0.3).astype(float)
    labels = np.array([5, 0, 99, 42, 7])
    ds = TabularDataset(feats, labels, 100)
    path = tmp_path / "purchase.csv"
    save_purchase_csv(ds, path)
    back = load_purchase_csv(path)
    assert np.array_equal(back.features, feats)
    assert np.array_equal(back.labels, labels)
    assert back.num_classes == 100
    assert back.provenance["source"] == "file"


def test_load_purchase_csv_wrong_field_count(tmp_path):
    path = tmp_path / "bad.csv"
    good = purchase_line(1, np.zeros(PURCHASE_FEATURES))
    short = purchase_line(1, np.zeros(PURCHASE_FEATURES - 1))
    path.write_text(good + "\n" + short + "\n")
    with pytest.raises(ParseError, match="line 2"):
        load_purchase_csv(path)


def test_load_purchase_csv_bad_label(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(purchase_line("abc", np.zeros(PURCHASE_FEATURES)) + "\n")
    with pytest.raises(ParseError, match="not an integer"):
        load_purchase_csv(path)
    path.write_text(purchase_line(100, np.zeros(PURCHASE_FEATURES)) + "\n")
    with pytest.raises(ParseError, match="outside"):
        load_purchase_csv(path)


def test_load_purchase_csv_nonbinary_feature(tmp_path):
    path = tmp_path / "bad.csv"
    bits = ["0"] * PURCHASE_FEATURES
    bits[3] = "2"
    path.write_text("1," + ",".join(bits) + "\n")
    with pytest.raises(ParseError, match="expected 0 or 1"):
        load_purchase_csv(path)


def test_load_purchase_csv_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ParseError, match="no data rows"):
        load_purchase_csv(path)


def test_load_purchase_csv_skips_blank_lines(tmp_path):
    path = tmp_path / "blank.csv"
    path.write_text("\n" + purchase_line(3, np.ones(PURCHASE_FEATURES)) + "\n\n")
    ds = load_purchase_csv(path)
    assert len(ds) == 1
    assert ds.labels[0] == 3


def test_save_purchase_csv_rejects_wrong_width(tmp_path):
    ds = TabularDataset(np.zeros((2, 10)), np.zeros(2, dtype=int), 100)
    with pytest.raises(InputError):
        save_purchase_csv(ds, tmp_path / "x.csv")


def test_generate_synthetic_balanced():
    ds = generate_synthetic(n=1000, d=20, classes=10, flip_prob=0.2, seed=1)
    values, counts = np.unique(ds.labels, return_counts=True)
    assert np.array_equal(values, np.arange(10))
    assert np.all(counts == 100)
    assert set(np.unique(ds.features)) <= {0.0, 1.0}


def test_generate_synthetic_zero_flip_is_prototypes():
    ds = generate_synthetic(n=60, d=15, classes=6, flip_prob=0.0, seed=2)
    for c in range(6):
        rows = ds.features[ds.labels == c]
        assert np.array_equal(rows, np.tile(rows[0], (len(rows), 1)))


def test_generate_synthetic_flip_statistics():
    # same seed with flip 0 reproduces the prototypes row-for-row
    protos = generate_synthetic(n=1000, d=600, classes=10, flip_prob=0.0, seed=3)
    ds = generate_synthetic(n=1000, d=600, classes=10, flip_prob=0.1, seed=3)
    hamming = np.abs(ds.features - protos.features).sum(axis=1)
    sigma = np.sqrt(600 * 0.1 * 0.9)
    assert abs(hamming.mean() - 60.0) <= 3.0 * sigma


def test_generate_synthetic_deterministic():
    a = generate_synthetic(n=100, d=30, classes=5, flip_prob=0.2, seed=4)
    b = generate_synthetic(n=100, d=30, classes=5, flip_prob=0.2, seed=4)
    c = generate_synthetic(n=100, d=30, classes=5, flip_prob=0.2, seed=5)
    assert np.array_equal(a.features, b.features)
    assert dataset_digest(a) == dataset_digest(b)
    assert dataset_digest(a) != dataset_digest(c)


def test_generate_synthetic_validation():
    with pytest.raises(ConfigError):
        generate_synthetic(n=101, classes=10)
    with pytest.raises(ConfigError):
        generate_synthetic(n=100, classes=10, flip_prob=0.5)


def test_dataset_digest_format_and_sensitivity():
    ds = generate_synthetic(n=50, d=10, classes=5, seed=6)
    digest = dataset_digest(ds)
    assert len(digest) == 64
    assert all(ch in "0123456789abcdef" for ch in digest)
    flipped = TabularDataset(ds.features.copy(), ds.labels.copy(), 5)
    flipped.features[0, 0] = 1.0 - flipped.features[0, 0]
    assert dataset_digest(flipped) != digest


def test_tabular_dataset_validation():
    with pytest.raises(InputError):
        TabularDataset(np.zeros(5), np.zeros(5, dtype=int), 2)
    with pytest.raises(InputError):
        TabularDataset(np.zeros((5, 2)), np.zeros(4, dtype=int), 2)
    with pytest.raises(InputError):
        TabularDataset(np.zeros((3, 2)), np.array([0, 1, 2]), 2)


def test_take_copies_rows():
    ds = generate_synthetic(n=40, d=8, classes=4, seed=7)
    sub = ds.take([0, 3, 5])
    assert len(sub) == 3
    assert sub.input_dim == 8
    assert sub.provenance["subset"] == 3
    sub.features[0, 0] = 123.0
    assert ds.features[0, 0] != 123.0
