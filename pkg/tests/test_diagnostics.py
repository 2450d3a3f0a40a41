"""Prediction-anatomy diagnostics: margins, magnitudes, bin tables."""

import numpy as np
import pytest

from saturnlab.diagnostics import (
    POST_PROJECTION,
    PRE_PROJECTION,
    PredictionRecord,
    collect_records,
    latency_bench,
    magnitude_margin_table,
    magnitude_stage_of,
    margin,
    margins,
    pearson,
)
from saturnlab.engine import TRAIN
from saturnlab.errors import InputError
from saturnlab.srcm import SrcmConfig, build_model


def test_margin_closed_forms():
    assert margin([0.7, 0.2, 0.1]) == pytest.approx(0.5, abs=1e-12)
    assert margin([0.5, 0.5]) == 0.0
    assert margin([1.0, 0.0, 0.0, 0.0]) == 1.0


def test_margin_ignores_lower_ranked_entries():
    # only top-1 and top-2 matter
    assert margin([0.5, 0.3, 0.15, 0.05]) == margin([0.5, 0.3, 0.05, 0.15])


def test_margin_validation():
    with pytest.raises(InputError):
        margin([1.0])
    with pytest.raises(InputError):
        margins(np.ones((3,)))


def test_margins_matches_scalar_form():
    rng = np.random.default_rng(0)
    probs = rng.dirichlet(np.ones(6), size=10)
    rows = margins(probs)
    for i in range(10):
        assert rows[i] == pytest.approx(margin(probs[i]), abs=1e-15)


def test_magnitude_stage_per_design():
    cfg = SrcmConfig(r1=1.0, d=1.0)
    cases = {
        "vanilla": PRE_PROJECTION,
        "design_a": PRE_PROJECTION,
        "design_b": POST_PROJECTION,
        "srcm": POST_PROJECTION,
    }
    for design, expected in cases.items():
        model = build_model(6, 3, design=design, cfg=None if design == "vanilla" else cfg,
                            hidden=(8,), seed=0)
        assert magnitude_stage_of(model) == expected, design


def test_collect_records_fields_and_mode_restore():
    rng = np.random.default_rng(1)
    model = build_model(5, 3, hidden=(7,), seed=2)
    model.train()
    x = rng.normal(size=(9, 5))
    y = rng.integers(0, 3, size=9)
    ids = np.arange(100, 109)
    flags = rng.random(9) < 0.5
    records = collect_records(model, x, y, True, sample_ids=ids, attack_correct=flags)

    assert model.mode == TRAIN  # restored after the eval-mode pass
    assert len(records) == 9
    for k, r in enumerate(records):
        assert r.sample_id == 100 + k
        assert r.label == y[k]
        assert r.is_member is True
        assert r.attack_correct == bool(flags[k])
        assert np.isclose(r.probs.sum(), 1.0, atol=1e-12)
        assert r.margin == pytest.approx(margin(r.probs), abs=1e-15)
        assert r.magnitude >= 0.0


def test_collect_records_magnitude_is_bottleneck_norm():
    from saturnlab.engine import model_forward

    model = build_model(5, 3, hidden=(7,), seed=3)
    model.eval()
    x = np.random.default_rng(2).normal(size=(4, 5))
    records = collect_records(model, x, [0, 1, 2, 0], False)
    _, bottleneck, _ = model_forward(model, x)
    norms = np.sqrt((bottleneck**2).sum(axis=1))
    for k, r in enumerate(records):
        assert r.magnitude == pytest.approx(norms[k], abs=1e-12)
        assert r.attack_correct is None


def make_record(mag, marg, member=True, correct=None):
    return PredictionRecord(0, np.array([0.6, 0.4]), 0, member, mag, marg, correct)


def test_bin_table_mass_conservation():
    rng = np.random.default_rng(3)
    records = [
        make_record(rng.uniform(0, 10), rng.uniform(0, 1), member=bool(k % 2))
        for k in range(500)
    ]
    result = magnitude_margin_table(records, bins_mag=20, bins_margin=20)
    assert result.member_table.counts.sum() == 250
    assert result.nonmember_table.counts.sum() == 250
    assert result.member_table.counts.shape == (20, 20)
    # no correctness flags anywhere: the whole grid is NaN
    assert np.all(np.isnan(result.member_table.mean_correct))


def test_bin_table_single_point():
    records = [make_record(2.0, 0.5), make_record(1.0, 0.1, member=False)]
    result = magnitude_margin_table(records)
    assert result.member_table.counts.sum() == 1
    assert result.member_table.warning is not None  # degenerate ranges collapse
    assert result.member_table.counts.shape == (1, 1)


def test_bin_table_degenerate_margin_range():
    records = [make_record(float(k), 0.3) for k in range(10)]
    records += [make_record(1.0, 0.2, member=False)]
    result = magnitude_margin_table(records, bins_mag=4, bins_margin=4)
    table = result.member_table
    assert table.counts.shape == (4, 1)
    assert "degenerate" in table.warning
    assert table.counts.sum() == 10


def test_bin_table_mean_correct():
    records = [
        make_record(0.1, 0.1, correct=True),
        make_record(0.1, 0.1, correct=True),
        make_record(0.1, 0.1, correct=False),
        make_record(9.0, 0.9, correct=False),
        make_record(5.0, 0.5, member=False, correct=True),
    ]
    result = magnitude_margin_table(records, bins_mag=2, bins_margin=2)
    table = result.member_table
    assert table.counts[0, 0] == 3
    assert table.mean_correct[0, 0] == pytest.approx(2.0 / 3.0)
    assert table.counts[1, 1] == 1
    assert table.mean_correct[1, 1] == 0.0
    assert np.isnan(table.mean_correct[0, 1])


def test_magnitude_margin_requires_both_classes():
    with pytest.raises(InputError):
        magnitude_margin_table([make_record(1.0, 0.5)])


def test_pearson_exact_and_degenerate():
    assert pearson([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]) == pytest.approx(1.0, abs=1e-12)
    assert pearson([1.0, 2.0, 3.0], [6.0, 4.0, 2.0]) == pytest.approx(-1.0, abs=1e-12)
    assert np.isnan(pearson([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]))
    with pytest.raises(InputError):
        pearson([1.0], [2.0])


def test_pearson_recovers_planted_correlation():
    rng = np.random.default_rng(4)
    n = 4000
    x = rng.normal(size=n)
    rho = 0.8
    y = rho * x + np.sqrt(1 - rho**2) * rng.normal(size=n)
    assert pearson(x, y) == pytest.approx(rho, abs=0.05)


def test_table_pearson_matches_direct_computation():
    rng = np.random.default_rng(5)
    records = [
        make_record(rng.uniform(0, 5), rng.uniform(0, 1), member=bool(k < 30))
        for k in range(60)
    ]
    result = magnitude_margin_table(records)
    members = [r for r in records if r.is_member]
    direct = pearson([r.magnitude for r in members], [r.margin for r in members])
    assert result.member_pearson == direct


def test_latency_bench_shape_and_validation():
    model = build_model(6, 3, hidden=(8,), seed=4)
    assert model.mode == TRAIN  # fresh models start trainable
    batch = np.random.default_rng(6).normal(size=(16, 6))
    stats = latency_bench(model, batch, iters=10, warmup=1)
    assert stats["mean_ms"] > 0.0
    assert stats["std_ms"] >= 0.0
    assert model.mode == TRAIN  # benches in Eval mode, then restores
    with pytest.raises(InputError):
        latency_bench(model, batch, iters=9)
    with pytest.raises(InputError):
        latency_bench(model, batch, warmup=0)
