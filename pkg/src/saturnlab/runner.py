"""Experiment orchestration: the split → train → attack → diagnose → emit
pipeline, parameter sweeps, checkpointing, and attack-only reruns.

Every run is deterministic given its configuration. The shadow model is
trained under the identical configuration as the target except for its
data half and seed (target seed + 1); that equality is stamped onto both
models and re-checked by the attack suite.
"""

from __future__ import annotations

import dataclasses
import os

import numpy as np

from .attacks import make_split, run_attack_suite
from .config import ExperimentConfig, config_items, parse_config
from .datasets import TabularDataset, dataset_digest, generate_synthetic, load_purchase_csv
from .defenses import EARLY_STOPPING, make_early_stopping_hook, make_loss_modifier
from .diagnostics import collect_records, magnitude_margin_table, magnitude_stage_of
from .engine import Model, OptimizerState, train_epochs
from .errors import ConfigError, NumericError, StageError, StateError
from .reporting import ExperimentReport, SeedResult, emit_report, parse_report, remove_artifacts
from .srcm import DESIGN_A, VANILLA, build_model, capacity_proxy

STAGES = ("split", "train_target", "train_shadow", "attack", "diagnose", "emit")


def save_checkpoint(model: Model, path):
    """One ascii manifest line (name:shape per tensor), then the flat
    little-endian float64 payload in manifest order."""
    items = model.param_items()
    manifest = " ".join(
        f"layer{i}.{name}:{'x'.join(str(s) for s in arr.shape)}" for i, name, arr in items
    )
    with open(path, "wb") as fh:
        fh.write((manifest + "\n").encode("ascii"))
        for _, _, arr in items:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(model: Model, path):
    """Fill the model's parameters in place; shapes must match exactly."""
    with open(path, "rb") as fh:
        manifest = fh.readline().decode("ascii").strip()
        payload = fh.read()
    tokens = manifest.split()
    items = model.param_items()
    if len(tokens) != len(items):
        raise StateError(
            f"checkpoint holds {len(tokens)} tensors, model has {len(items)}"
        )
    data = np.frombuffer(payload, dtype="<f8")
    offset = 0
    for token, (i, name, arr) in zip(tokens, items):
        tname, _, shape_text = token.partition(":")
        want = f"layer{i}.{name}"
        shape = tuple(int(v) for v in shape_text.split("x"))
        if tname != want or shape != arr.shape:
            raise StateError(
                f"checkpoint tensor {tname}:{shape} does not match model {want}:{arr.shape}"
            )
        count = int(np.prod(shape))
        if offset + count > data.size:
            raise StateError("checkpoint payload truncated")
        arr[...] = data[offset : offset + count].reshape(shape)
        offset += count
    if offset != data.size:
        raise StateError(f"checkpoint payload has {data.size - offset} trailing values")


def build_train_stamp(cfg: ExperimentConfig, seed: int, data_half: str) -> dict:
    """Everything the adaptive contract compares, plus the excluded pair."""
    stamp = {f"config.{k}": v for k, v in config_items(cfg)}
    stamp["seed"] = seed
    stamp["data_half"] = data_half
    return stamp


def build_dataset(cfg: ExperimentConfig) -> TabularDataset:
    ds_cfg = cfg.dataset
    if ds_cfg.source == "file":
        return load_purchase_csv(ds_cfg.path)
    seed = ds_cfg.seed if ds_cfg.seed is not None else cfg.run.seed
    return generate_synthetic(ds_cfg.n, ds_cfg.d, ds_cfg.classes, ds_cfg.flip_prob, seed)


def _model_from_config(cfg: ExperimentConfig, input_dim: int, num_classes: int, seed: int) -> Model:
    return build_model(
        input_dim,
        num_classes,
        design=cfg.model.head_design,
        cfg=cfg.srcm,
        hidden=tuple(cfg.model.hidden),
        activation=cfg.model.activation,
        seed=seed,
    )


def train_member_model(cfg: ExperimentConfig, part: TabularDataset, seed: int, data_half: str):
    """Train one half's model under the configured defense.

    Early stopping carves its validation split out of these training
    members; the membership-evaluation sets never enter here.
    """
    model = _model_from_config(cfg, part.input_dim, part.num_classes, seed)
    opt = OptimizerState(cfg.optimizer.lr, cfg.optimizer.momentum, cfg.optimizer.weight_decay)
    x, y = part.features, part.labels
    kwargs = {}
    if cfg.defense.kind == EARLY_STOPPING:
        rng = np.random.default_rng(seed)
        k = max(1, int(round(cfg.defense.val_fraction * len(y))))
        perm = rng.permutation(len(y))
        val, keep = perm[:k], perm[k:]
        kwargs = dict(
            eval_x=x[val],
            eval_y=y[val],
            stop_check=make_early_stopping_hook(cfg.defense.patience, cfg.defense.min_delta),
        )
        x, y = x[keep], y[keep]
    log = train_epochs(
        model,
        x,
        y,
        opt,
        cfg.run.epochs,
        loss_modifier=make_loss_modifier(cfg.defense),
        batch_size=cfg.run.batch_size,
        seed=seed,
        **kwargs,
    )
    model.train_stamp = build_train_stamp(cfg, seed, data_half)
    return model, log


def _capacity_for(cfg: ExperimentConfig) -> float | None:
    """Annulus capacity in the dimension SR actually acts in."""
    if cfg.srcm is None or cfg.model.head_design == VANILLA:
        return None
    if cfg.model.head_design == DESIGN_A:
        n = cfg.dataset.classes
    else:
        n = cfg.srcm.hidden_width or cfg.model.hidden[-1]
    try:
        return capacity_proxy(int(n), cfg.srcm.r1, cfg.srcm.d)
    except NumericError:
        return None


def run_experiment(cfg: ExperimentConfig, out_dir=None, stage_hook=None) -> ExperimentReport:
    """Full pipeline; writes artifacts only when out_dir is given.

    stage_hook, when provided, is called with each stage name as it
    begins: split, then per seed train_target / train_shadow / attack /
    diagnose, then emit.
    """

    def enter(name: str):
        if stage_hook is not None:
            stage_hook(name)

    enter("split")
    try:
        ds = build_dataset(cfg)
        digest = dataset_digest(ds)
        seeds = [cfg.run.seed + k for k in range(cfg.run.repeat)]
        splits = {seed: make_split(len(ds), seed) for seed in seeds}
    except Exception as e:
        raise StageError("split", e) from e

    results = []
    for seed in seeds:
        split = splits[seed]

        enter("train_target")
        try:
            target, tlog = train_member_model(cfg, ds.take(split.target_train), seed, "target")
        except Exception as e:
            raise StageError("train_target", e) from e

        enter("train_shadow")
        try:
            shadow, _ = train_member_model(cfg, ds.take(split.shadow_train), seed + 1, "shadow")
        except Exception as e:
            raise StageError("train_shadow", e) from e

        enter("attack")
        try:
            attack_rep = run_attack_suite(target, shadow, split, ds, seed=seed)
        except Exception as e:
            raise StageError("attack", e) from e

        enter("diagnose")
        try:
            diag = diagnose_model(target, split, ds, attack_rep)
        except Exception as e:
            raise StageError("diagnose", e) from e

        results.append(
            SeedResult(
                seed=seed,
                train_acc=attack_rep.train_acc,
                test_acc=attack_rep.test_acc,
                auc_nn=attack_rep.auc_nn,
                auc_entropy=attack_rep.auc_entropy,
                auc_mentropy=attack_rep.auc_mentropy,
                auc_gradx=attack_rep.auc_gradx,
                mentropy_threshold=attack_rep.mentropy_threshold,
                capacity_proxy=_capacity_for(cfg),
                diag=diag,
                epochs_run=len(tlog.epochs),
                stopped_early=tlog.stopped_early,
                best_epoch=tlog.best_epoch,
                loss_curve=[e.loss for e in tlog.epochs],
                acc_curve=[e.train_acc for e in tlog.epochs],
                target_model=target,
                shadow_model=shadow,
            )
        )

    report = ExperimentReport(
        config=cfg,
        digest=digest,
        seeds=results,
        magnitude_stage=magnitude_stage_of(results[0].target_model) if results else "none",
    )

    if out_dir is not None:
        enter("emit")
        artifacts = {}
        try:
            artifacts = dict(emit_report(report, out_dir))
            for s in report.seeds:
                for role, model in (("target", s.target_model), ("shadow", s.shadow_model)):
                    name = f"seed{s.seed}_{role}.ckpt"
                    save_checkpoint(model, os.path.join(out_dir, name))
                    artifacts[name] = name
        except Exception as e:
            remove_artifacts(out_dir, artifacts)
            raise StageError("emit", e) from e
    return report


def diagnose_model(target: Model, split, ds: TabularDataset, attack_rep):
    """Per-sample records over the target's evaluation sets, binned.

    Attack correctness uses the modified-entropy attack thresholded at
    the shadow-fitted median: predicted member iff score >= threshold.
    """
    thr = attack_rep.mentropy_threshold
    ment = attack_rep.results["mentropy"]
    correct_members = ment.member_scores >= thr
    correct_nonmembers = ment.nonmember_scores < thr
    tr = ds.take(split.target_train)
    te = ds.take(split.target_test)
    records = collect_records(
        target, tr.features, tr.labels, True, split.target_train, correct_members
    ) + collect_records(
        target, te.features, te.labels, False, split.target_test, correct_nonmembers
    )
    return magnitude_margin_table(records, magnitude_stage=magnitude_stage_of(target))


TREND_HEADER = "r1,d,train_acc,test_acc,auc_nn,auc_entropy,auc_mentropy,auc_gradx"


def sweep_subconfig(cfg: ExperimentConfig, r1: float, d: float) -> ExperimentConfig:
    srcm = dataclasses.replace(cfg.srcm, r1=r1, d=d)
    return dataclasses.replace(cfg, srcm=srcm)


def run_sweep(cfg: ExperimentConfig, out_dir=None, stage_hook=None):
    """Grid sweep over (sweep_r1 x sweep_d); one sub-experiment each.

    Returns (trend_rows, reports); trend_rows carry the mean metrics
    per grid point in grid order.
    """
    if cfg.model.head_design == VANILLA or cfg.srcm is None:
        raise ConfigError("sweep needs an annulus head (design_a, design_b, or srcm)")
    trend_rows = []
    reports = []
    for d in cfg.run.sweep_d:
        for r1 in cfg.run.sweep_r1:
            sub = sweep_subconfig(cfg, r1, d)
            sub_out = None
            if out_dir is not None:
                sub_out = os.path.join(out_dir, f"r1_{r1:g}_d_{d:g}")
            rep = run_experiment(sub, sub_out, stage_hook)
            row = rep.mean_row()
            row.update({"r1": r1, "d": d})
            trend_rows.append(row)
            reports.append(rep)
    if out_dir is not None:
        fields = TREND_HEADER.split(",")
        lines = [TREND_HEADER]
        for row in trend_rows:
            lines.append(",".join(repr(float(row[f])) for f in fields))
        with open(os.path.join(out_dir, "trend.csv"), "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")
    return trend_rows, reports


def load_run(run_dir):
    """Rebuild (cfg, dataset, per-seed target/shadow models) from a run
    directory written by run_experiment."""
    echo_path = os.path.join(run_dir, "config_echo.ini")
    report_path = os.path.join(run_dir, "report.txt")
    if not os.path.exists(echo_path) or not os.path.exists(report_path):
        raise StateError(f"{run_dir} does not contain a completed run")
    with open(echo_path, "r", encoding="ascii") as fh:
        cfg = parse_config(fh.read())
    with open(report_path, "r", encoding="ascii") as fh:
        report_keys = parse_report(fh.read())
    ds = build_dataset(cfg)
    digest = dataset_digest(ds)
    recorded = report_keys.get("dataset.digest")
    if recorded is not None and recorded != digest:
        raise StateError(
            "dataset rebuilt for this run no longer matches the recorded digest; "
            "the underlying data changed"
        )
    pairs = []
    for k in range(cfg.run.repeat):
        seed = cfg.run.seed + k
        target = _model_from_config(cfg, ds.input_dim, ds.num_classes, seed)
        load_checkpoint(target, os.path.join(run_dir, f"seed{seed}_target.ckpt"))
        target.train_stamp = build_train_stamp(cfg, seed, "target")
        target.eval()
        shadow = _model_from_config(cfg, ds.input_dim, ds.num_classes, seed + 1)
        load_checkpoint(shadow, os.path.join(run_dir, f"seed{seed}_shadow.ckpt"))
        shadow.train_stamp = build_train_stamp(cfg, seed + 1, "shadow")
        shadow.eval()
        pairs.append((seed, target, shadow))
    return cfg, ds, pairs


def attack_saved_run(run_dir):
    """Re-run the attack suite against a stored run; no retraining."""
    cfg, ds, pairs = load_run(run_dir)
    out = []
    for seed, target, shadow in pairs:
        split = make_split(len(ds), seed)
        out.append((seed, run_attack_suite(target, shadow, split, ds, seed=seed)))
    return out


def diagnose_saved_run(run_dir):
    """Recompute the magnitude/margin tables for a stored run."""
    cfg, ds, pairs = load_run(run_dir)
    out = []
    for seed, target, shadow in pairs:
        split = make_split(len(ds), seed)
        attack_rep = run_attack_suite(target, shadow, split, ds, seed=seed)
        out.append((seed, diagnose_model(target, split, ds, attack_rep)))
    return out
