"""Report assembly and plain-text serialization.

Everything a run produces lands in one directory as human-diffable
text: report.txt (flat `key = value` lines), table.csv (the six-column
accuracy/AUC table), config_echo.ini (feed it back in to reproduce),
and per-seed bin-table CSVs. No timestamps, no absolute paths: two runs
of the same configuration emit byte-identical bodies.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig, config_echo, config_items
from .diagnostics import BinTable, MagnitudeMarginResult
from .errors import ParseError

CSV_HEADER = "train_acc,test_acc,auc_nn,auc_entropy,auc_mentropy,auc_gradx"
CSV_FIELDS = CSV_HEADER.split(",")


@dataclass
class SeedResult:
    """Everything measured for one (target, shadow) pair."""

    seed: int
    train_acc: float
    test_acc: float
    auc_nn: float
    auc_entropy: float
    auc_mentropy: float
    auc_gradx: float
    mentropy_threshold: float
    capacity_proxy: float | None
    diag: MagnitudeMarginResult | None
    epochs_run: int
    stopped_early: bool = False
    best_epoch: int | None = None
    loss_curve: list[float] = field(default_factory=list)
    acc_curve: list[float] = field(default_factory=list)
    # transient handles for checkpointing / attack-only reruns; never
    # serialized into the report body
    target_model: object | None = None
    shadow_model: object | None = None

    def row(self) -> dict[str, float]:
        return {
            "train_acc": self.train_acc,
            "test_acc": self.test_acc,
            "auc_nn": self.auc_nn,
            "auc_entropy": self.auc_entropy,
            "auc_mentropy": self.auc_mentropy,
            "auc_gradx": self.auc_gradx,
        }


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    digest: str
    seeds: list[SeedResult]
    magnitude_stage: str

    def mean_row(self) -> dict[str, float]:
        rows = [s.row() for s in self.seeds]
        return {k: float(np.mean([r[k] for r in rows])) for k in CSV_FIELDS}


def fmt_float(x) -> str:
    """Full-precision, round-trippable float text."""
    if x is None:
        return "none"
    return repr(float(x))


def csv_row(row: dict[str, float]) -> str:
    return ",".join(fmt_float(row[k]) for k in CSV_FIELDS)


def report_lines(report: ExperimentReport) -> list[str]:
    """The report body as ordered `key = value` pairs."""
    lines = ["format = saturnlab-report-v1"]
    lines += [f"config.{k} = {v}" for k, v in config_items(report.config)]
    lines.append(f"dataset.digest = {report.digest}")
    lines.append(f"diagnostics.magnitude_stage = {report.magnitude_stage}")
    for s in report.seeds:
        p = f"seed{s.seed}"
        for k, v in s.row().items():
            lines.append(f"{p}.{k} = {fmt_float(v)}")
        lines.append(f"{p}.mentropy_threshold = {fmt_float(s.mentropy_threshold)}")
        lines.append(f"{p}.capacity_proxy = {fmt_float(s.capacity_proxy)}")
        lines.append(f"{p}.epochs_run = {s.epochs_run}")
        lines.append(f"{p}.stopped_early = {'true' if s.stopped_early else 'false'}")
        if s.best_epoch is not None:
            lines.append(f"{p}.best_epoch = {s.best_epoch}")
        if s.diag is not None:
            lines.append(f"{p}.member_pearson = {fmt_float(s.diag.member_pearson)}")
            lines.append(f"{p}.nonmember_pearson = {fmt_float(s.diag.nonmember_pearson)}")
    if len(report.seeds) > 1:
        for k, v in report.mean_row().items():
            lines.append(f"mean.{k} = {fmt_float(v)}")
    return lines


def parse_report(text: str) -> dict[str, str]:
    """Inverse of the report body format; values stay as strings."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        key, sep, value = line.partition(" = ")
        if not sep or not key:
            raise ParseError(f"expected 'key = value', got '{line}'", line=lineno)
        if key in out:
            raise ParseError(f"duplicate key '{key}'", line=lineno)
        out[key] = value
    return out


def bin_table_csv(table: BinTable) -> str:
    """Edges plus the two cell grids, row-major, one counts/mean line pair
    per magnitude bin."""
    lines = [
        f"magnitude_stage,{table.magnitude_stage}",
        f"warning,{table.warning or ''}",
        "mag_edges," + ",".join(fmt_float(v) for v in table.mag_edges),
        "margin_edges," + ",".join(fmt_float(v) for v in table.margin_edges),
        "counts",
    ]
    for row in table.counts:
        lines.append(",".join(str(int(v)) for v in row))
    lines.append("mean_correct")
    for row in table.mean_correct:
        lines.append(",".join(fmt_float(v) for v in row))
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, out_dir) -> dict[str, str]:
    """Write every textual artifact; returns {name: relative path}.

    On any failure the files already written by this call are removed
    before the error propagates, so no partial report survives.
    """
    os.makedirs(out_dir, exist_ok=True)
    artifacts: dict[str, str] = {}

    def write(name: str, content: str):
        path = os.path.join(out_dir, name)
        try:
            with open(path, "w", encoding="ascii") as fh:
                fh.write(content)
        except OSError as e:
            raise OSError(f"cannot write report artifact {path}: {e}") from e
        artifacts[name] = name

    try:
        csv_lines = [CSV_HEADER] + [csv_row(s.row()) for s in report.seeds]
        if len(report.seeds) > 1:
            csv_lines.append(csv_row(report.mean_row()))
        write("table.csv", "\n".join(csv_lines) + "\n")
        write("config_echo.ini", config_echo(report.config))
        for s in report.seeds:
            if s.diag is None:
                continue
            write(f"seed{s.seed}_member_bins.csv", bin_table_csv(s.diag.member_table))
            write(f"seed{s.seed}_nonmember_bins.csv", bin_table_csv(s.diag.nonmember_table))

        lines = report_lines(report)
        lines += [f"artifacts.{name} = {name}" for name in sorted(artifacts)]
        write("report.txt", "\n".join(lines) + "\n")
    except Exception:
        remove_artifacts(out_dir, artifacts)
        raise
    return artifacts


def remove_artifacts(out_dir, artifacts):
    """Best-effort unlink of emitted files; used on stage failure."""
    for name in artifacts:
        path = os.path.join(out_dir, name)
        try:
            os.unlink(path)
        except OSError:
            pass
