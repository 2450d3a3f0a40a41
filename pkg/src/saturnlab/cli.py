"""Command-line entry point.

Verbs: run (full pipeline), sweep (grid over annulus radii), attack
(re-attack a stored run), bench (forward-latency comparison), diagnose
(recompute magnitude/margin tables). Exit codes: 0 success, 2 for
configuration or parse problems, 3 for runtime failures.

LAB_OUT_DIR overrides the output directory; LAB_SEED overrides the
configured seed (applied during config parsing).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import parse_config
from .diagnostics import latency_bench
from .errors import ConfigError, ParseError, SaturnLabError
from .reporting import CSV_HEADER, bin_table_csv, csv_row, fmt_float
from .runner import (
    attack_saved_run,
    build_dataset,
    diagnose_saved_run,
    run_experiment,
    run_sweep,
    _model_from_config,
)
from .srcm import VANILLA


def _read_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    return parse_config(text)


def _out_dir(args) -> str:
    return os.environ.get("LAB_OUT_DIR") or args.out


def _print_report(report):
    print(CSV_HEADER)
    for s in report.seeds:
        print(csv_row(s.row()))
    if len(report.seeds) > 1:
        print(csv_row(report.mean_row()) + "  (mean)")


def cmd_run(args) -> int:
    cfg = _read_config(args.config)
    out = _out_dir(args)
    report = run_experiment(cfg, out_dir=out)
    _print_report(report)
    artifacts = ["report.txt", "table.csv", "config_echo.ini"]
    if not args.no_figures:
        from .figures import render_run_figures

        artifacts += render_run_figures(report, out)
    print(f"artifacts in {out}: {', '.join(artifacts)} + checkpoints")
    return 0


def cmd_sweep(args) -> int:
    cfg = _read_config(args.config)
    out = _out_dir(args)
    trend_rows, _ = run_sweep(cfg, out_dir=out)
    print("r1,d," + CSV_HEADER)
    for row in trend_rows:
        prefix = f"{row['r1']:g},{row['d']:g},"
        print(prefix + ",".join(fmt_float(row[k]) for k in CSV_HEADER.split(",")))
    if not args.no_figures:
        from .figures import render_sweep_figure

        render_sweep_figure(trend_rows, out)
    print(f"sweep artifacts in {out}")
    return 0


def cmd_attack(args) -> int:
    results = attack_saved_run(args.run_dir)
    print("seed," + CSV_HEADER)
    for seed, rep in results:
        row = {
            "train_acc": rep.train_acc,
            "test_acc": rep.test_acc,
            "auc_nn": rep.auc_nn,
            "auc_entropy": rep.auc_entropy,
            "auc_mentropy": rep.auc_mentropy,
            "auc_gradx": rep.auc_gradx,
        }
        print(f"{seed}," + csv_row(row))
    return 0


def cmd_bench(args) -> int:
    cfg = _read_config(args.config)
    ds = build_dataset(cfg)
    rng = np.random.default_rng(cfg.run.seed)
    batch = ds.features[rng.permutation(len(ds))[: args.batch]]
    results = {}
    configured = _model_from_config(cfg, ds.input_dim, ds.num_classes, cfg.run.seed)
    results[cfg.model.head_design] = latency_bench(configured, batch, args.iters, args.warmup)
    if cfg.model.head_design != VANILLA:
        import dataclasses

        vanilla_cfg = dataclasses.replace(
            cfg, model=dataclasses.replace(cfg.model, head_design=VANILLA), srcm=None
        )
        baseline = _model_from_config(vanilla_cfg, ds.input_dim, ds.num_classes, cfg.run.seed)
        results[VANILLA] = latency_bench(baseline, batch, args.iters, args.warmup)
    for name, stats in results.items():
        print(f"{name}: {stats['mean_ms']:.3f} ms +- {stats['std_ms']:.3f} ms")
    if VANILLA in results and cfg.model.head_design != VANILLA:
        ratio = results[cfg.model.head_design]["mean_ms"] / results[VANILLA]["mean_ms"]
        print(f"overhead ratio vs vanilla: {ratio:.4f}")
    if args.out is not None or os.environ.get("LAB_OUT_DIR"):
        out = _out_dir(args)
        os.makedirs(out, exist_ok=True)
        if not args.no_figures:
            from .figures import latency_figure

            latency_figure(results, out)
        lines = [f"{n},{fmt_float(s['mean_ms'])},{fmt_float(s['std_ms'])}" for n, s in results.items()]
        with open(os.path.join(out, "bench.csv"), "w", encoding="ascii") as fh:
            fh.write("head,mean_ms,std_ms\n" + "\n".join(lines) + "\n")
        print(f"bench artifacts in {out}")
    return 0


def cmd_diagnose(args) -> int:
    results = diagnose_saved_run(args.run_dir)
    out = os.environ.get("LAB_OUT_DIR") or args.out or args.run_dir
    os.makedirs(out, exist_ok=True)
    stage = None
    for seed, diag in results:
        print(
            f"seed {seed}: member pearson {fmt_float(diag.member_pearson)}, "
            f"non-member pearson {fmt_float(diag.nonmember_pearson)}"
        )
        with open(os.path.join(out, f"seed{seed}_member_bins.csv"), "w", encoding="ascii") as fh:
            fh.write(bin_table_csv(diag.member_table))
        with open(os.path.join(out, f"seed{seed}_nonmember_bins.csv"), "w", encoding="ascii") as fh:
            fh.write(bin_table_csv(diag.nonmember_table))
        stage = diag.member_table.magnitude_stage
    if not args.no_figures and results:
        from .figures import render_bin_tables

        render_bin_tables(results, out, stage)
    print(f"diagnostics in {out}")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="saturnlab",
        description="Membership-privacy laboratory for annulus-projected classifiers",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, config=True, out_default="runs"):
        if config:
            p.add_argument("-c", "--config", required=True, help="experiment config file")
        p.add_argument("-o", "--out", default=out_default, help="output directory")
        p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")

    p_run = sub.add_parser("run", help="full train/attack/diagnose pipeline")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="grid sweep over (r1, d)")
    common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_attack = sub.add_parser("attack", help="re-run attacks on a stored run")
    p_attack.add_argument("-d", "--run-dir", required=True, help="directory of a completed run")
    p_attack.set_defaults(func=cmd_attack)

    p_bench = sub.add_parser("bench", help="forward-latency comparison vs vanilla head")
    common(p_bench, out_default=None)
    p_bench.add_argument("--iters", type=int, default=100)
    p_bench.add_argument("--warmup", type=int, default=10)
    p_bench.add_argument("--batch", type=int, default=128)
    p_bench.set_defaults(func=cmd_bench)

    p_diag = sub.add_parser("diagnose", help="recompute magnitude/margin tables")
    p_diag.add_argument("-d", "--run-dir", required=True, help="directory of a completed run")
    p_diag.add_argument("-o", "--out", default=None, help="output directory (default: run dir)")
    p_diag.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p_diag.set_defaults(func=cmd_diagnose)

    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (SaturnLabError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
