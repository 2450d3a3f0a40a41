"""Membership-privacy laboratory.

A from-scratch feedforward engine, an annulus-projection activation with
a magnitude-normalized classifier head, four membership-inference
attacks under a shadow-model harness, baseline defenses, and the
diagnostics connecting representation magnitude to privacy leakage.
"""

from .attacks import (
    AttackReport,
    AttackScore,
    MembershipSplit,
    auc,
    entropy_score,
    gradx_l2_score,
    gradx_l2_scores,
    make_split,
    mentropy_score,
    run_attack_suite,
    train_nn_attacker,
)
from .config import (
    DatasetConfig,
    ExperimentConfig,
    ModelConfig,
    OptimizerConfig,
    RunConfig,
    config_echo,
    parse_config,
)
from .datasets import TabularDataset, dataset_digest, generate_synthetic, load_purchase_csv
from .defenses import (
    DefenseConfig,
    confidence_penalty_loss,
    early_stopping_check,
    label_smoothing_loss,
)
from .diagnostics import (
    BinTable,
    PredictionRecord,
    collect_records,
    latency_bench,
    magnitude_margin_table,
    margin,
)
from .engine import (
    Dense,
    Dropout,
    Model,
    OptimizerState,
    ReLU,
    Tanh,
    model_backward,
    model_forward,
    sgd_step,
    softmax_cross_entropy,
    train_epochs,
)
from .errors import (
    ConfigError,
    ContractError,
    InputError,
    NumericError,
    ParseError,
    SaturnLabError,
    ShapeError,
    StageError,
    StateError,
)
from .reporting import ExperimentReport, SeedResult, emit_report, parse_report
from .runner import load_checkpoint, run_experiment, run_sweep, save_checkpoint
from .srcm import (
    LinearNorm,
    SRActivation,
    SrcmConfig,
    build_head,
    build_model,
    capacity_proxy,
    linearnorm_backward,
    linearnorm_forward,
    sr_backward,
    sr_forward,
)

__version__ = "0.1.0"
