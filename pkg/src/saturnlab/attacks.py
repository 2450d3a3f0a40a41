"""Membership-inference attacks and the shadow-model harness.

Four attacks, each emitting a per-sample score where higher means more
member-like: negated prediction entropy, negated modified entropy,
negated input-gradient norm, and a trained neural attacker. AUC over
member vs non-member scores is the reported metric throughout. The
attacker and every fitted threshold see only the shadow half of the
data; the target half appears exclusively at evaluation time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import PredictionRecord
from .engine import (
    Dense,
    Dropout,
    Model,
    OptimizerState,
    ReLU,
    model_backward,
    model_forward,
    predict_probs,
    sgd_step,
    sigmoid_binary_cross_entropy,
    softmax_cross_entropy,
)
from .errors import ContractError, InputError, ShapeError

LOG_EPS = 1e-12
MAX_ATTACK_FEATURES = 100


@dataclass
class MembershipSplit:
    """Four pairwise-disjoint index sets over one dataset.

    Target and shadow halves are equal-sized; within each half, train
    (member) and test (non-member) quarters are equal-sized. `dropped`
    counts trailing samples discarded to reach divisibility by 4.
    """

    target_train: np.ndarray
    target_test: np.ndarray
    shadow_train: np.ndarray
    shadow_test: np.ndarray
    dropped: int = 0


def make_split(n: int, seed: int = 0) -> MembershipSplit:
    if n < 4:
        raise InputError(f"need at least 4 samples to split, got {n}")
    usable = n - (n % 4)
    perm = np.random.default_rng(seed).permutation(n)[:usable]
    q = usable // 4
    return MembershipSplit(
        target_train=np.sort(perm[:q]),
        target_test=np.sort(perm[q : 2 * q]),
        shadow_train=np.sort(perm[2 * q : 3 * q]),
        shadow_test=np.sort(perm[3 * q :]),
        dropped=n - usable,
    )


def _check_probs(p: np.ndarray):
    if np.any(p < 0):
        raise InputError("negative probability")
    sums = p.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise InputError(f"probability rows must sum to 1 within 1e-6 (worst: {sums[np.argmax(np.abs(sums - 1.0))]})")


def entropy_score(p) -> float | np.ndarray:
    """Negated Shannon entropy: sum p ln p, with 0 ln 0 := 0.

    Higher = more confident = more member-like. Accepts one probability
    vector (returns a float) or a row matrix (returns a vector).
    """
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    if single:
        p = p[np.newaxis, :]
    _check_probs(p)
    terms = np.where(p > 0.0, p * np.log(np.maximum(p, LOG_EPS)), 0.0)
    out = terms.sum(axis=1)
    return float(out[0]) if single else out


def mentropy_score(p, y) -> float | np.ndarray:
    """Negated modified entropy, membership-aware confidence measure.

    Mentr(p, y) = -(1 - p_y) ln(p_y) - sum_{i != y} p_i ln(1 - p_i),
    with every log clamped at ln(1e-12) so exact one-hot predictions
    stay finite. Returns -Mentr; higher = more member-like.
    """
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    if single:
        p = p[np.newaxis, :]
    y = np.atleast_1d(np.asarray(y, dtype=np.intp))
    if y.size != p.shape[0]:
        raise ShapeError(f"{p.shape[0]} probability rows but {y.size} labels")
    if y.size and (y.min() < 0 or y.max() >= p.shape[1]):
        raise InputError(f"label out of range [0, {p.shape[1]})")
    _check_probs(p)
    n = p.shape[0]
    rows = np.arange(n)
    p_y = p[rows, y]
    log_py = np.log(np.maximum(p_y, LOG_EPS))
    log_1mp = np.log(np.maximum(1.0 - p, LOG_EPS))
    total = (p * log_1mp).sum(axis=1) - p_y * log_1mp[rows, y]
    mentr = -(1.0 - p_y) * log_py - total
    out = -mentr
    return float(out[0]) if single else out


def gradx_l2_scores(model: Model, features: np.ndarray, labels) -> np.ndarray:
    """Negated l2 norm of the per-sample input gradient of the CE loss.

    Members sit in flatter loss regions, so a smaller norm reads as more
    member-like. Rows are independent in Eval mode, so one batched
    backward with unscaled per-row dlogits yields every per-sample
    gradient at once.
    """
    features = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.intp)
    mode = model.mode
    model.eval()
    out = np.empty(features.shape[0])
    batch = 512
    for start in range(0, features.shape[0], batch):
        stop = min(start + batch, features.shape[0])
        logits, _, caches = model_forward(model, features[start:stop])
        _, probs, _ = softmax_cross_entropy(logits, y[start:stop])
        dlogits = probs.copy()
        dlogits[np.arange(stop - start), y[start:stop]] -= 1.0
        _, dx = model_backward(model, caches, dlogits, want_input_grad=True, want_param_grads=False)
        out[start:stop] = -np.sqrt((dx * dx).sum(axis=1))
    model.mode = mode
    return out


def gradx_l2_score(model: Model, x, y) -> float:
    """Single-sample form of gradx_l2_scores."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    return float(gradx_l2_scores(model, x, np.atleast_1d(y))[0])


def attack_features(probs: np.ndarray, num_classes: int) -> np.ndarray:
    """Neural-attacker input: softmax probabilities sorted descending.

    Width is capped at MAX_ATTACK_FEATURES; sorting removes any label
    permutation signal, leaving pure confidence shape.
    """
    probs = np.asarray(probs, dtype=np.float64)
    width = min(num_classes, MAX_ATTACK_FEATURES)
    feats = np.sort(probs, axis=1)[:, ::-1][:, :width]
    if feats.shape[1] < width:
        feats = np.pad(feats, ((0, 0), (0, width - feats.shape[1])))
    return feats


def build_attacker(input_dim: int, seed: int, dropout: float = 0.2) -> Model:
    """Four dense layers, hidden [128, 64, 64], ReLU and dropout, one logit out."""
    rng = np.random.default_rng(seed)
    layers = []
    widths = [input_dim, 128, 64, 64]
    for fan_in, fan_out in zip(widths, widths[1:]):
        layers.extend([Dense(fan_in, fan_out, rng), ReLU(), Dropout(dropout)])
    layers.append(Dense(widths[-1], 1, rng))
    return Model(layers, head_design="attacker", seed=seed)


def train_nn_attacker(
    shadow_records: list[PredictionRecord],
    seed: int = 0,
    epochs: int = 50,
    batch_size: int = 64,
    lr: float = 0.01,
) -> Model:
    """Fit the neural attacker on shadow-model outputs.

    Features come from each record's probability vector; the target is
    its ground-truth membership flag. Deterministic given seed.
    """
    if not shadow_records:
        raise InputError("no shadow records to train on")
    num_classes = shadow_records[0].probs.shape[0]
    x = attack_features(np.vstack([r.probs for r in shadow_records]), num_classes)
    t = np.array([float(r.is_member) for r in shadow_records])
    if t.min() == t.max():
        raise InputError("shadow records are single-class; attacker training is degenerate")
    attacker = build_attacker(x.shape[1], seed)
    opt = OptimizerState(learning_rate=lr, momentum=0.9, weight_decay=0.0)
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    attacker.train()
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            logits, _, caches = model_forward(attacker, x[idx], rng)
            _, _, dlogits = sigmoid_binary_cross_entropy(logits, t[idx])
            grads, _ = model_backward(attacker, caches, dlogits)
            sgd_step(attacker, grads, opt)
    attacker.eval()
    return attacker


def nn_attack_scores(attacker: Model, probs: np.ndarray, num_classes: int) -> np.ndarray:
    """Raw membership logits; monotone in membership probability."""
    x = attack_features(probs, num_classes)
    mode = attacker.mode
    attacker.eval()
    logits, _, _ = model_forward(attacker, x)
    attacker.mode = mode
    return logits[:, 0]


@dataclass
class AttackScore:
    sample_id: int
    score: float
    is_member: bool


def auc(scores) -> float:
    """Tied-rank Mann-Whitney AUC over AttackScore items.

    Equals the fraction of (member, non-member) pairs where the member
    scores strictly higher, ties weighted one half. Exact: rank sums
    stay half-integer.
    """
    vals = np.array([s.score for s in scores], dtype=np.float64)
    flags = np.array([bool(s.is_member) for s in scores])
    return auc_from_arrays(vals, flags)


def auc_from_arrays(values: np.ndarray, member_flags: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64)
    member_flags = np.asarray(member_flags, dtype=bool)
    if not np.all(np.isfinite(values)):
        raise InputError("attack scores must be finite")
    m = int(member_flags.sum())
    n = int((~member_flags).sum())
    if m == 0 or n == 0:
        raise InputError("AUC needs at least one member and one non-member score")
    _, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    before = np.concatenate(([0], np.cumsum(counts)))[:-1]
    avg_rank = before + (counts + 1) / 2.0
    ranks = avg_rank[inverse]
    member_rank_sum = ranks[member_flags].sum()
    u = member_rank_sum - m * (m + 1) / 2.0
    return float(u / (m * n))


@dataclass
class AttackResult:
    """Scores for one attack, split by ground truth, plus the AUC."""

    member_scores: np.ndarray
    nonmember_scores: np.ndarray
    auc: float


@dataclass
class AttackReport:
    train_acc: float
    test_acc: float
    auc_nn: float
    auc_entropy: float
    auc_mentropy: float
    auc_gradx: float
    mentropy_threshold: float
    results: dict = field(default_factory=dict)

    def aucs(self) -> dict[str, float]:
        return {
            "nn": self.auc_nn,
            "entropy": self.auc_entropy,
            "mentropy": self.auc_mentropy,
            "gradx": self.auc_gradx,
        }


def check_adaptive_contract(target: Model, shadow: Model):
    """Shadow must mirror the target in everything but data half and seed."""
    ts, ss = target.train_stamp, shadow.train_stamp
    if ts is not None and ss is not None:
        skip = {"seed", "data_half"}
        keys = set(ts) | set(ss)
        bad = [k for k in sorted(keys - skip) if ts.get(k) != ss.get(k)]
        if bad:
            raise ContractError(f"target/shadow training configs differ in: {', '.join(bad)}")
    if target.signature() != shadow.signature():
        raise ContractError("target and shadow architectures differ")


def _result(member_scores: np.ndarray, nonmember_scores: np.ndarray) -> AttackResult:
    values = np.concatenate([member_scores, nonmember_scores])
    flags = np.concatenate([np.ones(len(member_scores), bool), np.zeros(len(nonmember_scores), bool)])
    return AttackResult(member_scores, nonmember_scores, auc_from_arrays(values, flags))


def run_attack_suite(
    target: Model,
    shadow: Model,
    split: MembershipSplit,
    dataset,
    seed: int = 0,
    standardize_per_class: bool = False,
) -> AttackReport:
    """Evaluate all four attacks on the target using shadow-fitted pieces.

    Members are the target's training rows, non-members its test rows.
    With standardize_per_class, metric scores are shifted by the shadow
    half's per-class mean before AUC.
    """
    check_adaptive_contract(target, shadow)
    tr = dataset.take(split.target_train)
    te = dataset.take(split.target_test)
    sh_tr = dataset.take(split.shadow_train)
    sh_te = dataset.take(split.shadow_test)

    probs_tr = predict_probs(target, tr.features)
    probs_te = predict_probs(target, te.features)
    train_acc = float(np.mean(probs_tr.argmax(axis=1) == tr.labels))
    test_acc = float(np.mean(probs_te.argmax(axis=1) == te.labels))

    # shadow outputs: the only data any attack component is fitted on
    sprobs_tr = predict_probs(shadow, sh_tr.features)
    sprobs_te = predict_probs(shadow, sh_te.features)
    shadow_records = [
        PredictionRecord(int(i), sprobs_tr[k], int(sh_tr.labels[k]), True, 0.0, 0.0)
        for k, i in enumerate(split.shadow_train)
    ] + [
        PredictionRecord(int(i), sprobs_te[k], int(sh_te.labels[k]), False, 0.0, 0.0)
        for k, i in enumerate(split.shadow_test)
    ]
    attacker = train_nn_attacker(shadow_records, seed=seed)

    def shift(scores, labels, shadow_scores, shadow_labels):
        if not standardize_per_class:
            return scores
        out = scores.copy()
        for c in np.unique(shadow_labels):
            mask = shadow_labels == c
            out[labels == c] -= shadow_scores[mask].mean()
        return out

    shadow_labels = np.concatenate([sh_tr.labels, sh_te.labels])
    sh_ent = entropy_score(np.vstack([sprobs_tr, sprobs_te]))
    sh_ment = mentropy_score(np.vstack([sprobs_tr, sprobs_te]), shadow_labels)

    ent_m = shift(entropy_score(probs_tr), tr.labels, sh_ent, shadow_labels)
    ent_n = shift(entropy_score(probs_te), te.labels, sh_ent, shadow_labels)
    ment_m = shift(mentropy_score(probs_tr, tr.labels), tr.labels, sh_ment, shadow_labels)
    ment_n = shift(mentropy_score(probs_te, te.labels), te.labels, sh_ment, shadow_labels)
    gradx_m = gradx_l2_scores(target, tr.features, tr.labels)
    gradx_n = gradx_l2_scores(target, te.features, te.labels)
    nn_m = nn_attack_scores(attacker, probs_tr, dataset.num_classes)
    nn_n = nn_attack_scores(attacker, probs_te, dataset.num_classes)

    results = {
        "entropy": _result(ent_m, ent_n),
        "mentropy": _result(ment_m, ment_n),
        "gradx": _result(gradx_m, gradx_n),
        "nn": _result(nn_m, nn_n),
    }
    return AttackReport(
        train_acc=train_acc,
        test_acc=test_acc,
        auc_nn=results["nn"].auc,
        auc_entropy=results["entropy"].auc,
        auc_mentropy=results["mentropy"].auc,
        auc_gradx=results["gradx"].auc,
        mentropy_threshold=float(np.median(sh_ment)),
        results=results,
    )
