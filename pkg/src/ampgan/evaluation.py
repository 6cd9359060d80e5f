"""Confusion-matrix metrics, Monte-Carlo cross-validation and experiment runs."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import classifiers as clf
from .gan import REAL, SYNTHETIC, GanConfig, balance_dataset

log = logging.getLogger(__name__)

BALANCE_MODES = ("off", "per_fold", "paper_faithful")
ENSEMBLE = "ensemble"


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise EvaluationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(y_true, y_pred) -> ConfusionMatrix:
    t = np.asarray(y_true)
    p = np.asarray(y_pred)
    if t.shape != p.shape or t.ndim != 1:
        raise EvaluationError(f"y_true and y_pred must be 1-D of equal length, got {t.shape} and {p.shape}")
    if len(t) == 0:
        raise EvaluationError("cannot score an empty prediction")
    for name, a in (("y_true", t), ("y_pred", p)):
        if not np.isin(a, (0, 1)).all():
            raise EvaluationError(f"{name} must contain only 0 and 1")
    t, p = t.astype(bool), p.astype(bool)
    return ConfusionMatrix(int(np.sum(t & p)), int(np.sum(~t & ~p)), int(np.sum(~t & p)), int(np.sum(t & ~p)))


def mcc(cm: ConfusionMatrix) -> float:
    """Matthews correlation coefficient; 0 when any marginal is empty."""
    # integer arithmetic keeps perfect and inverted predictions exactly at +-1
    num = cm.tp * cm.tn - cm.fp * cm.fn
    den_sq = (cm.tp + cm.fp) * (cm.tp + cm.fn) * (cm.tn + cm.fp) * (cm.tn + cm.fn)
    if den_sq == 0:
        return 0.0
    if num * num == den_sq:
        return 1.0 if num > 0 else -1.0
    return num / math.sqrt(den_sq)


def accuracy_f1(cm: ConfusionMatrix) -> tuple[float, float]:
    if cm.total == 0:
        raise EvaluationError("accuracy is undefined for an empty confusion matrix")
    acc = (cm.tp + cm.tn) / cm.total
    denom = 2 * cm.tp + cm.fp + cm.fn
    return acc, (2 * cm.tp / denom if denom else 0.0)


# -- Monte-Carlo cross-validation --------------------------------------------

@dataclass
class SplitPlan:
    folds: list  # (train indices, test indices) per fold
    seed: int
    test_fraction: float = 0.2


def n_test_for(n_class: int, fraction: float) -> int:
    """Nearest-integer test count, at least one and leaving one for training."""
    return min(max(1, math.floor(fraction * n_class + 0.5)), n_class - 1)


def mccv_splits(labels, n_folds: int = 5, test_fraction: float = 0.2, seed: int = 0) -> SplitPlan:
    """Independent stratified shuffle-splits, one per fold."""
    y = np.asarray(labels)
    if not 0 < test_fraction < 1:
        raise EvaluationError("test_fraction must be in (0, 1)")
    classes = np.unique(y)
    for c in classes:
        if np.sum(y == c) < 2:
            raise EvaluationError(f"class {c} has fewer than 2 members; cannot stratify")
    folds = []
    for child in np.random.SeedSequence(seed).spawn(n_folds):
        rng = np.random.default_rng(child)
        test = []
        for c in classes:
            members = np.flatnonzero(y == c)
            test.append(rng.permutation(members)[: n_test_for(len(members), test_fraction)])
        test = np.sort(np.concatenate(test))
        mask = np.ones(len(y), dtype=bool)
        mask[test] = False
        folds.append((np.flatnonzero(mask), test))
    return SplitPlan(folds, seed, test_fraction)


# -- experiment runs ---------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    confusion: ConfusionMatrix
    mcc: float
    accuracy: float
    f1: float
    n_train: int
    n_test: int
    n_synthetic_train: int = 0
    n_synthetic_test: int = 0
    wall_time: float = 0.0

    @classmethod
    def score(cls, fold, y_true, y_pred, **extra) -> "FoldResult":
        cm = confusion(y_true, y_pred)
        acc, f1 = accuracy_f1(cm)
        return cls(fold, cm, mcc(cm), acc, f1, **extra)


@dataclass
class EvaluationReport:
    dataset: str
    encoders: list
    balanced: bool
    balance_mode: str
    classifier: str
    folds: list = field(default_factory=list)
    seed: int = 0

    @property
    def tag(self) -> str:
        return "+G" if self.balanced else "-G"

    @property
    def mcc_values(self) -> np.ndarray:
        return np.array([f.mcc for f in self.folds])

    @property
    def mean_mcc(self) -> float:
        return float(np.mean(self.mcc_values))

    @property
    def std_mcc(self) -> float:
        # sample standard deviation across folds
        v = self.mcc_values
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset, "encoders": list(self.encoders), "balance": self.tag,
            "balance_mode": self.balance_mode, "classifier": self.classifier, "seed": self.seed,
            "folds": [{**asdict(f), "confusion": asdict(f.confusion)} for f in self.folds],
            "mean_mcc": self.mean_mcc, "std_mcc": self.std_mcc,
            "mean_accuracy": float(np.mean([f.accuracy for f in self.folds])),
            "mean_f1": float(np.mean([f.f1 for f in self.folds])),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvaluationReport":
        folds = [FoldResult(**{**f, "confusion": ConfusionMatrix(**f["confusion"])}) for f in d["folds"]]
        return cls(d["dataset"], d["encoders"], d["balance"] == "+G", d["balance_mode"],
                   d["classifier"], folds, d.get("seed", 0))


@dataclass
class ExperimentConfig:
    classifiers: list = field(default_factory=lambda: list(clf.KINDS))
    ensemble: bool = True
    stacking_mode: str = "paper"
    hyper: dict = field(default_factory=dict)  # kind -> overrides
    gan: GanConfig = field(default_factory=GanConfig)
    n_folds: int = 5
    test_fraction: float = 0.2


def _base_specs(cfg: ExperimentConfig, seed_seq) -> list:
    seeds = seed_seq.generate_state(len(cfg.classifiers))
    return [clf.ClassifierSpec(kind, dict(cfg.hyper.get(kind, {})), int(s))
            for kind, s in zip(cfg.classifiers, seeds)]


def _fit_and_predict(specs, meta_spec, Xtr, ytr, Xte, cfg, want_ensemble):
    """Predicted test labels per base classifier name and for the ensemble."""
    preds, bases = {}, []
    for spec in specs:
        model = clf.train(spec, Xtr, ytr)
        bases.append(model)
        preds[spec.kind] = clf.predict(model, Xte)
    if want_ensemble:
        if cfg.stacking_mode == "paper":
            stack = clf.stack_from_bases(bases, meta_spec, Xtr, ytr)
        else:
            stack = clf.train_stacking(specs, meta_spec, Xtr, ytr, mode=cfg.stacking_mode)
        preds[ENSEMBLE] = clf.predict(stack, Xte)
    return preds


def run_experiment(features, labels, dataset: str = "dataset", encoders=(), balance: str = "off",
                   cfg: ExperimentConfig | None = None, seed: int = 0) -> dict:
    """Score every configured classifier (and the ensemble) under MCCV.

    ``features`` is the encoded matrix of the whole dataset; encoders are
    per-sequence functions, so slicing it per fold equals encoding each
    fold's sequences separately. Returns ``{classifier name: report}``.

    With ``per_fold`` balancing the GAN sees only the training rows of each
    fold and synthetic rows are appended to training only. ``paper_faithful``
    balances the whole matrix first and then splits, so synthetic rows can
    land in test sets; reports record which mode was used.
    """
    cfg = cfg or ExperimentConfig()
    if balance not in BALANCE_MODES:
        raise EvaluationError(f"unknown balance mode {balance!r}")
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=int)
    root = np.random.SeedSequence(seed)
    split_seq, clf_seq, gan_seq = root.spawn(3)
    specs = _base_specs(cfg, clf_seq)
    meta_spec = clf.ClassifierSpec("logistic", dict(cfg.hyper.get("meta", {})), int(clf_seq.generate_state(1)[0]))
    split_seed = int(split_seq.generate_state(1)[0])

    provenance = np.array([REAL] * len(y), dtype=object)
    if balance == "paper_faithful":
        bal = balance_dataset(X, y, _gan_cfg(cfg.gan, gan_seq, 0))
        X, y, provenance = bal.features, bal.labels, np.array(bal.provenance, dtype=object)
    plan = mccv_splits(y, cfg.n_folds, cfg.test_fraction, split_seed)

    names = [s.kind for s in specs] + ([ENSEMBLE] if cfg.ensemble else [])
    reports = {n: EvaluationReport(dataset, list(encoders), balance != "off", balance, n, [], seed) for n in names}
    for k, (tr, te) in enumerate(plan.folds):
        start = time.perf_counter()
        try:
            Xtr, ytr, prov_tr = X[tr], y[tr], provenance[tr]
            if balance == "per_fold":
                bal = balance_dataset(Xtr, ytr, _gan_cfg(cfg.gan, gan_seq, k))
                Xtr, ytr = bal.features, bal.labels
                prov_tr = np.array(bal.provenance, dtype=object)
            preds = _fit_and_predict(specs, meta_spec, Xtr, ytr, X[te], cfg, cfg.ensemble)
        except Exception as exc:
            raise EvaluationError(f"{dataset}: fold {k} failed: {exc}") from exc
        elapsed = time.perf_counter() - start
        extra = dict(n_train=len(ytr), n_test=len(te), n_synthetic_train=int(np.sum(prov_tr == SYNTHETIC)),
                     n_synthetic_test=int(np.sum(provenance[te] == SYNTHETIC)), wall_time=elapsed)
        for n in names:
            reports[n].folds.append(FoldResult.score(k, y[te], preds[n], **extra))
        log.info("%s %s fold %d done in %.1fs", dataset, balance, k, elapsed)
    return reports


def _gan_cfg(base: GanConfig, gan_seq, fold: int) -> GanConfig:
    seed = int(np.random.SeedSequence(gan_seq.entropy, spawn_key=(*gan_seq.spawn_key, fold)).generate_state(1)[0])
    return GanConfig(**{**asdict(base), "seed": seed})
