"""Confident learning: cross-validated self-confidence and the confident joint."""

import logging
from dataclasses import dataclass, replace

import numpy as np
from cleanlab.count import compute_confident_joint, get_confident_thresholds
from cleanlab.rank import get_self_confidence_for_each_label
from sklearn.model_selection import StratifiedKFold

from hardness_bench.const import DEFAULT_CLEANLAB_FOLDS
from hardness_bench.data.dataset import Dataset
from hardness_bench.data.enums import Method
from hardness_bench.exceptions import ScoringError
from hardness_bench.helpers import derive_seed
from hardness_bench.methods.base import ScoreVector, make_score
from hardness_bench.trainer import MlpConfig, TrainConfig, init_model, predict_proba, train

_LOGGER = logging.getLogger(__name__)

SKLEARN_SEED_MODULUS = 2**32


@dataclass(frozen=True, eq=False)
class ConfidentJoint:
    """``counts[given][predicted]`` plus the per-class thresholds used to build it."""

    counts: np.ndarray
    thresholds: np.ndarray

    @property
    def off_diagonal(self) -> int:
        return int(self.counts.sum() - np.trace(self.counts))

    def to_dict(self) -> dict:
        return {"counts": self.counts.tolist(), "thresholds": self.thresholds.tolist()}


def per_class_thresholds(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Mean probability of class j over samples labeled j; classes with no samples get a value above 1."""
    return np.asarray(get_confident_thresholds(labels, probs), dtype=np.float64)


def confident_joint(probs: np.ndarray, labels: np.ndarray, k: int) -> ConfidentJoint:
    """Count each sample into (given label, most probable class meeting its threshold).

    Samples with no class meeting its threshold are left uncounted; each diagonal
    entry is at least 1.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.shape != (labels.shape[0], k):
        raise ScoringError(f"probability table shape {probs.shape} does not match {labels.shape[0]} x {k}")
    counts = compute_confident_joint(labels, probs, calibrate=False)
    return ConfidentJoint(counts=np.asarray(counts, dtype=np.int64), thresholds=per_class_thresholds(probs, labels))


def out_of_sample_probs(ds: Dataset, mcfg: MlpConfig, tcfg: TrainConfig, folds: int, seed: int) -> np.ndarray:
    """Stratified k-fold probabilities, each fold predicted by a fresh model trained on the rest."""
    if folds < 2:
        raise ScoringError(f"cleanlab needs at least 2 folds, got {folds}")
    counts = ds.class_counts
    present = np.flatnonzero(counts)
    short = [int(c) for c in present if counts[c] < folds]
    if short:
        raise ScoringError(f"classes {short} have fewer than {folds} samples for cross-validation")

    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed % SKLEARN_SEED_MODULUS)
    probs = np.empty((ds.n, ds.k))
    for fold, (train_idx, held_idx) in enumerate(splitter.split(ds.features, ds.labels)):
        fold_train = ds.subset(train_idx)
        missing = np.setdiff1d(present, np.unique(fold_train.labels))
        if missing.size:
            raise ScoringError(f"fold {fold} training split is missing classes {missing.tolist()}")
        model = init_model(replace(mcfg, seed=derive_seed(seed, "cleanlab_model", fold)), ds.d, ds.k)
        train(model, fold_train, replace(tcfg, seed=derive_seed(seed, "cleanlab_train", fold), input_grad_stride=0))
        probs[held_idx] = predict_proba(model, ds.features[held_idx])
        _LOGGER.debug("Cleanlab fold %d/%d: %d held-out samples", fold + 1, folds, held_idx.size)
    return probs


def score_cleanlab(
    ds: Dataset,
    mcfg: MlpConfig,
    tcfg: TrainConfig,
    folds: int = DEFAULT_CLEANLAB_FOLDS,
    seed: int = 0,
) -> ScoreVector:
    """Self-confidence p[y] from out-of-sample predictions; trains ``folds`` extra models."""
    probs = out_of_sample_probs(ds, mcfg, tcfg, folds, seed)
    joint = confident_joint(probs, ds.labels, ds.k)
    raw = get_self_confidence_for_each_label(ds.labels, probs)
    return make_score(Method.CLEANLAB, raw, {"confident_joint": joint.to_dict(), "folds": folds})
