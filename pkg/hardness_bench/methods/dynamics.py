"""Scorers computed purely from a recorded training run."""

import logging

import numpy as np

from hardness_bench.data.enums import DistanceMetric, Method
from hardness_bench.exceptions import ScoringError
from hardness_bench.methods.base import ScoreVector, make_score
from hardness_bench.trainer import DynamicsRecord

_LOGGER = logging.getLogger(__name__)


def _labels(record: DynamicsRecord, labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (record.n,):
        raise ScoringError(f"expected {record.n} labels, got shape {labels.shape}")
    return labels


def true_class_probs(record: DynamicsRecord, labels: np.ndarray) -> np.ndarray:
    """``T x n`` probability assigned to each sample's observed label."""
    labels = _labels(record, labels)
    return record.probs[:, np.arange(record.n), labels]


def score_aum(record: DynamicsRecord, labels: np.ndarray) -> ScoreVector:
    """Mean margin between the assigned logit and the largest other logit."""
    labels = _labels(record, labels)
    rows = np.arange(record.n)
    assigned = record.logits[:, rows, labels]
    others = record.logits.copy()
    others[:, rows, labels] = -np.inf
    margins = assigned - others.max(axis=2)
    return make_score(Method.AUM, margins.mean(axis=0))


def score_dataiq(record: DynamicsRecord, labels: np.ndarray) -> tuple[ScoreVector, ScoreVector]:
    p = true_class_probs(record, labels)
    confidence = p.mean(axis=0)
    aleatoric = (p * (1.0 - p)).mean(axis=0)
    return make_score(Method.DATAIQ_CONFIDENCE, confidence), make_score(Method.DATAIQ_ALEATORIC, aleatoric)


def score_datamaps(record: DynamicsRecord, labels: np.ndarray) -> tuple[ScoreVector, ScoreVector]:
    """Confidence and population standard deviation of the true-class probability."""
    p = true_class_probs(record, labels)
    return (
        make_score(Method.DATAMAPS_CONFIDENCE, p.mean(axis=0)),
        make_score(Method.DATAMAPS_VARIABILITY, p.std(axis=0)),
    )


def score_loss(record: DynamicsRecord, labels: np.ndarray) -> ScoreVector:
    _labels(record, labels)
    return make_score(Method.LOSS, record.losses.mean(axis=0))


def score_grand(record: DynamicsRecord, labels: np.ndarray) -> ScoreVector:
    _labels(record, labels)
    return make_score(Method.GRAND, np.sqrt(record.grad_sq_norm).mean(axis=0))


def score_el2n(record: DynamicsRecord, labels: np.ndarray) -> ScoreVector:
    labels = _labels(record, labels)
    target = np.zeros((record.n, record.k))
    target[np.arange(record.n), labels] = 1.0
    return make_score(Method.EL2N, np.linalg.norm(record.probs - target[None], axis=2).mean(axis=0))


def score_vog(record: DynamicsRecord, labels: np.ndarray) -> ScoreVector:
    """Per-coordinate std of true-class input gradients across checkpoints, averaged over coordinates."""
    _labels(record, labels)
    if record.input_grads is None or record.input_grads.shape[0] == 0:
        raise ScoringError("VoG needs input gradients from at least one checkpoint")
    raw = record.input_grads.std(axis=0).mean(axis=1)
    return make_score(Method.VOG, raw, {"checkpoints": list(record.input_grad_epochs)})


def score_forgetting(record: DynamicsRecord, labels: np.ndarray) -> ScoreVector:
    """Count correct-to-incorrect transitions; samples never learned score T + 1."""
    _labels(record, labels)
    correct = record.correct
    drops = np.sum(correct[:-1] & ~correct[1:], axis=0).astype(np.float64)
    drops[~correct.any(axis=0)] = record.epochs + 1
    return make_score(Method.FORGETTING, drops)


def _cosine_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
    dots = np.sum(a * b, axis=1)
    similarity = np.divide(dots, norms, out=np.ones_like(dots), where=norms > 0)
    return np.clip(1.0 - similarity, 0.0, 2.0)


def score_prototypicality(
    embeddings: np.ndarray,
    labels: np.ndarray,
    metric: DistanceMetric | str = DistanceMetric.EUCLIDEAN,
) -> ScoreVector:
    """Distance of each embedding to the centroid of its observed class."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    metric = DistanceMetric(metric)
    if embeddings.ndim != 2 or embeddings.shape[0] != labels.shape[0]:
        raise ScoringError(f"embeddings shape {embeddings.shape} does not match {labels.shape[0]} labels")
    centroids = np.zeros_like(embeddings)
    singletons = []
    for c in np.unique(labels):
        members = labels == c
        if members.sum() == 1:
            singletons.append(int(c))
        centroids[members] = embeddings[members].mean(axis=0)
    if singletons:
        _LOGGER.warning("Classes %s have a single sample; their prototypicality is 0", singletons)
    if metric is DistanceMetric.COSINE:
        raw = _cosine_distance(embeddings, centroids)
    else:
        raw = np.linalg.norm(embeddings - centroids, axis=1)
    return make_score(Method.PROTOTYPICALITY, raw, {"metric": metric.value})
