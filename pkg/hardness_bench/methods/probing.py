"""Scorers that probe the final trained model: augmentation sensitivity and MC-dropout agreement."""

import logging

import numpy as np
from scipy.special import rel_entr

from hardness_bench.const import DEFAULT_AGREEMENT_PASSES, DEFAULT_ALLSH_SIGMA
from hardness_bench.data.dataset import Dataset
from hardness_bench.data.enums import Method
from hardness_bench.exceptions import ScoringError
from hardness_bench.helpers import make_rng
from hardness_bench.methods.base import ScoreVector, make_score
from hardness_bench.trainer import Model, mc_dropout_proba, predict_proba

_LOGGER = logging.getLogger(__name__)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Row-wise KL(p || q) with 0 * ln 0 = 0; q is floored at the smallest positive float."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    q = np.atleast_2d(np.asarray(q, dtype=np.float64))
    if p.shape != q.shape:
        raise ScoringError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    q = np.maximum(q, np.finfo(np.float64).tiny)
    return np.maximum(rel_entr(p, q).sum(axis=1), 0.0)


def augment(ds: Dataset, sigma: float, seed: int) -> np.ndarray:
    """Horizontal flip for raster datasets, Gaussian jitter otherwise."""
    if ds.grid_shape is not None:
        h, w = ds.grid_shape
        return ds.features.reshape(ds.n, h, w)[:, :, ::-1].reshape(ds.n, h * w)
    if not sigma > 0:
        raise ScoringError(f"ALLSH augmentation sigma must be > 0 for tabular data, got {sigma}")
    rng = make_rng(seed, "allsh")
    return ds.features + sigma * rng.standard_normal(ds.features.shape)


def score_allsh(model: Model, ds: Dataset, sigma: float = DEFAULT_ALLSH_SIGMA, seed: int = 0) -> ScoreVector:
    original = predict_proba(model, ds.features)
    augmented = predict_proba(model, augment(ds, sigma, seed))
    augmentation = "hflip" if ds.grid_shape is not None else "gaussian"
    return make_score(Method.ALLSH, kl_divergence(original, augmented), {"augmentation": augmentation})


def score_agreement(model: Model, ds: Dataset, passes: int = DEFAULT_AGREEMENT_PASSES, seed: int = 0) -> ScoreVector:
    """Mean over MC-dropout passes of the maximum class probability."""
    probs = mc_dropout_proba(model, ds.features, passes, seed)
    return make_score(Method.AGREEMENT, probs.max(axis=2).mean(axis=0), {"passes": passes})
