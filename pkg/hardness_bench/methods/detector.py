"""Noise detector: a logistic model over per-epoch loss curves, calibrated on self-injected noise.

The calibration copy receives extra uniform mislabeling at ``inject_rate``
with known flags, a fresh model is trained on it, and the detector learns to
tell injected from clean loss trajectories. It is then applied to the loss
trajectories of the original run.
"""

import logging
import math
from dataclasses import replace

import numpy as np
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import roc_auc_score
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from hardness_bench.const import DEFAULT_DETECTOR_INJECT_RATE, DETECTOR_REGULARIZATION, MAX_DETECTOR_INJECT_RATE
from hardness_bench.data.dataset import Dataset
from hardness_bench.data.enums import Method
from hardness_bench.exceptions import ScoringError, TrainingDivergedError
from hardness_bench.hardness import mislabel_uniform, select_flags
from hardness_bench.helpers import derive_seed
from hardness_bench.methods.base import ScoreVector, make_score
from hardness_bench.trainer import DynamicsRecord, MlpConfig, TrainConfig, fit_with_recording, init_model

_LOGGER = logging.getLogger(__name__)


def score_detector(
    ds: Dataset,
    record: DynamicsRecord,
    mcfg: MlpConfig,
    tcfg: TrainConfig,
    inject_rate: float = DEFAULT_DETECTOR_INJECT_RATE,
    seed: int = 0,
) -> ScoreVector:
    if not (0 < inject_rate <= MAX_DETECTOR_INJECT_RATE) or not math.isfinite(inject_rate):
        raise ScoringError(f"inject rate must be in (0, {MAX_DETECTOR_INJECT_RATE}], got {inject_rate}")
    if record.n != ds.n:
        raise ScoringError(f"record covers {record.n} samples, dataset has {ds.n}")

    flags = select_flags(ds.n, inject_rate, derive_seed(seed, "detector_flags"))
    if flags.count == 0 or flags.count == ds.n:
        raise ScoringError(f"inject rate {inject_rate} on {ds.n} samples leaves no usable calibration labels")
    calibration = ds.with_labels(mislabel_uniform(ds.labels, flags, ds.k, derive_seed(seed, "detector_noise")))

    model = init_model(replace(mcfg, seed=derive_seed(seed, "detector_model")), ds.d, ds.k)
    calib_tcfg = replace(tcfg, seed=derive_seed(seed, "detector_train"), input_grad_stride=0)
    try:
        calib_record = fit_with_recording(model, calibration, calib_tcfg)
    except TrainingDivergedError as e:
        raise ScoringError(f"detector calibration training diverged: {e}") from e
    if calib_record.epochs != record.epochs:
        raise ScoringError(f"calibration run has {calib_record.epochs} epochs, scored run has {record.epochs}")

    detector = make_pipeline(StandardScaler(), LogisticRegression(C=DETECTOR_REGULARIZATION))
    detector.fit(calib_record.losses.T, flags.flags.astype(int))
    calibration_auroc = float(roc_auc_score(flags.flags, detector.predict_proba(calib_record.losses.T)[:, 1]))
    _LOGGER.debug("Detector calibration AUROC %.4f on %d injected samples", calibration_auroc, flags.count)

    raw = detector.predict_proba(record.losses.T)[:, 1]
    return make_score(
        Method.DETECTOR,
        raw,
        {"calibration_auroc": calibration_auroc, "inject_rate": inject_rate, "injected": flags.count},
    )
