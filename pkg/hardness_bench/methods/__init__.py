"""Hardness characterization methods and the registry that runs them over one trained setup."""

import logging
import time
from collections.abc import Callable, Iterable
from dataclasses import dataclass

from hardness_bench.const import (
    DEFAULT_AGREEMENT_PASSES,
    DEFAULT_ALLSH_SIGMA,
    DEFAULT_CLEANLAB_FOLDS,
    DEFAULT_DETECTOR_INJECT_RATE,
    DEFAULT_METHODS,
)
from hardness_bench.data.dataset import Dataset
from hardness_bench.data.enums import DistanceMetric, Method
from hardness_bench.exceptions import ScoringError
from hardness_bench.helpers import derive_seed
from hardness_bench.methods.base import ScoreVector, is_hard_low, make_score, orient
from hardness_bench.methods.cleanlab import ConfidentJoint, confident_joint, score_cleanlab
from hardness_bench.methods.detector import score_detector
from hardness_bench.methods.dynamics import (
    score_aum,
    score_dataiq,
    score_datamaps,
    score_el2n,
    score_forgetting,
    score_grand,
    score_loss,
    score_prototypicality,
    score_vog,
)
from hardness_bench.methods.probing import kl_divergence, score_agreement, score_allsh
from hardness_bench.trainer import DynamicsRecord, MlpConfig, Model, TrainConfig

_LOGGER = logging.getLogger(__name__)

__all__ = [
    "ConfidentJoint",
    "ScoreVector",
    "ScoringContext",
    "ScoringOptions",
    "compute_scores",
    "confident_joint",
    "is_hard_low",
    "kl_divergence",
    "make_score",
    "orient",
]


@dataclass(frozen=True)
class ScoringOptions:
    prototypicality_metric: DistanceMetric = DistanceMetric.EUCLIDEAN
    allsh_sigma: float = DEFAULT_ALLSH_SIGMA
    agreement_passes: int = DEFAULT_AGREEMENT_PASSES
    cleanlab_folds: int = DEFAULT_CLEANLAB_FOLDS
    detector_inject_rate: float = DEFAULT_DETECTOR_INJECT_RATE

    def to_dict(self) -> dict:
        return {
            "prototypicality_metric": DistanceMetric(self.prototypicality_metric).value,
            "allsh_sigma": self.allsh_sigma,
            "agreement_passes": self.agreement_passes,
            "cleanlab_folds": self.cleanlab_folds,
            "detector_inject_rate": self.detector_inject_rate,
        }


@dataclass(frozen=True, eq=False)
class ScoringContext:
    """Everything a scorer may read: one recorded run, its final model and the observed dataset."""

    record: DynamicsRecord
    model: Model
    dataset: Dataset
    mcfg: MlpConfig
    tcfg: TrainConfig


Scorer = Callable[[ScoringContext, ScoringOptions, int], ScoreVector | tuple[ScoreVector, ...]]


def _dataiq(ctx: ScoringContext, options: ScoringOptions, seed: int):
    return score_dataiq(ctx.record, ctx.dataset.labels)


def _datamaps(ctx: ScoringContext, options: ScoringOptions, seed: int):
    return score_datamaps(ctx.record, ctx.dataset.labels)


SCORERS: dict[Method, Scorer] = {
    Method.AUM: lambda ctx, options, seed: score_aum(ctx.record, ctx.dataset.labels),
    Method.DATAIQ_CONFIDENCE: _dataiq,
    Method.DATAIQ_ALEATORIC: _dataiq,
    Method.DATAMAPS_CONFIDENCE: _datamaps,
    Method.DATAMAPS_VARIABILITY: _datamaps,
    Method.LOSS: lambda ctx, options, seed: score_loss(ctx.record, ctx.dataset.labels),
    Method.GRAND: lambda ctx, options, seed: score_grand(ctx.record, ctx.dataset.labels),
    Method.EL2N: lambda ctx, options, seed: score_el2n(ctx.record, ctx.dataset.labels),
    Method.VOG: lambda ctx, options, seed: score_vog(ctx.record, ctx.dataset.labels),
    Method.FORGETTING: lambda ctx, options, seed: score_forgetting(ctx.record, ctx.dataset.labels),
    Method.PROTOTYPICALITY: lambda ctx, options, seed: score_prototypicality(
        ctx.record.embeddings, ctx.dataset.labels, options.prototypicality_metric
    ),
    Method.ALLSH: lambda ctx, options, seed: score_allsh(ctx.model, ctx.dataset, options.allsh_sigma, seed),
    Method.AGREEMENT: lambda ctx, options, seed: score_agreement(
        ctx.model, ctx.dataset, options.agreement_passes, seed
    ),
    Method.CLEANLAB: lambda ctx, options, seed: score_cleanlab(
        ctx.dataset, ctx.mcfg, ctx.tcfg, options.cleanlab_folds, seed
    ),
    Method.DETECTOR: lambda ctx, options, seed: score_detector(
        ctx.dataset, ctx.record, ctx.mcfg, ctx.tcfg, options.detector_inject_rate, seed
    ),
}


def parse_methods(values: Iterable[str | Method] | None) -> tuple[Method, ...]:
    """Validate method identifiers, keeping the given order and dropping duplicates."""
    if values is None:
        return DEFAULT_METHODS
    methods: list[Method] = []
    for value in values:
        try:
            method = Method(value)
        except ValueError as e:
            raise ScoringError(f"unknown method {value!r}") from e
        if method not in methods:
            methods.append(method)
    if not methods:
        raise ScoringError("method list is empty")
    return tuple(methods)


def compute_scores(
    ctx: ScoringContext,
    methods: Iterable[Method] | None = None,
    options: ScoringOptions | None = None,
    seed: int = 0,
) -> dict[Method, ScoreVector]:
    """Run the requested scorers in order; paired scorers run once for both of their vectors."""
    options = options or ScoringOptions()
    results: dict[Method, ScoreVector] = {}
    computed: dict[Scorer, tuple[ScoreVector, ...]] = {}
    for method in parse_methods(methods):
        scorer = SCORERS[method]
        if scorer not in computed:
            started = time.perf_counter()
            output = scorer(ctx, options, derive_seed(seed, "scorer", method.value))
            computed[scorer] = output if isinstance(output, tuple) else (output,)
            _LOGGER.debug("Scored %s in %.3fs", method.value, time.perf_counter() - started)
        results[method] = next(vector for vector in computed[scorer] if vector.method is method)
    return results
