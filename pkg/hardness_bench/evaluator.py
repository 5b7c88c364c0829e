"""Detection metrics, stability correlation and rank statistics over setups.

Average precision is the step-wise sum of precision times recall increment
over descending-score cut points, with tied scores forming one block; AUROC
counts ties as one half. Both match sklearn's ``average_precision_score`` and
``roc_auc_score``, which are used directly.
"""

import itertools
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.metrics import average_precision_score, roc_auc_score

from hardness_bench.const import DEFAULT_ALPHA_SIGNIFICANCE
from hardness_bench.data.enums import Method
from hardness_bench.exceptions import EvaluationError, NoPositivesError
from hardness_bench.helpers import atomic_write_text

_LOGGER = logging.getLogger(__name__)

METRIC_COLUMNS = ["setup_id", "dataset", "hardness", "p", "seed", "method", "d_auprc", "d_auroc", "rank"]
METRIC_FLOAT_FORMAT = "%.17g"


def require_positives(flags: np.ndarray) -> np.ndarray:
    """Raise ``NoPositivesError`` unless the flags hold at least one positive and one negative."""
    flags = np.asarray(flags, dtype=bool).reshape(-1)
    positives = int(flags.sum())
    if positives == 0 or positives == flags.size:
        raise NoPositivesError(f"detection needs positive and negative flags, got {positives} of {flags.size}")
    return flags


def _check_detection_input(scores: np.ndarray, flags: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    flags = np.asarray(flags, dtype=bool).reshape(-1)
    if scores.shape != flags.shape:
        raise EvaluationError(f"{scores.shape[0]} scores for {flags.shape[0]} flags")
    if not np.all(np.isfinite(scores)):
        raise EvaluationError("scores must be finite")
    return scores, require_positives(flags)


def auprc(scores: np.ndarray, flags: np.ndarray) -> float:
    scores, flags = _check_detection_input(scores, flags)
    return float(average_precision_score(flags, scores))


def auroc(scores: np.ndarray, flags: np.ndarray) -> float:
    scores, flags = _check_detection_input(scores, flags)
    return float(roc_auc_score(flags, scores))


def spearman(a: np.ndarray, b: np.ndarray) -> float | None:
    """Tie-aware rank correlation; ``None`` when either vector is constant."""
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape or a.size < 2:
        raise EvaluationError(f"spearman needs two equal-length vectors of size >= 2, got {a.size} and {b.size}")
    if np.all(a == a[0]) or np.all(b == b[0]):
        return None
    rho = stats.spearmanr(a, b).statistic
    return float(np.clip(rho, -1.0, 1.0))


def rank_methods(metrics: np.ndarray) -> np.ndarray:
    """Average ranks per setup row, 1 = highest metric."""
    metrics = np.atleast_2d(np.asarray(metrics, dtype=np.float64))
    return np.vstack([stats.rankdata(-row, method="average") for row in metrics])


@dataclass(frozen=True)
class RankTestResult:
    methods: tuple[str, ...]
    statistic: float
    df: int
    p_value: float
    mean_ranks: tuple[float, ...]
    pairwise_p: np.ndarray | None = None
    linked: tuple[tuple[str, str], ...] = field(default_factory=tuple)
    alpha: float = DEFAULT_ALPHA_SIGNIFICANCE

    def is_linked(self, a: str, b: str) -> bool:
        return a == b or (a, b) in self.linked or (b, a) in self.linked

    def to_dict(self) -> dict[str, Any]:
        return {
            "methods": list(self.methods),
            "friedman": {"statistic": self.statistic, "df": self.df, "p_value": self.p_value},
            "mean_ranks": dict(zip(self.methods, self.mean_ranks, strict=True)),
            "pairwise_p": None if self.pairwise_p is None else self.pairwise_p.tolist(),
            "not_different": [list(pair) for pair in self.linked],
            "alpha": self.alpha,
        }


def friedman(ranks: np.ndarray, methods: Sequence[str] | None = None) -> RankTestResult:
    """Friedman chi-square over a setups x methods rank matrix (no tie correction)."""
    ranks = np.asarray(ranks, dtype=np.float64)
    if ranks.ndim != 2 or ranks.shape[0] < 2 or ranks.shape[1] < 2:
        raise EvaluationError(f"Friedman needs >= 2 setups and >= 2 methods, got shape {ranks.shape}")
    n_setups, m = ranks.shape
    mean_ranks = ranks.mean(axis=0)
    statistic = 12.0 * n_setups / (m * (m + 1)) * float(np.sum((mean_ranks - (m + 1) / 2.0) ** 2))
    statistic = max(statistic, 0.0)
    p_value = float(stats.chi2.sf(statistic, m - 1))
    names = tuple(methods) if methods is not None else tuple(f"m{j}" for j in range(m))
    if len(names) != m:
        raise EvaluationError(f"{len(names)} method names for {m} columns")
    return RankTestResult(names, statistic, m - 1, min(max(p_value, 0.0), 1.0), tuple(float(r) for r in mean_ranks))


def holm_correction(p_values: np.ndarray) -> np.ndarray:
    """Holm step-down adjusted p-values (monotone, capped at 1)."""
    p_values = np.asarray(p_values, dtype=np.float64)
    order = np.argsort(p_values, kind="stable")
    count = p_values.size
    adjusted = np.empty(count)
    running = 0.0
    for position, index in enumerate(order):
        running = max(running, (count - position) * p_values[index])
        adjusted[index] = min(running, 1.0)
    return adjusted


def wilcoxon_p(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sided Wilcoxon signed-rank p-value; all-zero differences give 1."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    if np.all(diff == 0):
        return 1.0
    return float(stats.wilcoxon(a, b, zero_method="wilcox", alternative="two-sided").pvalue)


def pairwise_posthoc(
    metrics: np.ndarray,
    result: RankTestResult,
    alpha: float = DEFAULT_ALPHA_SIGNIFICANCE,
) -> RankTestResult:
    """Holm-corrected pairwise Wilcoxon tests; pairs with corrected p > alpha are linked as not different."""
    metrics = np.asarray(metrics, dtype=np.float64)
    m = metrics.shape[1]
    if m != len(result.methods):
        raise EvaluationError(f"metric matrix has {m} methods, Friedman result has {len(result.methods)}")
    pairs = list(itertools.combinations(range(m), 2))
    raw = np.array([wilcoxon_p(metrics[:, a], metrics[:, b]) for a, b in pairs])
    adjusted = holm_correction(raw) if pairs else raw
    matrix = np.ones((m, m))
    linked = []
    for (a, b), p in zip(pairs, adjusted, strict=True):
        matrix[a, b] = matrix[b, a] = p
        if p > alpha:
            linked.append((result.methods[a], result.methods[b]))
    return RankTestResult(
        methods=result.methods,
        statistic=result.statistic,
        df=result.df,
        p_value=result.p_value,
        mean_ranks=result.mean_ranks,
        pairwise_p=matrix,
        linked=tuple(linked),
        alpha=alpha,
    )


def rank_test(
    metrics: np.ndarray, methods: Sequence[str], alpha: float = DEFAULT_ALPHA_SIGNIFICANCE
) -> RankTestResult:
    """Friedman on the per-setup ranks of ``metrics`` followed by the pairwise post-hoc."""
    return pairwise_posthoc(metrics, friedman(rank_methods(metrics), methods), alpha)


def win_matrix(metrics: np.ndarray) -> np.ndarray:
    """Entry (a, b) counts setups where method a strictly beats method b."""
    metrics = np.atleast_2d(np.asarray(metrics, dtype=np.float64))
    if metrics.shape[0] < 1:
        raise EvaluationError("win matrix needs at least one setup")
    return (metrics[:, :, None] > metrics[:, None, :]).sum(axis=0).astype(np.int64)


@dataclass(frozen=True)
class SetupDescriptor:
    setup_id: str
    dataset: str
    hardness: str
    p: float
    seed: int
    model: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class EvalReport:
    setup: SetupDescriptor
    methods: tuple[str, ...]
    d_auprc: tuple[float, ...]
    d_auroc: tuple[float, ...]
    ranks: tuple[float, ...]

    def metric(self, name: str) -> dict[str, float]:
        return dict(zip(self.methods, getattr(self, name), strict=True))

    def to_frame(self) -> pd.DataFrame:
        rows = [
            {
                "setup_id": self.setup.setup_id,
                "dataset": self.setup.dataset,
                "hardness": self.setup.hardness,
                "p": self.setup.p,
                "seed": self.setup.seed,
                "method": method,
                "d_auprc": self.d_auprc[i],
                "d_auroc": self.d_auroc[i],
                "rank": self.ranks[i],
            }
            for i, method in enumerate(self.methods)
        ]
        return pd.DataFrame(rows, columns=METRIC_COLUMNS)


def evaluate(oriented_scores: dict[str, np.ndarray], flags: np.ndarray, setup: SetupDescriptor) -> EvalReport:
    """D-AUPRC, D-AUROC and per-setup rank (by D-AUPRC) for every scored method."""
    methods = tuple(Method(m).value if isinstance(m, Method) else str(m) for m in oriented_scores)
    values = list(oriented_scores.values())
    prc = tuple(auprc(v, flags) for v in values)
    roc = tuple(auroc(v, flags) for v in values)
    ranks = tuple(float(r) for r in rank_methods(np.array([prc]))[0])
    return EvalReport(setup, methods, prc, roc, ranks)


@dataclass(frozen=True)
class StabilityReport:
    """Mean pairwise Spearman rho per method; ``None`` when every pair was undefined."""

    rho: dict[str, float | None]
    pairwise: dict[str, list[float | None]]
    runs: int

    def to_dict(self) -> dict[str, Any]:
        return {"runs": self.runs, "rho": self.rho, "pairwise": self.pairwise}


def stability(score_runs: Sequence[dict[str, np.ndarray]]) -> StabilityReport:
    """Average Spearman rho over all run pairs, per method."""
    if len(score_runs) < 2:
        raise EvaluationError(f"stability needs at least 2 runs, got {len(score_runs)}")
    methods = list(score_runs[0])
    rho: dict[str, float | None] = {}
    pairwise: dict[str, list[float | None]] = {}
    for method in methods:
        values = [spearman(a[method], b[method]) for a, b in itertools.combinations(score_runs, 2)]
        pairwise[method] = values
        defined = [v for v in values if v is not None]
        if len(defined) < len(values):
            _LOGGER.warning("Spearman rho undefined for %s in %d run pair(s)", method, len(values) - len(defined))
        rho[method] = float(np.mean(defined)) if defined else None
    return StabilityReport(rho, pairwise, len(score_runs))


@dataclass(frozen=True)
class SweepAggregate:
    """Method x p matrices of mean/std/count for one hardness kind; NaN marks a missing cell."""

    hardness: str
    methods: tuple[str, ...]
    proportions: tuple[float, ...]
    mean_auprc: np.ndarray
    std_auprc: np.ndarray
    mean_auroc: np.ndarray
    std_auroc: np.ndarray
    counts: np.ndarray

    def heatmap_frame(self, metric: str = "mean_auprc") -> pd.DataFrame:
        return pd.DataFrame(
            getattr(self, metric),
            index=pd.Index(self.methods, name="method"),
            columns=[f"{p:g}" for p in self.proportions],
        )


def aggregate_sweep(reports: Iterable[EvalReport], methods: Sequence[str] | None = None) -> SweepAggregate:
    """Group by (method, p) and average over seeds and datasets; empty groups stay NaN."""
    reports = list(reports)
    if not reports:
        raise EvaluationError("no reports to aggregate")
    kinds = {r.setup.hardness for r in reports}
    if len(kinds) != 1:
        raise EvaluationError(f"reports mix hardness kinds {sorted(kinds)}")
    frame = pd.concat([r.to_frame() for r in reports], ignore_index=True)
    method_order = tuple(methods) if methods is not None else tuple(dict.fromkeys(frame["method"]))
    proportions = tuple(sorted(frame["p"].unique()))
    shape = (len(method_order), len(proportions))
    matrices = {name: np.full(shape, np.nan) for name in ("mean_auprc", "std_auprc", "mean_auroc", "std_auroc")}
    counts = np.zeros(shape, dtype=np.int64)
    grouped = frame.groupby(["method", "p"], sort=True)
    for (method, p), group in grouped:
        if method not in method_order:
            continue
        i, j = method_order.index(method), proportions.index(p)
        counts[i, j] = len(group)
        for column, prefix in (("d_auprc", "auprc"), ("d_auroc", "auroc")):
            values = group[column].to_numpy(dtype=np.float64)
            matrices[f"mean_{prefix}"][i, j] = values.mean()
            matrices[f"std_{prefix}"][i, j] = values.std()
    return SweepAggregate(kinds.pop(), method_order, tuple(float(p) for p in proportions), counts=counts, **matrices)


def metrics_csv_text(reports: Iterable[EvalReport]) -> str:
    frames = [r.to_frame() for r in reports]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=METRIC_COLUMNS)
    return frame.to_csv(index=False, float_format=METRIC_FLOAT_FORMAT, lineterminator="\n")


def write_metrics_csv(path: str | Path, reports: Iterable[EvalReport]) -> Path:
    return atomic_write_text(path, metrics_csv_text(reports))


def read_metrics_csv(path: str | Path) -> list[EvalReport]:
    """Rebuild reports from a metrics CSV, keeping row order."""
    frame = pd.read_csv(path, float_precision="round_trip", dtype={"setup_id": str, "method": str})
    reports = []
    for setup_id, group in frame.groupby("setup_id", sort=False):
        first = group.iloc[0]
        setup = SetupDescriptor(
            str(setup_id), str(first["dataset"]), str(first["hardness"]), float(first["p"]), int(first["seed"])
        )
        reports.append(
            EvalReport(
                setup,
                tuple(group["method"]),
                tuple(float(v) for v in group["d_auprc"]),
                tuple(float(v) for v in group["d_auroc"]),
                tuple(float(v) for v in group["rank"]),
            )
        )
    return reports


def heatmap_csv_text(aggregate: SweepAggregate, metric: str = "mean_auprc") -> str:
    """Methods as rows, proportions as columns; missing cells are empty fields."""
    return aggregate.heatmap_frame(metric).to_csv(float_format=METRIC_FLOAT_FORMAT, na_rep="", lineterminator="\n")


def write_heatmap_csv(path: str | Path, aggregate: SweepAggregate, metric: str = "mean_auprc") -> Path:
    return atomic_write_text(path, heatmap_csv_text(aggregate, metric))


def read_heatmap_csv(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, index_col="method", float_precision="round_trip")


def is_missing(value: float) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))
