"""Sweep-level artifacts: aggregates, rank tests, SVG heatmaps and the markdown summary."""

import logging
from collections.abc import Iterable, Sequence
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from hardness_bench.const import FAILURES_FILE, METRICS_FILE, REPORT_FILE, SIGNIFICANCE_FILE, WINS_FILE  # noqa: E402
from hardness_bench.evaluator import (  # noqa: E402
    EvalReport,
    SweepAggregate,
    aggregate_sweep,
    is_missing,
    rank_test,
    read_metrics_csv,
    win_matrix,
    write_heatmap_csv,
    write_metrics_csv,
)
from hardness_bench.exceptions import EvaluationError  # noqa: E402
from hardness_bench.helpers import atomic_write_text, read_json, write_json  # noqa: E402

_LOGGER = logging.getLogger(__name__)

# Fixed SVG ids and no timestamp, so regenerated figures are byte-identical
SVG_RC = {"svg.fonttype": "none", "svg.hashsalt": "hardness-bench"}
SVG_METADATA = {"Date": None}
CELL_FORMAT = "{:.3f}"
MISSING_LABEL = "n/a"


def heatmap_name(hardness: str, metric: str = "auprc", suffix: str = "csv") -> str:
    return f"heatmap_{hardness}_{metric}.{suffix}"


def metric_matrix(reports: Sequence[EvalReport], methods: Sequence[str], metric: str = "d_auprc") -> np.ndarray:
    """Setups x methods matrix restricted to ``methods``, in that order."""
    return np.array([[report.metric(metric)[m] for m in methods] for report in reports])


def _common_methods(reports: Sequence[EvalReport], methods: Sequence[str]) -> list[str]:
    return [m for m in methods if all(m in report.methods for report in reports)]


def significance(reports: Sequence[EvalReport], methods: Sequence[str]) -> dict[str, Any]:
    methods = _common_methods(reports, methods)
    if len(reports) < 2 or len(methods) < 2:
        return {"error": f"rank tests need >= 2 setups and >= 2 methods, got {len(reports)} and {len(methods)}"}
    return rank_test(metric_matrix(reports, methods), methods).to_dict()


def write_aggregates(
    out_dir: Path, reports: Sequence[EvalReport], methods: Sequence[str]
) -> tuple[dict[str, SweepAggregate], dict[str, Any]]:
    """Heatmap CSVs per hardness kind, ``significance.json`` and ``wins.csv``."""
    by_kind: dict[str, list[EvalReport]] = {}
    for report in reports:
        by_kind.setdefault(report.setup.hardness, []).append(report)
    aggregates = {}
    for kind, group in by_kind.items():
        aggregate = aggregate_sweep(group, methods)
        aggregates[kind] = aggregate
        write_heatmap_csv(out_dir / heatmap_name(kind, "auprc"), aggregate, "mean_auprc")
        write_heatmap_csv(out_dir / heatmap_name(kind, "auroc"), aggregate, "mean_auroc")

    tests = {
        "overall": significance(reports, methods),
        "by_hardness": {kind: significance(group, methods) for kind, group in by_kind.items()},
    }
    write_json(out_dir / SIGNIFICANCE_FILE, tests)

    common = _common_methods(reports, methods)
    if reports and common:
        wins = pd.DataFrame(
            win_matrix(metric_matrix(reports, common)), index=pd.Index(common, name="method"), columns=common
        )
        atomic_write_text(out_dir / WINS_FILE, wins.to_csv(lineterminator="\n"))
    return aggregates, tests


def summarize(out_dir: str | Path, results: Iterable[Any], methods: Sequence[str]) -> dict[str, Any]:
    """Write the merged metrics CSV, the failure summary and every aggregate for a finished sweep."""
    out_dir = Path(out_dir)
    results = list(results)
    reports = [r.report for r in results if r.report is not None]
    write_metrics_csv(out_dir / METRICS_FILE, reports)
    failures = [{"setup_id": r.setup_id, "status": r.status.value, **(r.error or {})} for r in results if r.error]
    write_json(out_dir / FAILURES_FILE, failures)
    _, tests = write_aggregates(out_dir, reports, methods)
    return tests


def render_heatmap(aggregate: SweepAggregate, path: Path, metric: str = "mean_auprc") -> Path:
    """Methods x p heatmap with 3-decimal cell labels; missing cells are hatched, never drawn as 0."""
    values = getattr(aggregate, metric)
    n_methods, n_p = values.shape
    with matplotlib.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(1.2 * n_p + 3.0, 0.45 * n_methods + 1.5))
        cmap = plt.get_cmap("viridis").copy()
        cmap.set_bad("white")
        image = ax.imshow(np.ma.masked_invalid(values), cmap=cmap, vmin=0.0, vmax=1.0, aspect="auto")
        for i in range(n_methods):
            for j in range(n_p):
                value = values[i, j]
                if is_missing(value):
                    ax.add_patch(Rectangle((j - 0.5, i - 0.5), 1, 1, fill=False, hatch="///", edgecolor="grey"))
                    ax.text(j, i, MISSING_LABEL, ha="center", va="center", fontsize=8, color="black")
                else:
                    color = "white" if value < 0.5 else "black"
                    ax.text(j, i, CELL_FORMAT.format(value), ha="center", va="center", fontsize=8, color=color)
        ax.set_xticks(range(n_p), [f"{p:g}" for p in aggregate.proportions])
        ax.set_yticks(range(n_methods), list(aggregate.methods))
        ax.set_xlabel("proportion p")
        ax.set_title(f"{aggregate.hardness}: {metric.replace('_', ' ')}")
        fig.colorbar(image, ax=ax)
        fig.tight_layout()
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata=SVG_METADATA)
        plt.close(fig)
    return path


def _markdown_table(frame: pd.DataFrame) -> list[str]:
    header = "| " + " | ".join([frame.index.name or "", *map(str, frame.columns)]) + " |"
    lines = [header, "|" + "---|" * (len(frame.columns) + 1)]
    for index, row in frame.iterrows():
        cells = [MISSING_LABEL if is_missing(v) else CELL_FORMAT.format(v) for v in row]
        lines.append("| " + " | ".join([str(index), *cells]) + " |")
    return lines


def emit_report(results_dir: str | Path) -> Path:
    """Render heatmaps and ``report.md`` from the metrics CSV of a results directory."""
    results_dir = Path(results_dir)
    metrics_path = results_dir / METRICS_FILE
    if not metrics_path.is_file():
        raise EvaluationError(f"no results in {results_dir}: {METRICS_FILE} missing")
    reports = read_metrics_csv(metrics_path)
    if not reports:
        raise EvaluationError(f"no results in {results_dir}: {METRICS_FILE} is empty")
    methods = list(dict.fromkeys(m for report in reports for m in report.methods))
    aggregates, tests = write_aggregates(results_dir, reports, methods)

    lines = ["# Hardness detection report", ""]
    lines.append(f"{len(reports)} evaluated setups, {len(methods)} methods.")
    failures_path = results_dir / FAILURES_FILE
    if failures_path.is_file():
        failures = read_json(failures_path)
        if failures:
            lines.append(f"{len(failures)} setups failed or were skipped; see `{FAILURES_FILE}`.")
    lines.append("")
    for kind, aggregate in aggregates.items():
        svg_name = heatmap_name(kind, "auprc", "svg")
        render_heatmap(aggregate, results_dir / svg_name)
        lines.extend([f"## {kind}", "", f"![{kind} D-AUPRC]({svg_name})", ""])
        lines.extend(_markdown_table(aggregate.heatmap_frame("mean_auprc")))
        lines.append("")

    overall = tests["overall"]
    lines.extend(["## Rankings", ""])
    if "error" in overall:
        lines.append(f"Rank tests not available: {overall['error']}.")
    else:
        friedman = overall["friedman"]
        lines.append(
            f"Friedman chi-square {friedman['statistic']:.3f} (df {friedman['df']}), p = {friedman['p_value']:.4g}."
        )
        lines.extend(["", "| method | mean rank |", "|---|---|"])
        for method, rank in sorted(overall["mean_ranks"].items(), key=lambda item: (item[1], item[0])):
            lines.append(f"| {method} | {rank:.3f} |")
        lines.extend(["", f"Not significantly different (alpha {overall['alpha']}):", ""])
        pairs = overall["not_different"] or [["none", None]]
        lines.extend(f"- {a} / {b}" if b else f"- {a}" for a, b in pairs)
    lines.append("")
    path = atomic_write_text(results_dir / REPORT_FILE, "\n".join(lines))
    _LOGGER.info("Report written to %s", path)
    return path
