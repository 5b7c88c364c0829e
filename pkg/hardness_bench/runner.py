"""Setup orchestration: load, perturb, train and score, evaluate; plus stability, severity and sweeps.

Every random draw of a setup comes from a stage seed derived from the master
seed and the setup's grid coordinates, so a setup's outputs do not depend on
which other setups run, or in which order.
"""

import asyncio
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from hardness_bench.config import COMPOSITE_SEPARATOR, BenchConfig, load_config
from hardness_bench.const import (
    DEFAULT_P_GRID,
    ERROR_FILE,
    MANIFEST_FILE,
    METRICS_FILE,
    RARE_KINDS,
    RARE_P_GRID,
    SCORES_FILE,
    SEVERITY_FILE,
    SEVERITY_PRESETS,
    STABILITY_FILE,
    SWEEP_MANIFEST_FILE,
    VERSION,
)
from hardness_bench.data.dataset import (
    Dataset,
    SplitSpec,
    generate_blobs,
    generate_patterns,
    load_csv,
    split,
    standardize,
)
from hardness_bench.data.enums import DatasetSource, HardnessKind, Method, SetupStatus
from hardness_bench.evaluator import (
    EvalReport,
    SetupDescriptor,
    StabilityReport,
    evaluate,
    require_positives,
    stability,
    write_metrics_csv,
)
from hardness_bench.exceptions import EvaluationError, HardnessError, NoPositivesError
from hardness_bench.hardness import HardnessSpec, PerturbationResult, perturb
from hardness_bench.helpers import atomic_write_text, derive_seed, format_proportion, read_json, write_json
from hardness_bench.methods import ScoreVector, ScoringContext, ScoringOptions, compute_scores
from hardness_bench.report import summarize
from hardness_bench.trainer import (
    DynamicsRecord,
    MlpConfig,
    Model,
    TrainConfig,
    accuracy,
    fit_with_recording,
    init_model,
)

_LOGGER = logging.getLogger(__name__)

SCORE_FLOAT_FORMAT = "%.17g"


def hardness_kinds(token: str) -> tuple[HardnessKind, ...]:
    return tuple(HardnessKind(part) for part in token.split(COMPOSITE_SEPARATOR))


def p_grid_for(config: BenchConfig, token: str) -> tuple[float, ...]:
    """Configured proportions, or the default grid (restricted for rare kinds)."""
    if config.p is not None:
        return tuple(config.p)
    return RARE_P_GRID if any(kind in RARE_KINDS for kind in hardness_kinds(token)) else DEFAULT_P_GRID


@dataclass(frozen=True)
class SetupSpec:
    """One grid point: configuration plus (hardness, p, seed) coordinates."""

    config: BenchConfig
    hardness: str
    p: float
    seed: int

    @property
    def setup_id(self) -> str:
        return f"{self.config.dataset_name}-{self.hardness}-p{format_proportion(self.p)}-s{self.seed}"

    def narrowed_config(self) -> BenchConfig:
        """Configuration whose grid holds only this setup, so it can be re-run on its own."""
        return self.config.replace(hardness=(self.hardness,), p=(self.p,), seeds=(self.seed,))


def setup_grid(config: BenchConfig) -> list[SetupSpec]:
    """Cartesian product hardness x p x seed, in configuration order; repeated grid points run once."""
    grid = [
        SetupSpec(config, token, float(p), int(seed))
        for token in config.hardness
        for p, seed in itertools.product(p_grid_for(config, token), config.seeds)
    ]
    unique = {}
    for setup in grid:
        unique.setdefault(setup.setup_id, setup)
    if len(unique) < len(grid):
        _LOGGER.warning("Dropped %d repeated grid point(s)", len(grid) - len(unique))
    return list(unique.values())


def single_setup(config: BenchConfig) -> SetupSpec:
    """First grid point of a configuration (the whole grid for a narrowed config)."""
    grid = setup_grid(config)
    if len(grid) > 1:
        _LOGGER.info("Configuration spans %d setups; running only %s", len(grid), grid[0].setup_id)
    return grid[0]


def derive_stage_seeds(setup: SetupSpec) -> dict[str, int]:
    """Stage seeds hashed from (master seed, stage, grid coordinates).

    The dataset and split depend only on the dataset and replicate seed, so
    every hardness kind and proportion of one replicate perturbs the same data.
    """
    master = setup.config.seed
    name = setup.config.dataset_name
    coords = (name, setup.hardness, format_proportion(setup.p), setup.seed)
    return {
        "dataset": derive_seed(master, "dataset", name, setup.seed),
        "split": derive_seed(master, "split", name, setup.seed),
        "hardness": derive_seed(master, "hardness", *coords),
        "model": derive_seed(master, "model", *coords),
        "train": derive_seed(master, "train", *coords),
        "scorer": derive_seed(master, "scorer", *coords),
    }


def load_dataset(config: BenchConfig, seed: int) -> Dataset:
    if config.dataset is DatasetSource.BLOBS:
        ds = generate_blobs(
            config.n_samples, config.n_features, config.n_classes, config.separation, seed, config.layout
        )
    elif config.dataset is DatasetSource.PATTERNS:
        ds = generate_patterns(config.n_samples, config.n_classes, config.side, config.noise, seed)
    else:
        ds = load_csv(config.csv_path, config.target_column)
    return ds.require_all_classes()


def build_hardness_spec(config: BenchConfig, token: str, p: float, seed: int) -> HardnessSpec:
    """Spec for a kind token; ``a+b`` builds a composite whose parts share its flags."""
    params = {
        "alpha": config.alpha,
        "sigma": config.sigma,
        "quantile": config.quantile,
        "pixels": config.pixels,
        "factor": config.factor,
    }
    kinds = hardness_kinds(token)
    if len(kinds) == 1:
        return HardnessSpec(kinds[0], p, seed, **params)
    parts = tuple(
        HardnessSpec(kind, p, derive_seed(seed, "hardness_part", index), **params) for index, kind in enumerate(kinds)
    )
    return HardnessSpec(HardnessKind.COMPOSITE, p, seed, parts=parts)


def model_configs(config: BenchConfig, model_seed: int, train_seed: int) -> tuple[MlpConfig, TrainConfig]:
    mcfg = MlpConfig(hidden_sizes=config.hidden_sizes, dropout_rate=config.dropout, seed=model_seed)
    tcfg = TrainConfig(
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        seed=train_seed,
        input_grad_stride=config.input_grad_stride,
    )
    return mcfg, tcfg


def scoring_options(config: BenchConfig) -> ScoringOptions:
    return ScoringOptions(
        prototypicality_metric=config.prototypicality_metric,
        allsh_sigma=config.allsh_sigma,
        agreement_passes=config.agreement_passes,
        cleanlab_folds=config.cleanlab_folds,
        detector_inject_rate=config.detector_inject_rate,
    )


@dataclass(frozen=True, eq=False)
class PreparedSetup:
    """Loaded, standardized, split and perturbed data of one setup."""

    train: Dataset
    test: Dataset
    perturbation: PerturbationResult
    seeds: dict[str, int]

    @property
    def flags(self) -> np.ndarray:
        return self.perturbation.flags.flags


@dataclass(frozen=True, eq=False)
class TrainedSetup:
    model: Model
    record: DynamicsRecord
    scores: dict[Method, ScoreVector]


def prepare_setup(setup: SetupSpec, timings: dict[str, float] | None = None) -> PreparedSetup:
    timings = timings if timings is not None else {}
    seeds = derive_stage_seeds(setup)
    config = setup.config
    started = time.perf_counter()
    ds = standardize(load_dataset(config, seeds["dataset"]))
    train, test = split(ds, SplitSpec(config.train_fraction, seeds["split"]))
    timings["load"] = time.perf_counter() - started
    started = time.perf_counter()
    perturbation = perturb(train, build_hardness_spec(config, setup.hardness, setup.p, seeds["hardness"]))
    timings["perturb"] = time.perf_counter() - started
    return PreparedSetup(perturbation.dataset, test, perturbation, seeds)


def train_and_score(
    ds: Dataset, config: BenchConfig, model_seed: int, train_seed: int, scorer_seed: int
) -> TrainedSetup:
    """One recorded training run feeding every requested scorer."""
    mcfg, tcfg = model_configs(config, model_seed, train_seed)
    model = init_model(mcfg, ds.d, ds.k)
    record = fit_with_recording(model, ds, tcfg)
    ctx = ScoringContext(record=record, model=model, dataset=ds, mcfg=mcfg, tcfg=tcfg)
    scores = compute_scores(ctx, config.methods, scoring_options(config), scorer_seed)
    return TrainedSetup(model, record, scores)


@dataclass(frozen=True)
class RunManifest:
    """Everything needed to re-execute a setup and trace its random draws."""

    version: str
    master_seed: int
    setup_id: str
    setup: dict[str, Any]
    config: dict[str, Any]
    dataset: dict[str, Any]
    hardness: dict[str, Any]
    model: dict[str, Any]
    training: dict[str, Any]
    methods: list[str]
    seeds: dict[str, int]
    outputs: dict[str, str]
    timings: dict[str, float] = field(default_factory=dict)
    test_accuracy: float | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(eq=False)
class SetupResult:
    setup_id: str
    status: SetupStatus
    report: EvalReport | None = None
    error: dict[str, str] | None = None
    manifest: dict[str, Any] | None = None
    scores: dict[str, np.ndarray] | None = None
    flags: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status is SetupStatus.OK


def scores_frame(scores: dict[Method, ScoreVector], flags: np.ndarray) -> pd.DataFrame:
    """Long-format scores: one row per (sample, method)."""
    frames = [
        pd.DataFrame(
            {
                "sample_id": np.arange(len(vector)),
                "method": method.value,
                "raw_score": vector.raw,
                "oriented_score": vector.oriented,
                "hardness_flag": flags.astype(np.int64),
            }
        )
        for method, vector in scores.items()
    ]
    return pd.concat(frames, ignore_index=True)


def write_scores_csv(path: Path, scores: dict[Method, ScoreVector], flags: np.ndarray) -> Path:
    text = scores_frame(scores, flags).to_csv(index=False, float_format=SCORE_FLOAT_FORMAT, lineterminator="\n")
    return atomic_write_text(path, text)


def _error_record(stage: str, error: Exception) -> dict[str, str]:
    return {"stage": stage, "type": type(error).__name__, "message": str(error)}


def run_setup(setup: SetupSpec, out_dir: str | Path | None = None) -> SetupResult:
    """Run the load, perturb, train+score, evaluate and write chain for one setup.

    Stage errors never propagate: they become a ``failed`` result (or
    ``skipped`` when the flags leave nothing to detect) with an error record
    persisted as ``error.json``.
    """
    config = setup.config
    setup_id = setup.setup_id
    setup_dir = Path(out_dir) / setup_id if out_dir is not None else None
    timings: dict[str, float] = {}
    seeds = derive_stage_seeds(setup)
    manifest: dict[str, Any] = {
        "version": VERSION,
        "master_seed": config.seed,
        "setup_id": setup_id,
        "setup": {"hardness": setup.hardness, "p": setup.p, "seed": setup.seed},
        "config": setup.narrowed_config().to_dict(),
        "seeds": seeds,
    }
    stage = "load"
    _LOGGER.info("Setup %s: starting", setup_id)
    try:
        prepared = prepare_setup(setup, timings)
        stage = "evaluate"
        require_positives(prepared.flags)

        stage = "train"
        started = time.perf_counter()
        trained = train_and_score(prepared.train, config, seeds["model"], seeds["train"], seeds["scorer"])
        timings["train_score"] = time.perf_counter() - started

        stage = "evaluate"
        started = time.perf_counter()
        descriptor = SetupDescriptor(
            setup_id,
            config.dataset_name,
            setup.hardness,
            setup.p,
            setup.seed,
            {"hidden_sizes": list(config.hidden_sizes), "dropout": config.dropout},
        )
        oriented = {method.value: vector.oriented for method, vector in trained.scores.items()}
        report = evaluate(oriented, prepared.flags, descriptor)
        timings["evaluate"] = time.perf_counter() - started

        stage = "write"
        mcfg, tcfg = model_configs(config, seeds["model"], seeds["train"])
        outputs = {}
        if setup_dir is not None:
            outputs = {"scores": SCORES_FILE, "metrics": METRICS_FILE, "manifest": MANIFEST_FILE}
        run_manifest = RunManifest(
            version=VERSION,
            master_seed=config.seed,
            setup_id=setup_id,
            setup=manifest["setup"],
            config=manifest["config"],
            dataset=prepared.train.describe(),
            hardness=prepared.perturbation.metadata,
            model=mcfg.to_dict(),
            training=tcfg.to_dict(),
            methods=[m.value for m in trained.scores],
            seeds=seeds,
            outputs=outputs,
            timings=timings,
            test_accuracy=accuracy(trained.model, prepared.test) if prepared.test.n else None,
        ).to_dict()
        if setup_dir is not None:
            write_scores_csv(setup_dir / SCORES_FILE, trained.scores, prepared.flags)
            write_metrics_csv(setup_dir / METRICS_FILE, [report])
            write_json(setup_dir / MANIFEST_FILE, run_manifest)
            (setup_dir / ERROR_FILE).unlink(missing_ok=True)
            _LOGGER.info("Setup %s: artifacts written to %s", setup_id, setup_dir)
    except NoPositivesError as e:
        _LOGGER.warning("Setup %s skipped at %s: %s", setup_id, stage, e)
        return _finish_unsuccessful(setup_id, SetupStatus.SKIPPED, _error_record(stage, e), manifest, setup_dir)
    except Exception as e:
        _LOGGER.error("Setup %s failed at %s: %s: %s", setup_id, stage, type(e).__name__, e)
        return _finish_unsuccessful(setup_id, SetupStatus.FAILED, _error_record(stage, e), manifest, setup_dir)
    return SetupResult(
        setup_id,
        SetupStatus.OK,
        report=report,
        manifest=run_manifest,
        scores={m.value: v.oriented for m, v in trained.scores.items()},
        flags=prepared.flags,
    )


def _finish_unsuccessful(
    setup_id: str, status: SetupStatus, error: dict[str, str], manifest: dict[str, Any], setup_dir: Path | None
) -> SetupResult:
    if setup_dir is not None:
        try:
            write_json(setup_dir / ERROR_FILE, {"setup_id": setup_id, "status": status.value, **error})
            write_json(setup_dir / MANIFEST_FILE, manifest)
            for stale in (SCORES_FILE, METRICS_FILE):
                (setup_dir / stale).unlink(missing_ok=True)
        except OSError as e:
            _LOGGER.error("Setup %s: cannot record %s status in %s: %s", setup_id, status.value, setup_dir, e)
    return SetupResult(setup_id, status, error=error, manifest=manifest)


def run_stability(
    setup: SetupSpec,
    runs: int = 3,
    out_dir: str | Path | None = None,
    model_seeds: list[int] | None = None,
) -> StabilityReport:
    """Retrain on fixed perturbed data with different model seeds and correlate the scores.

    Data, flags and scorer seeds stay fixed; only initialisation and
    mini-batch order change between runs.
    """
    if model_seeds is not None:
        runs = len(model_seeds)
    if runs < 2:
        raise EvaluationError(f"stability needs at least 2 runs, got {runs}")
    prepared = prepare_setup(setup)
    seeds = model_seeds or [derive_seed(setup.config.seed, "stability_model", setup.setup_id, r) for r in range(runs)]
    score_runs = []
    for index, model_seed in enumerate(seeds):
        _LOGGER.info("Stability %s: run %d/%d", setup.setup_id, index + 1, runs)
        train_seed = derive_seed(model_seed, "stability_train")
        trained = train_and_score(prepared.train, setup.config, model_seed, train_seed, prepared.seeds["scorer"])
        score_runs.append({m.value: v.oriented for m, v in trained.scores.items()})
    report = stability(score_runs)
    if out_dir is not None:
        write_json(
            Path(out_dir) / setup.setup_id / STABILITY_FILE,
            {"setup_id": setup.setup_id, "model_seeds": seeds, **report.to_dict()},
        )
    return report


@dataclass(frozen=True)
class SeverityReport:
    """Mean oriented score over flagged samples at small and large severity, per method."""

    hardness: str
    parameter: str
    small: float
    large: float
    small_means: dict[str, float]
    large_means: dict[str, float]
    change_pct: dict[str, float | None]

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def run_severity(
    setup: SetupSpec,
    small: float | None = None,
    large: float | None = None,
    out_dir: str | Path | None = None,
) -> SeverityReport:
    """Compare scorer responses to the same flagged samples perturbed at two severities."""
    kinds = hardness_kinds(setup.hardness)
    if len(kinds) != 1 or kinds[0] not in SEVERITY_PRESETS:
        supported = sorted(k.value for k in SEVERITY_PRESETS)
        raise HardnessError(f"severity comparison supports {supported}, got {setup.hardness!r}")
    parameter, preset_small, preset_large = SEVERITY_PRESETS[kinds[0]]
    small = preset_small if small is None else small
    large = preset_large if large is None else large

    means = []
    for value in (small, large):
        variant = SetupSpec(setup.config.replace(**{parameter: value}), setup.hardness, setup.p, setup.seed)
        prepared = prepare_setup(variant)
        require_positives(prepared.flags)
        trained = train_and_score(
            prepared.train, variant.config, prepared.seeds["model"], prepared.seeds["train"], prepared.seeds["scorer"]
        )
        means.append({m.value: float(v.oriented[prepared.flags].mean()) for m, v in trained.scores.items()})
    small_means, large_means = means
    change = {}
    for method, before in small_means.items():
        change[method] = None if before == 0 else (large_means[method] - before) / abs(before) * 100.0
    report = SeverityReport(setup.hardness, parameter, float(small), float(large), small_means, large_means, change)
    if out_dir is not None:
        write_json(Path(out_dir) / setup.setup_id / SEVERITY_FILE, report.to_dict())
    return report


@dataclass(eq=False)
class SweepResult:
    out_dir: Path
    results: list[SetupResult]

    @property
    def reports(self) -> list[EvalReport]:
        return [r.report for r in self.results if r.ok]

    @property
    def failed(self) -> list[SetupResult]:
        return [r for r in self.results if r.status is SetupStatus.FAILED]

    @property
    def exit_code(self) -> int:
        return 2 if self.failed else 0


async def _execute(setups: list[SetupSpec], out_dir: Path, jobs: int) -> list[SetupResult]:
    if jobs <= 1:
        return [run_setup(setup, out_dir) for setup in setups]
    loop = asyncio.get_running_loop()
    semaphore = asyncio.Semaphore(jobs)
    with ProcessPoolExecutor(max_workers=jobs) as pool:

        async def _bounded(setup: SetupSpec) -> SetupResult:
            async with semaphore:
                return await loop.run_in_executor(pool, run_setup, setup, out_dir)

        return list(await asyncio.gather(*(_bounded(setup) for setup in setups)))


async def sweep(config: BenchConfig, out_dir: str | Path | None = None, jobs: int | None = None) -> SweepResult:
    """Execute the configured grid with bounded parallelism and write the sweep-level artifacts.

    Results are merged by setup id in grid order, so every output is
    independent of the parallelism degree.
    """
    out_dir = Path(out_dir if out_dir is not None else config.out)
    jobs = jobs or config.jobs
    setups = setup_grid(config)
    if not setups:
        raise HardnessError("sweep grid is empty")
    write_json(
        out_dir / SWEEP_MANIFEST_FILE,
        {"version": VERSION, "config": config.to_dict(), "setups": [s.setup_id for s in setups]},
    )
    _LOGGER.info("Sweep: %d setups with %d job(s) into %s", len(setups), jobs, out_dir)
    by_id = {result.setup_id: result for result in await _execute(setups, out_dir, jobs)}
    results = [by_id[setup.setup_id] for setup in setups]
    summarize(out_dir, results, [m.value for m in config.methods])
    counts = {status: sum(r.status is status for r in results) for status in SetupStatus}
    _LOGGER.info(
        "Sweep finished: %d ok, %d skipped, %d failed",
        counts[SetupStatus.OK],
        counts[SetupStatus.SKIPPED],
        counts[SetupStatus.FAILED],
    )
    return SweepResult(out_dir, results)


def run_from_manifest(path: str | Path, out_dir: str | Path | None = None, jobs: int = 1) -> SetupResult | SweepResult:
    """Re-execute a persisted setup or sweep manifest."""
    manifest = read_json(path)
    config = load_config(path, {"out": str(out_dir) if out_dir is not None else None, "jobs": jobs})
    if "setups" in manifest:
        return asyncio.run(sweep(config, config.out, jobs))
    return run_setup(single_setup(config), config.out)
