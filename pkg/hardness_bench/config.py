"""Benchmark configuration: key-value files, JSON manifests and CLI overrides.

Precedence is built-in defaults < config file < CLI flags. Key-value files
use ``KEY=value`` lines with ``#`` comments and are read with python-dotenv;
keys are case-insensitive. Values are coerced and range-checked by
``CONFIG_SCHEMA``.
"""

import logging
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any

import voluptuous as vol
from dotenv import dotenv_values

from hardness_bench.const import (
    DEFAULT_AGREEMENT_PASSES,
    DEFAULT_ALLSH_SIGMA,
    DEFAULT_BATCH_SIZE,
    DEFAULT_CLEANLAB_FOLDS,
    DEFAULT_COVARIATE_SIGMA,
    DEFAULT_DETECTOR_INJECT_RATE,
    DEFAULT_DIRICHLET_ALPHA,
    DEFAULT_DROPOUT,
    DEFAULT_EPOCHS,
    DEFAULT_HIDDEN_SIZES,
    DEFAULT_INPUT_GRAD_STRIDE,
    DEFAULT_LEARNING_RATE,
    DEFAULT_METHODS,
    DEFAULT_N_CLASSES,
    DEFAULT_N_FEATURES,
    DEFAULT_N_SAMPLES,
    DEFAULT_OUTPUT_DIR,
    DEFAULT_PATTERN_NOISE,
    DEFAULT_PATTERN_SIDE,
    DEFAULT_SEEDS,
    DEFAULT_SEPARATION,
    DEFAULT_SHIFT_PIXELS,
    DEFAULT_TABULAR_KINDS,
    DEFAULT_TAIL_QUANTILE,
    DEFAULT_TRAIN_FRACTION,
    DEFAULT_ZOOM_FACTOR,
    ENV_OUTPUT_DIR,
    MAX_DETECTOR_INJECT_RATE,
    MAX_PROPORTION,
)
from hardness_bench.data.enums import BlobLayout, DatasetSource, DistanceMetric, HardnessKind, Method
from hardness_bench.exceptions import ConfigError
from hardness_bench.helpers import read_json

_LOGGER = logging.getLogger(__name__)

COMPOSITE_SEPARATOR = "+"
LIST_SEPARATOR = ","


def _listify(item_validator):
    """Accept a comma-separated string or a sequence; validate every item."""

    def validator(value):
        if isinstance(value, str):
            items = [v.strip() for v in value.split(LIST_SEPARATOR) if v.strip()]
        elif isinstance(value, list | tuple):
            items = list(value)
        else:
            items = [value]
        if not items:
            raise vol.Invalid("expected a non-empty list")
        return tuple(item_validator(item) for item in items)

    return validator


def hardness_token(value: Any) -> str:
    """Normalise a hardness kind, or a ``+``-joined list of kinds for a composite."""
    if isinstance(value, HardnessKind):
        value = value.value
    parts = [p.strip() for p in str(value).split(COMPOSITE_SEPARATOR) if p.strip()]
    if not parts:
        raise vol.Invalid(f"empty hardness kind {value!r}")
    for part in parts:
        try:
            kind = HardnessKind(part)
        except ValueError as e:
            raise vol.Invalid(f"unknown hardness kind {part!r}") from e
        if kind is HardnessKind.COMPOSITE:
            raise vol.Invalid("write composites as kinds joined by '+'")
    return COMPOSITE_SEPARATOR.join(parts)


def _boolean_free_int(value: Any) -> int:
    if isinstance(value, bool):
        raise vol.Invalid("expected an integer")
    return int(str(value).strip()) if isinstance(value, str) else int(value)


Int = vol.Coerce(_boolean_free_int)
Float = vol.Coerce(float)


def _hidden_sizes(value: Any) -> tuple[int, ...]:
    """Comma-separated widths; an empty value or ``none`` means softmax regression."""
    if isinstance(value, str) and value.strip().lower() in ("", "none"):
        return ()
    if isinstance(value, list | tuple) and not value:
        return ()
    return _listify(vol.All(Int, vol.Range(min=1)))(value)


CONFIG_SCHEMA = vol.Schema(
    {
        vol.Optional("seed"): vol.All(Int, vol.Range(min=0, max=2**64 - 1)),
        vol.Optional("dataset"): vol.Coerce(DatasetSource),
        vol.Optional("n_samples"): vol.All(Int, vol.Range(min=2)),
        vol.Optional("n_features"): vol.All(Int, vol.Range(min=1)),
        vol.Optional("n_classes"): vol.All(Int, vol.Range(min=2)),
        vol.Optional("separation"): vol.All(Float, vol.Range(min=0)),
        vol.Optional("layout"): vol.Coerce(BlobLayout),
        vol.Optional("side"): vol.All(Int, vol.Range(min=4)),
        vol.Optional("noise"): vol.All(Float, vol.Range(min=0)),
        vol.Optional("csv_path"): vol.Any(None, str),
        vol.Optional("target_column"): str,
        vol.Optional("train_fraction"): vol.All(Float, vol.Range(min=0, min_included=False, max=1)),
        vol.Optional("hardness"): _listify(hardness_token),
        vol.Optional("p"): vol.Any(None, _listify(vol.All(Float, vol.Range(min=0, max=MAX_PROPORTION)))),
        vol.Optional("seeds"): _listify(vol.All(Int, vol.Range(min=0))),
        vol.Optional("alpha"): vol.All(Float, vol.Range(min=0, min_included=False)),
        vol.Optional("sigma"): vol.All(Float, vol.Range(min=0, min_included=False)),
        vol.Optional("quantile"): vol.All(Float, vol.Range(min=0.5, max=1, min_included=False, max_included=False)),
        vol.Optional("pixels"): vol.All(Int, vol.Range(min=1)),
        vol.Optional("factor"): vol.All(Float, vol.Range(min=1, min_included=False)),
        vol.Optional("hidden_sizes"): _hidden_sizes,
        vol.Optional("dropout"): vol.All(Float, vol.Range(min=0, max=1, max_included=False)),
        vol.Optional("epochs"): vol.All(Int, vol.Range(min=1)),
        vol.Optional("learning_rate"): vol.All(Float, vol.Range(min=0, min_included=False)),
        vol.Optional("batch_size"): vol.All(Int, vol.Range(min=1)),
        vol.Optional("input_grad_stride"): vol.All(Int, vol.Range(min=0)),
        vol.Optional("methods"): _listify(vol.Coerce(Method)),
        vol.Optional("prototypicality_metric"): vol.Coerce(DistanceMetric),
        vol.Optional("allsh_sigma"): vol.All(Float, vol.Range(min=0, min_included=False)),
        vol.Optional("agreement_passes"): vol.All(Int, vol.Range(min=1)),
        vol.Optional("cleanlab_folds"): vol.All(Int, vol.Range(min=2)),
        vol.Optional("detector_inject_rate"): vol.All(
            Float, vol.Range(min=0, max=MAX_DETECTOR_INJECT_RATE, min_included=False)
        ),
        vol.Optional("jobs"): vol.All(Int, vol.Range(min=1)),
        vol.Optional("out"): str,
    }
)


@dataclass(frozen=True)
class BenchConfig:
    """Validated settings for one setup or a sweep grid (hardness x p x seed)."""

    seed: int = 0
    dataset: DatasetSource = DatasetSource.BLOBS
    n_samples: int = DEFAULT_N_SAMPLES
    n_features: int = DEFAULT_N_FEATURES
    n_classes: int = DEFAULT_N_CLASSES
    separation: float = DEFAULT_SEPARATION
    layout: BlobLayout = BlobLayout.POLYGON
    side: int = DEFAULT_PATTERN_SIDE
    noise: float = DEFAULT_PATTERN_NOISE
    csv_path: str | None = None
    target_column: str = "label"
    train_fraction: float = DEFAULT_TRAIN_FRACTION
    hardness: tuple[str, ...] = tuple(k.value for k in DEFAULT_TABULAR_KINDS)
    p: tuple[float, ...] | None = None
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    alpha: float = DEFAULT_DIRICHLET_ALPHA
    sigma: float = DEFAULT_COVARIATE_SIGMA
    quantile: float = DEFAULT_TAIL_QUANTILE
    pixels: int = DEFAULT_SHIFT_PIXELS
    factor: float = DEFAULT_ZOOM_FACTOR
    hidden_sizes: tuple[int, ...] = DEFAULT_HIDDEN_SIZES
    dropout: float = DEFAULT_DROPOUT
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    batch_size: int = DEFAULT_BATCH_SIZE
    input_grad_stride: int = DEFAULT_INPUT_GRAD_STRIDE
    methods: tuple[Method, ...] = DEFAULT_METHODS
    prototypicality_metric: DistanceMetric = DistanceMetric.EUCLIDEAN
    allsh_sigma: float = DEFAULT_ALLSH_SIGMA
    agreement_passes: int = DEFAULT_AGREEMENT_PASSES
    cleanlab_folds: int = DEFAULT_CLEANLAB_FOLDS
    detector_inject_rate: float = DEFAULT_DETECTOR_INJECT_RATE
    jobs: int = 1
    out: str = DEFAULT_OUTPUT_DIR

    @property
    def dataset_name(self) -> str:
        if self.dataset is DatasetSource.CSV and self.csv_path:
            return Path(self.csv_path).stem
        return self.dataset.value

    def to_dict(self) -> dict[str, Any]:
        """Plain-JSON form; ``out`` and ``jobs`` are left out since they never change results."""
        payload = asdict(self)
        payload.pop("out")
        payload.pop("jobs")
        for key, value in payload.items():
            if isinstance(value, tuple):
                payload[key] = [v.value if isinstance(v, Method) else v for v in value]
            elif hasattr(value, "value"):
                payload[key] = value.value
        return payload

    def replace(self, **changes: Any) -> "BenchConfig":
        return build_config({**self._as_raw(), **changes})

    def _as_raw(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _validate(raw: dict[str, Any], source: str) -> dict[str, Any]:
    try:
        return CONFIG_SCHEMA(raw)
    except vol.MultipleInvalid as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in error.path) or '<root>'}: {error.msg}" for error in e.errors
        )
        raise ConfigError(f"invalid configuration in {source}: {problems}") from e
    except vol.Invalid as e:
        raise ConfigError(f"invalid configuration in {source}: {e}") from e


def build_config(raw: dict[str, Any], source: str = "settings") -> BenchConfig:
    values = _validate({k: v for k, v in raw.items() if v is not None or k in ("p", "csv_path")}, source)
    config = BenchConfig(**values)
    if config.dataset is DatasetSource.CSV and not config.csv_path:
        raise ConfigError("dataset 'csv' requires csv_path")
    return config


def read_key_value_file(path: str | Path) -> dict[str, Any]:
    """Parse a ``KEY=value`` file into lower-cased keys; a key without a value is an error."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = dotenv_values(path, interpolate=False)
    values = {}
    for key, value in raw.items():
        if value is None:
            raise ConfigError(f"{path}: key {key!r} has no value")
        values[key.strip().lower()] = value
    return values


def read_manifest_config(path: str | Path) -> dict[str, Any]:
    """Extract the embedded configuration of a run or sweep manifest."""
    try:
        manifest = read_json(path)
    except (OSError, ValueError) as e:
        raise ConfigError(f"cannot read manifest {path}: {e}") from e
    if not isinstance(manifest, dict) or "config" not in manifest:
        raise ConfigError(f"{path} is not a run or sweep manifest")
    return dict(manifest["config"])


def default_output_dir() -> str:
    return os.environ.get(ENV_OUTPUT_DIR) or DEFAULT_OUTPUT_DIR


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> BenchConfig:
    """Merge defaults, an optional config file or JSON manifest, and CLI overrides."""
    raw: dict[str, Any] = {"out": default_output_dir()}
    source = "defaults"
    if path is not None:
        path = Path(path)
        file_values = read_manifest_config(path) if path.suffix.lower() == ".json" else read_key_value_file(path)
        raw.update(file_values)
        source = str(path)
        _LOGGER.debug("Loaded %d settings from %s", len(file_values), path)
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    return build_config(raw, source)
