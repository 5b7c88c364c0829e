import hashlib
import json
import logging
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

_LOGGER = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1


def derive_seed(master_seed: int, stage: str, *coords: Any) -> int:
    """Derive a 64-bit stage seed from the master seed.

    The stage name and grid coordinates are hashed together with the master
    seed, so seeds for different setups are uncorrelated and independent of
    the order in which setups are executed.

    Args:
        master_seed: Seed of the run or sweep
        stage: Stage name, e.g. "hardness" or "model"
        *coords: Grid coordinates (dataset name, kind, proportion, ...)

    Returns:
        Unsigned 64-bit integer seed
    """
    key = ":".join([str(int(master_seed) & SEED_MASK), stage, *(str(c) for c in coords)])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "big")
    _LOGGER.debug("Derived seed %d for %s", seed, key)
    return seed


def make_rng(seed: int, *stream: str) -> np.random.Generator:
    """Create a counter-based (Philox) generator for a named stream of a seed."""
    words = [int(seed) & SEED_MASK]
    for name in stream:
        words.append(int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "big"))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))


def to_jsonable(value: Any) -> Any:
    """Convert numpy containers, enums, tuples and paths into plain JSON types."""
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.integer | np.bool_):
        return value.item()
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, dict):
        return {str(to_jsonable(k)): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [to_jsonable(v) for v in value]
    return value


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write text to a temp file in the target directory, then rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def write_json(path: str | Path, payload: Any) -> Path:
    return atomic_write_text(path, json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> Any:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def format_proportion(p: float) -> str:
    """Stable text form of a proportion used in setup identifiers."""
    return f"{p:g}"
