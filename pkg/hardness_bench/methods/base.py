import logging
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from hardness_bench.const import HARD_LOW_METHODS
from hardness_bench.data.enums import Method
from hardness_bench.exceptions import ScoringError

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Per-sample scores of one method in raw and "higher = harder" orientation."""

    method: Method
    raw: np.ndarray
    oriented: np.ndarray
    direction_flipped: bool
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        raw = np.array(self.raw, dtype=np.float64)
        oriented = np.array(self.oriented, dtype=np.float64)
        if raw.ndim != 1 or raw.shape != oriented.shape:
            raise ScoringError(f"{self.method}: raw and oriented scores must be equal-length vectors")
        if not (np.all(np.isfinite(raw)) and np.all(np.isfinite(oriented))):
            raise ScoringError(f"{Method(self.method).value}: non-finite score values")
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "raw", raw)
        object.__setattr__(self, "oriented", oriented)

    def __len__(self) -> int:
        return int(self.raw.shape[0])


def is_hard_low(method: Method) -> bool:
    try:
        return Method(method) in HARD_LOW_METHODS
    except ValueError as e:
        raise ScoringError(f"unknown method {method!r}") from e


def orient(score: ScoreVector) -> ScoreVector:
    """Recompute ``oriented`` from ``raw`` using the method's direction; idempotent."""
    flipped = is_hard_low(score.method)
    return replace(score, oriented=-score.raw if flipped else score.raw.copy(), direction_flipped=flipped)


def make_score(method: Method, raw: np.ndarray, diagnostics: dict[str, Any] | None = None) -> ScoreVector:
    raw = np.asarray(raw, dtype=np.float64)
    return orient(ScoreVector(method, raw, raw, False, diagnostics or {}))
