"""Benchmark hardness characterization methods against controlled, flagged perturbations."""

from hardness_bench.const import VERSION

__version__ = VERSION
