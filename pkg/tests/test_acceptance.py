"""Desk-scale reproductions of the benchmark's qualitative findings.

These train dozens of networks and are skipped unless ``--run-slow`` is given.
"""

import asyncio

import numpy as np
import pytest

from hardness_bench.config import build_config
from hardness_bench.evaluator import auprc
from hardness_bench.helpers import make_rng
from hardness_bench.runner import run_from_manifest, run_setup, run_stability, setup_grid, single_setup, sweep

BLOBS = {"n_samples": 1000, "n_features": 2, "n_classes": 4, "separation": 8.0, "seeds": "0,1,2"}


def run_grid(raw):
    results = [run_setup(setup) for setup in setup_grid(build_config(raw))]
    assert all(result.ok for result in results)
    return results


def mean_metric(results, method, metric="d_auprc", **coords):
    values = [
        result.report.metric(metric)[method]
        for result in results
        if all(getattr(result.report.setup, key) == value for key, value in coords.items())
    ]
    assert values
    return float(np.mean(values))


class TestDetection:
    def test_training_dynamics_detect_uniform_mislabeling(self, run_slow):
        methods = ("aum", "loss", "el2n", "dataiq_confidence")
        results = run_grid({**BLOBS, "hardness": "uniform", "p": "0.1", "methods": ",".join(methods)})
        for method in methods:
            assert mean_metric(results, method) >= 0.70, method
            assert mean_metric(results, method, "d_auroc") >= 0.85, method

        baseline = [auprc(make_rng(r.report.setup.seed, "baseline").random(len(r.flags)), r.flags) for r in results]
        assert np.mean(baseline) == pytest.approx(0.10, abs=0.03)

    def test_higher_proportion_reduces_lift(self, run_slow):
        results = run_grid({**BLOBS, "hardness": "uniform", "p": "0.1,0.4", "methods": "aum"})

        def lift(p):
            return (mean_metric(results, "aum", p=p) - p) / (1 - p)

        assert lift(0.4) < lift(0.1)

    def test_far_ood_easier_than_instance_mislabeling(self, run_slow):
        methods = ("aum", "loss", "prototypicality")
        raw = {
            **BLOBS,
            "n_classes": 3,
            "layout": "line",
            "hardness": "far_ood,instance",
            "p": "0.1",
            "methods": ",".join(methods),
        }
        results = run_grid(raw)
        far = np.mean([mean_metric(results, m, hardness="far_ood") for m in methods])
        instance = np.mean([mean_metric(results, m, hardness="instance") for m in methods])
        assert far > instance


class TestStabilityOrdering:
    def test_loss_and_aum_are_stable(self, run_slow):
        config = build_config({**BLOBS, "hardness": "uniform", "p": "0.1", "seeds": "0", "methods": "loss,aum,grand"})
        report = run_stability(single_setup(config), runs=3)
        assert report.rho["loss"] >= 0.8
        assert report.rho["aum"] >= 0.8
        assert report.rho["loss"] > report.rho["grand"]


class TestDeterminism:
    async def test_manifest_rerun_is_byte_identical(self, run_slow, tmp_path):
        raw = {
            **BLOBS,
            "seeds": "0,1",
            "hardness": "uniform,ood_covariate",
            "p": "0.1,0.2",
            "methods": "aum,loss,el2n,forgetting",
        }
        await sweep(build_config(raw), tmp_path / "original", jobs=1)
        manifest = tmp_path / "original" / "sweep_manifest.json"
        expected = (tmp_path / "original" / "metrics.csv").read_bytes()
        for jobs in (1, 8):
            rerun = await asyncio.to_thread(run_from_manifest, manifest, tmp_path / f"jobs{jobs}", jobs)
            assert rerun.exit_code == 0
            assert (tmp_path / f"jobs{jobs}" / "metrics.csv").read_bytes() == expected
