"""Tests for the Friedman test, Holm correction and pairwise post-hoc."""

import math

import numpy as np
import pytest

from hardness_bench.evaluator import friedman, holm_correction, pairwise_posthoc, rank_test, wilcoxon_p
from hardness_bench.exceptions import EvaluationError


class TestFriedman:
    def test_consistent_ordering_hand_value(self):
        """Four setups ranking three methods identically: chi2 = 8, df = 2, p = exp(-4)."""
        ranks = np.tile([1.0, 2.0, 3.0], (4, 1))
        result = friedman(ranks, ["a", "b", "c"])
        assert result.statistic == pytest.approx(8.0)
        assert result.df == 2
        assert result.p_value == pytest.approx(math.exp(-4), rel=1e-9)
        assert result.mean_ranks == (1.0, 2.0, 3.0)

    def test_all_tied(self):
        result = friedman(np.full((5, 3), 2.0))
        assert result.statistic == 0.0
        assert result.p_value == pytest.approx(1.0)

    def test_default_names(self):
        assert friedman(np.tile([1.0, 2.0], (3, 1))).methods == ("m0", "m1")

    @pytest.mark.parametrize("shape", [(1, 3), (4, 1)])
    def test_too_small(self, shape):
        with pytest.raises(EvaluationError, match="Friedman needs"):
            friedman(np.ones(shape))

    def test_name_count_checked(self):
        with pytest.raises(EvaluationError, match="method names"):
            friedman(np.tile([1.0, 2.0], (3, 1)), ["only"])


class TestHolm:
    def test_step_down_is_monotone(self):
        assert holm_correction(np.array([0.01, 0.04, 0.03])) == pytest.approx([0.03, 0.06, 0.06])

    def test_capped_at_one(self):
        assert holm_correction(np.array([0.6, 0.7])).tolist() == [1.0, 1.0]


class TestPosthoc:
    def test_identical_columns_give_one(self):
        assert wilcoxon_p(np.array([0.1, 0.2, 0.3]), np.array([0.1, 0.2, 0.3])) == 1.0

    def test_consistent_winner_is_significant(self):
        rng = np.random.default_rng(0)
        base = rng.uniform(0.2, 0.4, size=12)
        metrics = np.column_stack([base + 0.4, base + 0.2, base])
        result = rank_test(metrics, ["a", "b", "c"])
        assert result.p_value < 0.05
        assert result.mean_ranks == (1.0, 2.0, 3.0)
        assert result.linked == ()
        assert result.pairwise_p[0, 2] < 0.05

    def test_tied_methods_are_linked(self):
        metrics = np.tile([0.5, 0.5, 0.5], (6, 1))
        result = rank_test(metrics, ["a", "b", "c"])
        assert result.p_value == pytest.approx(1.0)
        assert result.is_linked("a", "c")
        assert len(result.linked) == 3

    def test_to_dict_layout(self):
        metrics = np.tile([0.9, 0.1], (5, 1))
        payload = rank_test(metrics, ["x", "y"]).to_dict()
        assert set(payload) == {"methods", "friedman", "mean_ranks", "pairwise_p", "not_different", "alpha"}
        assert payload["mean_ranks"] == {"x": 1.0, "y": 2.0}
        assert payload["friedman"]["df"] == 1

    def test_method_count_mismatch(self):
        result = friedman(np.tile([1.0, 2.0], (3, 1)), ["a", "b"])
        with pytest.raises(EvaluationError, match="methods"):
            pairwise_posthoc(np.ones((3, 3)), result)
