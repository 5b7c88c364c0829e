"""Tests for the dynamics and probing scorers, orientation and the scorer registry."""

import logging
import math

import numpy as np
import pytest
from scipy.special import log_softmax, softmax

from hardness_bench.const import HARD_LOW_METHODS
from hardness_bench.data.dataset import Dataset, generate_blobs, standardize
from hardness_bench.data.enums import DistanceMetric, Method
from hardness_bench.exceptions import ScoringError
from hardness_bench.methods import (
    ScoringContext,
    ScoringOptions,
    compute_scores,
    kl_divergence,
    make_score,
    orient,
    parse_methods,
)
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
    true_class_probs,
)
from hardness_bench.methods.probing import augment, score_agreement, score_allsh
from hardness_bench.trainer import (
    DynamicsRecord,
    MlpConfig,
    TrainConfig,
    fit_with_recording,
    init_model,
    predict_proba,
)


def make_record(probs=None, logits=None, **fields) -> DynamicsRecord:
    """Hand-built record; fields a scorer does not read are zero-filled."""
    if logits is None:
        logits = np.log(np.maximum(np.asarray(probs, dtype=float), 1e-300))
    if probs is None:
        probs = softmax(np.asarray(logits, dtype=float), axis=2)
    probs = np.asarray(probs, dtype=float)
    T, n, _ = probs.shape
    values = {
        "losses": np.zeros((T, n)),
        "correct": np.zeros((T, n), dtype=bool),
        "grad_sq_norm": np.zeros((T, n)),
        "embeddings": np.zeros((n, 1)),
    }
    values.update(fields)
    return DynamicsRecord(probs=probs, logits=np.asarray(logits, dtype=float), **values)


def constant_true_prob(values, k=2) -> DynamicsRecord:
    """One sample with label 0 whose true-class probability follows ``values`` over epochs."""
    probs = np.array([[[v] + [(1 - v) / (k - 1)] * (k - 1)] for v in values])
    return make_record(probs=probs)


class TestOrientation:
    @pytest.mark.parametrize("method", list(Method))
    def test_direction_table(self, method):
        score = make_score(method, np.array([1.0, -2.0, 3.0]))
        flipped = method in HARD_LOW_METHODS
        assert score.direction_flipped is flipped
        assert score.oriented.tolist() == ([-1.0, 2.0, -3.0] if flipped else [1.0, -2.0, 3.0])

    def test_hard_low_set(self):
        assert HARD_LOW_METHODS == {
            Method.AUM,
            Method.CLEANLAB,
            Method.AGREEMENT,
            Method.DATAIQ_CONFIDENCE,
            Method.DATAMAPS_CONFIDENCE,
        }

    def test_orient_is_idempotent(self):
        score = make_score(Method.AUM, np.array([0.5, -1.0]))
        twice = orient(orient(score))
        assert np.array_equal(twice.oriented, score.oriented)
        assert twice.direction_flipped

    def test_rejects_non_finite(self):
        with pytest.raises(ScoringError, match="non-finite"):
            make_score(Method.LOSS, np.array([1.0, np.inf]))


class TestDynamicsScorers:
    """Closed-form values on hand-built records."""

    def test_aum_single_epoch_margin(self):
        record = make_record(logits=np.array([[[2.0, 1.0, 0.0]]]))
        assert score_aum(record, np.array([0])).raw.tolist() == [1.0]

    def test_aum_margins_average_out(self):
        record = make_record(logits=np.array([[[2.0, 1.0, 0.0]], [[1.0, 2.0, 0.0]]]))
        assert score_aum(record, np.array([0])).raw[0] == pytest.approx(0.0)

    def test_dataiq_at_half(self):
        confidence, aleatoric = score_dataiq(constant_true_prob([0.5, 0.5, 0.5]), np.array([0]))
        assert confidence.raw[0] == pytest.approx(0.5)
        assert aleatoric.raw[0] == pytest.approx(0.25)
        assert confidence.method is Method.DATAIQ_CONFIDENCE
        assert aleatoric.method is Method.DATAIQ_ALEATORIC

    def test_datamaps_alternating(self):
        confidence, variability = score_datamaps(constant_true_prob([0.0, 1.0, 0.0, 1.0]), np.array([0]))
        assert confidence.raw[0] == pytest.approx(0.5)
        assert variability.raw[0] == pytest.approx(0.5)

    def test_true_class_probs(self):
        record = constant_true_prob([0.2, 0.9])
        assert true_class_probs(record, np.array([0]))[:, 0] == pytest.approx([0.2, 0.9])

    def test_el2n_binary(self):
        record = make_record(probs=np.array([[[0.5, 0.5]]]))
        assert score_el2n(record, np.array([0])).raw[0] == pytest.approx(math.sqrt(0.5), abs=1e-12)

    def test_el2n_uniform_four_classes(self):
        record = make_record(probs=np.full((1, 1, 4), 0.25))
        assert score_el2n(record, np.array([0])).raw[0] == pytest.approx(math.sqrt(0.75))

    def test_loss_and_grand_average_over_epochs(self):
        record = make_record(
            probs=np.full((2, 2, 2), 0.5),
            losses=np.array([[1.0, 0.0], [3.0, 2.0]]),
            grad_sq_norm=np.array([[4.0, 1.0], [16.0, 9.0]]),
        )
        labels = np.array([0, 1])
        assert score_loss(record, labels).raw.tolist() == [2.0, 1.0]
        assert score_grand(record, labels).raw.tolist() == [3.0, 2.0]

    def test_vog_two_checkpoints(self):
        record = make_record(
            probs=np.full((2, 1, 2), 0.5),
            input_grads=np.array([[[1.0, 3.0]], [[3.0, 1.0]]]),
            input_grad_epochs=(1, 2),
        )
        score = score_vog(record, np.array([0]))
        assert score.raw[0] == pytest.approx(1.0)
        assert score.diagnostics["checkpoints"] == [1, 2]

    def test_vog_needs_checkpoints(self):
        with pytest.raises(ScoringError, match="checkpoint"):
            score_vog(make_record(probs=np.full((2, 1, 2), 0.5)), np.array([0]))

    def test_forgetting_counts_drops(self):
        correct = np.array([[True], [False], [True], [False]])
        record = make_record(probs=np.full((4, 1, 2), 0.5), correct=correct)
        assert score_forgetting(record, np.array([0])).raw[0] == 2.0

    def test_never_learned_scores_above_any_count(self):
        correct = np.array([[True, False], [False, False], [True, False], [True, False]])
        record = make_record(probs=np.full((4, 2, 2), 0.5), correct=correct)
        assert score_forgetting(record, np.array([0, 1])).raw.tolist() == [1.0, 5.0]

    def test_label_shape_checked(self):
        with pytest.raises(ScoringError, match="labels"):
            score_loss(make_record(probs=np.full((1, 3, 2), 0.5)), np.array([0, 1]))


class TestPrototypicality:
    def test_euclidean_distance_to_centroid(self):
        embeddings = np.array([[0.0, 0.0], [2.0, 0.0], [5.0, 5.0], [5.0, 9.0]])
        score = score_prototypicality(embeddings, np.array([0, 0, 1, 1]))
        assert score.raw.tolist() == [1.0, 1.0, 2.0, 2.0]
        assert score.diagnostics["metric"] == "euclidean"

    def test_cosine_distance(self):
        embeddings = np.array([[1.0, 0.0], [0.0, 1.0]])
        score = score_prototypicality(embeddings, np.array([0, 0]), DistanceMetric.COSINE)
        assert score.raw == pytest.approx([1 - 1 / math.sqrt(2)] * 2)

    def test_singleton_class_scores_zero_and_warns(self, caplog):
        embeddings = np.array([[0.0], [2.0], [7.0]])
        with caplog.at_level(logging.WARNING):
            score = score_prototypicality(embeddings, np.array([0, 0, 1]))
        assert score.raw[2] == 0.0
        assert "single sample" in caplog.text


class TestProbing:
    def test_kl_of_certain_against_uniform(self):
        assert kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5]))[0] == pytest.approx(math.log(2))

    def test_kl_of_identical_is_zero(self):
        p = np.array([[0.2, 0.3, 0.5]])
        assert kl_divergence(p, p)[0] == pytest.approx(0.0, abs=1e-15)

    def test_kl_with_zero_in_q_is_finite(self):
        assert np.isfinite(kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0]))[0])

    def test_flip_augmentation_for_rasters(self):
        features = np.arange(8.0).reshape(2, 4)
        ds = Dataset(features, np.array([0, 1]), k=2, grid_shape=(2, 2))
        assert augment(ds, 0.1, seed=0).tolist() == [[1.0, 0.0, 3.0, 2.0], [5.0, 4.0, 7.0, 6.0]]

    def test_allsh_zero_on_mirror_symmetric_rasters(self):
        features = np.array([[1.0, 2.0, 1.0, 0.0, 3.0, 0.0], [4.0, 4.0, 4.0, 2.0, 0.0, 2.0]])
        ds = Dataset(features, np.array([0, 1]), k=2, grid_shape=(2, 3))
        model = init_model(MlpConfig(hidden_sizes=(4,), seed=1), 6, 2)
        score = score_allsh(model, ds)
        assert np.all(score.raw == 0.0)
        assert score.diagnostics["augmentation"] == "hflip"

    def test_allsh_tabular_is_seeded(self, blobs):
        model = init_model(MlpConfig(hidden_sizes=(8,), seed=1), blobs.d, blobs.k)
        first = score_allsh(model, blobs, 0.1, seed=4)
        assert np.all(first.raw >= 0)
        assert np.array_equal(first.raw, score_allsh(model, blobs, 0.1, seed=4).raw)
        assert not np.array_equal(first.raw, score_allsh(model, blobs, 0.1, seed=5).raw)

    def test_allsh_rejects_zero_sigma_on_tabular(self, blobs):
        model = init_model(MlpConfig(hidden_sizes=(8,), seed=1), blobs.d, blobs.k)
        with pytest.raises(ScoringError, match="sigma"):
            score_allsh(model, blobs, 0.0)

    def test_agreement_without_dropout_is_max_probability(self, blobs):
        model = init_model(MlpConfig(hidden_sizes=(8,), dropout_rate=0.0, seed=1), blobs.d, blobs.k)
        score = score_agreement(model, blobs, passes=3)
        assert score.raw == pytest.approx(predict_proba(model, blobs.features).max(axis=1))
        assert score.direction_flipped


class TestRegistry:
    @pytest.fixture(scope="class")
    def context(self):
        ds = standardize(generate_blobs(120, 2, 3, 8.0, seed=2))
        mcfg = MlpConfig(hidden_sizes=(8,), seed=3)
        tcfg = TrainConfig(epochs=3, seed=4)
        model = init_model(mcfg, ds.d, ds.k)
        record = fit_with_recording(model, ds, tcfg)
        return ScoringContext(record=record, model=model, dataset=ds, mcfg=mcfg, tcfg=tcfg)

    def test_parse_keeps_order_and_drops_duplicates(self):
        assert parse_methods(["loss", "aum", "loss"]) == (Method.LOSS, Method.AUM)

    def test_parse_unknown(self):
        with pytest.raises(ScoringError, match="unknown method"):
            parse_methods(["loss", "nonsense"])

    def test_parse_empty(self):
        with pytest.raises(ScoringError, match="empty"):
            parse_methods([])

    def test_paired_vectors_come_from_one_run(self, context):
        scores = compute_scores(context, [Method.DATAIQ_ALEATORIC, Method.DATAIQ_CONFIDENCE], seed=1)
        p = true_class_probs(context.record, context.dataset.labels)
        assert scores[Method.DATAIQ_CONFIDENCE].raw == pytest.approx(p.mean(axis=0))
        assert scores[Method.DATAIQ_ALEATORIC].raw == pytest.approx((p * (1 - p)).mean(axis=0))

    def test_all_cheap_scorers_produce_finite_vectors(self, context):
        methods = [m for m in Method if m not in (Method.CLEANLAB, Method.DETECTOR)]
        scores = compute_scores(context, methods, ScoringOptions(agreement_passes=3), seed=1)
        assert list(scores) == methods
        for method, score in scores.items():
            assert len(score) == context.dataset.n, method
            assert np.all(np.isfinite(score.oriented)), method

    def test_seeded_scorers_are_reproducible(self, context):
        first = compute_scores(context, [Method.ALLSH, Method.AGREEMENT], seed=6)
        second = compute_scores(context, [Method.ALLSH, Method.AGREEMENT], seed=6)
        for method in first:
            assert np.array_equal(first[method].raw, second[method].raw)


class TestInvariances:
    @pytest.fixture(scope="class")
    def recorded(self):
        ds = standardize(generate_blobs(90, 2, 3, 6.0, seed=11))
        model = init_model(MlpConfig(hidden_sizes=(8, 6), seed=5), ds.d, ds.k)
        record = fit_with_recording(model, ds, TrainConfig(epochs=4, input_grad_stride=2, seed=6))
        return ds, record

    @staticmethod
    def _vectors(record, labels) -> dict[Method, np.ndarray]:
        vectors = [score_vog(record, labels)] if record.input_grads is not None else []
        vectors += [
            score_aum(record, labels),
            *score_dataiq(record, labels),
            *score_datamaps(record, labels),
            score_loss(record, labels),
            score_grand(record, labels),
            score_el2n(record, labels),
            score_forgetting(record, labels),
            score_prototypicality(record.embeddings, labels),
        ]
        return {score.method: score.raw for score in vectors}

    def test_permuting_samples_permutes_scores(self, recorded):
        ds, record = recorded
        perm = np.random.default_rng(3).permutation(ds.n)
        permuted = DynamicsRecord(
            probs=record.probs[:, perm],
            logits=record.logits[:, perm],
            losses=record.losses[:, perm],
            correct=record.correct[:, perm],
            grad_sq_norm=record.grad_sq_norm[:, perm],
            embeddings=record.embeddings[perm],
            input_grads=record.input_grads[:, perm],
            input_grad_epochs=record.input_grad_epochs,
        )
        original = self._vectors(record, ds.labels)
        shuffled = self._vectors(permuted, ds.labels[perm])
        assert list(shuffled) == list(original)
        for method, raw in original.items():
            assert shuffled[method] == pytest.approx(raw[perm], rel=1e-12, abs=1e-12), method

    @pytest.mark.parametrize(
        "method",
        [
            Method.AUM,
            Method.DATAIQ_CONFIDENCE,
            Method.DATAIQ_ALEATORIC,
            Method.DATAMAPS_CONFIDENCE,
            Method.DATAMAPS_VARIABILITY,
            Method.LOSS,
            Method.EL2N,
        ],
    )
    def test_adding_a_constant_to_logits_changes_nothing(self, recorded, method):
        ds, record = recorded
        rows = np.arange(ds.n)
        shifts = np.random.default_rng(4).uniform(-50.0, 50.0, size=(record.epochs, ds.n, 1))

        def rebuilt(logits):
            log_probs = log_softmax(logits, axis=2)
            return make_record(
                probs=np.exp(log_probs),
                logits=logits,
                losses=-log_probs[:, rows, ds.labels],
            )

        base = self._vectors(rebuilt(record.logits), ds.labels)
        shifted = self._vectors(rebuilt(record.logits + shifts), ds.labels)
        assert shifted[method] == pytest.approx(base[method], rel=1e-9, abs=1e-9)
