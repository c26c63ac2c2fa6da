import math

import numpy as np
import pytest

from helpers import exhaustive_batch_hard
from reidlab.losses import (batch_hard_triplet, scene_adversarial_loss,
                            softmax_cross_entropy, total_loss)


class TestSoftmaxCrossEntropy:
    def test_uniform_two_classes(self):
        out = softmax_cross_entropy([[5.0, 5.0]], [0])
        assert out.value == pytest.approx(math.log(2.0), abs=1e-12)

    def test_saturated_correct_logit(self):
        out = softmax_cross_entropy([[1000.0, 0.0, 0.0]], [0])
        assert out.value == pytest.approx(0.0, abs=1e-12)

    def test_reference_value(self):
        # softmax([1,2,3]) true class 2: -log(e^3 / (e^1+e^2+e^3))
        out = softmax_cross_entropy([[1.0, 2.0, 3.0]], [2])
        assert out.value == pytest.approx(0.40760596444438104, abs=1e-12)

    def test_out_of_range_label(self):
        with pytest.raises(ValueError, match="out of range"):
            softmax_cross_entropy([[0.0, 1.0]], [2])
        with pytest.raises(ValueError, match="out of range"):
            softmax_cross_entropy([[0.0, 1.0]], [-1])

    def test_gradient_rows_sum_to_zero(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(12, 7))
        labels = rng.integers(0, 7, size=12)
        out = softmax_cross_entropy(logits, labels)
        assert np.abs(out.grad.sum(axis=1)).max() < 1e-12

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(5, 4))
        labels = rng.integers(0, 4, size=5)
        out = softmax_cross_entropy(logits, labels)
        h = 1e-6
        for i in range(5):
            for j in range(4):
                up = logits.copy()
                up[i, j] += h
                dn = logits.copy()
                dn[i, j] -= h
                fd = (softmax_cross_entropy(up, labels).value
                      - softmax_cross_entropy(dn, labels).value) / (2 * h)
                assert out.grad[i, j] == pytest.approx(fd, abs=1e-8)

    def test_mean_over_batch(self):
        one = softmax_cross_entropy([[1.0, 0.0]], [0]).value
        two = softmax_cross_entropy([[1.0, 0.0], [1.0, 0.0]], [0, 0]).value
        assert two == pytest.approx(one, abs=1e-12)


class TestSceneAdversarialLoss:
    def test_uniform_logits_give_log_t(self):
        out = scene_adversarial_loss([[0.0, 0.0]], [1])
        assert out.value == pytest.approx(math.log(2.0), abs=1e-12)

    def test_confident_correct_prediction(self):
        out = scene_adversarial_loss([[50.0, -50.0]], [0])
        assert out.value == pytest.approx(0.0, abs=1e-12)

    def test_reference_value(self):
        out = scene_adversarial_loss([[0.0, 1.0]], [0])
        assert out.value == pytest.approx(1.3132616875182228, abs=1e-12)

    def test_out_of_range_scene(self):
        with pytest.raises(ValueError, match="out of range"):
            scene_adversarial_loss([[0.0, 1.0]], [5])


class TestBatchHardTriplet:
    def test_easy_batch_is_inactive(self):
        # classes 0.3+1 apart with tight positives: every hinge closed
        emb = np.array([[0.0], [0.1], [1.0], [1.2]])
        out, stats = batch_hard_triplet(emb, [0, 0, 1, 1], 0.3)
        assert out.value == 0.0
        assert stats.active_fraction == 0.0
        assert np.all(out.grad == 0.0)

    def test_partially_active_batch(self):
        # anchor 0.0: hardest positive 0.5, hardest negative 0.4 -> 0.3+0.5-0.4
        emb = np.array([[0.0], [0.5], [0.4], [1.0]])
        labels = [0, 0, 1, 1]
        out, stats = batch_hard_triplet(emb, labels, 0.3)
        expected, pairs, _ = exhaustive_batch_hard(emb, labels, 0.3)
        assert out.value == pytest.approx(expected, abs=1e-12)
        assert pairs[0] == (1, 2)
        assert 0.3 + 0.5 - 0.4 == pytest.approx(0.4)
        assert stats.active_fraction > 0.0

    def test_collapsed_classes_far_apart(self):
        emb = np.array([[0.0], [0.0], [5.0], [5.0]])
        out, stats = batch_hard_triplet(emb, [0, 0, 1, 1], 0.3)
        assert out.value == 0.0
        assert stats.active_fraction == 0.0

    def test_single_sample_class_rejected(self):
        with pytest.raises(ValueError, match="single sample"):
            batch_hard_triplet(np.zeros((3, 1)), [0, 0, 1], 0.3)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="2 classes"):
            batch_hard_triplet(np.zeros((4, 1)), [0, 0, 0, 0], 0.3)

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n_classes = int(rng.integers(2, 9))
            counts = rng.integers(2, 5, size=n_classes)
            labels = np.repeat(np.arange(n_classes), counts)
            rng.shuffle(labels)
            labels = labels[:32]
            # re-check validity after truncation
            uniq, c = np.unique(labels, return_counts=True)
            if uniq.size < 2 or c.min() < 2:
                continue
            emb = rng.normal(size=(labels.size, 4))
            out, _ = batch_hard_triplet(emb, labels, 0.3)
            expected, _, _ = exhaustive_batch_hard(emb, labels, 0.3)
            assert out.value == pytest.approx(expected, abs=1e-10)

    def test_translation_invariance(self):
        rng = np.random.default_rng(8)
        emb = rng.normal(size=(12, 5))
        labels = [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]
        base, _ = batch_hard_triplet(emb, labels, 0.3)
        shifted, _ = batch_hard_triplet(emb + rng.normal(size=5), labels, 0.3)
        assert shifted.value == pytest.approx(base.value, abs=1e-9)

    def test_margin_monotonicity(self):
        rng = np.random.default_rng(9)
        emb = rng.normal(size=(8, 3)) * 0.1  # tight batch: all anchors active
        labels = [0, 0, 1, 1, 2, 2, 3, 3]
        lo, stats = batch_hard_triplet(emb, labels, 1.0)
        assert stats.active_fraction == 1.0
        delta = 0.25
        hi, _ = batch_hard_triplet(emb, labels, 1.0 + delta)
        assert hi.value - lo.value == pytest.approx(delta, abs=1e-12)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(10)
        emb = rng.normal(size=(8, 3))
        labels = np.array([0, 0, 1, 1, 2, 2, 3, 3])
        out, _ = batch_hard_triplet(emb, labels, 5.0)  # large margin: all active
        h = 1e-6
        for i in range(8):
            for j in range(3):
                up = emb.copy()
                up[i, j] += h
                dn = emb.copy()
                dn[i, j] -= h
                fd = (batch_hard_triplet(up, labels, 5.0)[0].value
                      - batch_hard_triplet(dn, labels, 5.0)[0].value) / (2 * h)
                assert out.grad[i, j] == pytest.approx(fd, abs=1e-6)

    def test_stats_distances(self):
        emb = np.array([[0.0], [1.0], [10.0], [12.0]])
        _, stats = batch_hard_triplet(emb, [0, 0, 1, 1], 0.3)
        # hardest positives: 1,1,2,2 ; hardest negatives: 10,9,9,11
        assert stats.mean_hard_pos_dist == pytest.approx(1.5)
        assert stats.mean_hard_neg_dist == pytest.approx(9.75)


class TestTotalLoss:
    def test_arithmetic(self):
        assert total_loss(1.0, 0.0, 0.5, 1.0, 0.1) == pytest.approx(0.95)
        assert total_loss(0.7, 0.4, 0.69, 1.0, 0.25) == pytest.approx(0.9275)

    def test_lambda_zero_reduces_to_reid(self):
        assert total_loss(0.7, 0.4, 123.0, 1.0, 0.0) == pytest.approx(1.1)

    def test_negative_weights_rejected(self):
        with pytest.raises(ValueError):
            total_loss(1.0, 1.0, 1.0, 1.0, -0.1)
        with pytest.raises(ValueError):
            total_loss(1.0, 1.0, 1.0, -1.0, 0.1)
