"""
 Copyright Duel 2025
"""
import numpy as np
import pytest

from src.nn.functional import (LOGIT_CLAMP, focal_loss, focal_loss_grad, sigmoid, sigmoid_backward, sparsemax,
                               sparsemax_backward)
from src.utilities.errors import DomainError


class TestSigmoid:

    def test_midpoint(self):
        assert sigmoid(np.array(0.0)) == 0.5

    def test_clamped_logits_stay_finite(self):
        p = sigmoid(np.array([-1e6, 1e6]))
        assert np.all(np.isfinite(p))
        assert p[0] > 0 and p[1] < 1

    def test_no_gradient_beyond_clamp(self):
        logits = np.array([LOGIT_CLAMP + 1.0, 0.0])
        p = sigmoid(logits)
        grad = sigmoid_backward(logits, p, np.ones(2))
        assert grad[0] == 0.0
        assert grad[1] == pytest.approx(0.25)


class TestSparsemax:

    @pytest.mark.parametrize("logits, expected", [
        ([1.0, 2.0, 3.0], [0.0, 0.0, 1.0]),
        ([0.0, 0.0], [0.5, 0.5]),
        ([1.0, 1.5], [0.25, 0.75]),
        ([7.0], [1.0]),
    ])
    def test_known_projections(self, logits, expected):
        assert sparsemax(np.array(logits)) == pytest.approx(expected)

    def test_output_on_simplex(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            p = sparsemax(rng.normal(size=rng.integers(1, 30)) * 3)
            assert np.all(p >= 0)
            assert p.sum() == pytest.approx(1.0)

    def test_shift_invariance(self):
        z = np.array([0.3, -1.2, 0.9, 0.85])
        assert sparsemax(z + 10.0) == pytest.approx(sparsemax(z))

    def test_keeps_float32(self):
        assert sparsemax(np.array([0.1, 0.2], dtype=np.float32)).dtype == np.float32

    @pytest.mark.parametrize("bad", [np.array([]), np.array([1.0, np.nan]), np.ones((2, 2))])
    def test_rejects_invalid_input(self, bad):
        with pytest.raises(DomainError):
            sparsemax(bad)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=6)
        upstream = rng.normal(size=6)
        analytic = sparsemax_backward(z, upstream)
        eps = 1e-6
        numeric = np.array([(upstream @ sparsemax(z + eps * e) - upstream @ sparsemax(z - eps * e)) / (2 * eps)
                            for e in np.eye(6)])
        assert analytic == pytest.approx(numeric, abs=1e-6)

    def test_backward_is_zero_off_support(self):
        z = np.array([1.0, 2.0, 3.0])
        assert sparsemax_backward(z, np.array([5.0, -2.0, 1.0])) == pytest.approx([0.0, 0.0, 0.0])


class TestFocalLoss:

    def test_reduces_to_cross_entropy(self):
        p = np.array([0.1, 0.7, 0.9])
        y = np.array([0, 1, 1])
        expected = -(y * np.log(p) + (1 - y) * np.log(1 - p))
        assert focal_loss(p, y, alpha=1.0, gamma=0.0) == pytest.approx(expected)

    def test_confident_correct_predictions_are_down_weighted(self):
        assert focal_loss(0.95, 1) < focal_loss(0.95, 1, gamma=0.0)

    def test_scalar_input_gives_float(self):
        assert isinstance(focal_loss(0.3, 0), float)

    def test_extreme_probabilities_are_finite(self):
        assert np.isfinite(focal_loss(0.0, 1))
        assert np.isfinite(focal_loss(1.0, 0))

    @pytest.mark.parametrize("alpha, gamma", [(0.0, 2.0), (1.5, 2.0), (0.25, -1.0)])
    def test_rejects_invalid_constants(self, alpha, gamma):
        with pytest.raises(DomainError):
            focal_loss(0.5, 1, alpha=alpha, gamma=gamma)

    @pytest.mark.parametrize("y", [0, 1])
    def test_gradient_matches_finite_differences(self, y):
        p = np.array([0.2, 0.5, 0.8])
        labels = np.full(3, y)
        eps = 1e-7
        numeric = (focal_loss(p + eps, labels) - focal_loss(p - eps, labels)) / (2 * eps)
        assert focal_loss_grad(p, labels) == pytest.approx(numeric, rel=1e-5)
