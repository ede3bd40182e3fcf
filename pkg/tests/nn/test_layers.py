"""
 Copyright Duel 2025
"""
import numpy as np
import pytest

from src.nn.layers import dropout_backward, dropout_forward
from src.utilities.errors import DomainError


@pytest.mark.parametrize("rate", [0.25, 0.5])
def test_dropout_zeroes_the_requested_fraction(rate):
    x = np.ones((400, 500), dtype=np.float32)
    dropped, mask = dropout_forward(x, rate, True, np.random.default_rng(0))
    assert abs(np.mean(dropped == 0) - rate) <= 0.01
    # survivors are rescaled so the expectation is unchanged
    assert np.allclose(dropped[dropped != 0], 1.0 / (1.0 - rate))
    assert np.array_equal(dropout_backward(np.ones_like(x), mask), mask)


def test_dropout_is_the_identity_outside_training():
    x = np.arange(6.0)
    dropped, mask = dropout_forward(x, 0.5, False, None)
    assert dropped is x and mask is None


@pytest.mark.parametrize("rate", [-0.1, 1.0])
def test_dropout_rate_bounds(rate):
    with pytest.raises(DomainError):
        dropout_forward(np.ones(3), rate, True, np.random.default_rng(0))


def test_training_dropout_needs_a_generator():
    with pytest.raises(DomainError):
        dropout_forward(np.ones(3), 0.5, True, None)
