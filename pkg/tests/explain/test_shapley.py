"""
 Copyright Duel 2025
"""
import numpy as np
import pytest

from src.explain.shapley import (BRUTE_FORCE_LIMIT, BagGame, compare_with_brute_force, hshap_instances,
                                 shapley_brute_force, shapley_from_values, weak_bag_predictor)
from src.models.bag import Bag
from src.models.model_params import EncoderSpec, LearnerKind, ModelParams
from src.utilities.errors import DomainError


def noisy_or(instances: np.ndarray) -> float:
    """
    1 - prod(1 - p_i) with p_i read from the first feature; instances with p_i = 0 are null players.
    """
    if len(instances) == 0:
        return 0.0
    return float(1.0 - np.prod(1.0 - instances[:, 0]))


def or_bag(r: int, positives, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    instances = np.zeros((r, 3))
    instances[:, 1:] = rng.normal(size=(r, 2))
    instances[list(positives), 0] = rng.uniform(0.3, 0.9, size=len(positives))
    return instances


@pytest.mark.parametrize("r, positives", [(1, [0]), (6, [2]), (9, [0, 1, 7]), (12, [3, 4, 5, 6]), (12, [])])
def test_hierarchical_equals_brute_force_under_or(r, positives):
    instances = or_bag(r, positives, seed=r)
    exact = shapley_brute_force(noisy_or, instances)
    result = hshap_instances(noisy_or, instances)
    assert np.allclose(result.scores, exact, atol=1e-9)
    assert result.exact
    assert result.efficiency_gap() == pytest.approx(0.0, abs=1e-9)


def test_hierarchical_equals_brute_force_on_random_or_bags():
    rng = np.random.default_rng(7)
    for trial in range(200):
        r = int(rng.integers(1, 11))
        positives = np.flatnonzero(rng.random(r) < 0.3)
        instances = or_bag(r, positives, seed=trial)
        exact = shapley_brute_force(noisy_or, instances)
        result = hshap_instances(noisy_or, instances)
        assert np.max(np.abs(np.asarray(result.scores) - exact)) <= 1e-9, f"trial {trial}, r={r}"


def test_exact_or_game_splits_credit_evenly():
    instances = or_bag(8, [1, 5])
    instances[[1, 5], 0] = 1.0
    result = hshap_instances(noisy_or, instances)
    assert result.scores[1] == pytest.approx(0.5)
    assert result.scores[5] == pytest.approx(0.5)
    assert result.selected == [1, 5]


def test_hierarchical_explores_fewer_coalitions_than_brute_force():
    instances = or_bag(16, [11])
    game = BagGame.from_predictor(noisy_or, instances)
    hshap_instances(None, instances, game=game)
    assert game.evaluations < 64
    assert game.groups >= 1


def test_game_caches_coalitions():
    calls = []
    game = BagGame(lambda idx: calls.append(idx) or float(len(idx)), 4)
    assert game.values([[0, 1], [1, 0], []]) == [2.0, 2.0, 0.0]
    assert game.value([1, 0]) == 2.0
    assert len(calls) == 2
    assert game.groups == 1


def test_constant_predictor_is_pruned_at_the_root():
    result = hshap_instances(lambda instances: 0.25, or_bag(5, []))
    assert result.scores == [0.0] * 5
    assert result.selected == []
    assert "pruned at root" in result.notes


def test_fully_explored_network_game_matches_brute_force():
    params = ModelParams.initialise(EncoderSpec.for_instances((6,), hidden=8, attention_hidden=4), LearnerKind.WEAK,
                                    seed=2, dtype=np.float64)
    instances = np.random.default_rng(2).normal(size=(7, 6))
    game = BagGame.from_network(params, instances)
    # a negative tolerance explores every half, so every instance is a leaf
    result = hshap_instances(None, Bag.from_arrays("b", instances, bag_label=1), game=game, tolerance=-1.0)
    assert result.bag_id == "b"
    assert compare_with_brute_force(game, result) <= 1e-6


def test_network_game_matches_the_sub_bag_predictor():
    params = ModelParams.initialise(EncoderSpec.for_instances((6,), hidden=8, attention_hidden=4), LearnerKind.WEAK,
                                    seed=3, dtype=np.float64)
    instances = np.random.default_rng(3).normal(size=(5, 6))
    game = BagGame.from_network(params, instances)
    predictor = weak_bag_predictor(params)
    for coalition in ([], [0], [1, 3], [0, 1, 2, 3, 4]):
        assert game.value(coalition) == pytest.approx(predictor(instances[coalition]), abs=1e-12)


def test_shapley_from_values_additive_game():
    # v(S) = sum of member weights: each player earns its own weight
    weights = np.array([0.1, 0.4, 0.2])
    values = [sum(w for i, w in enumerate(weights) if mask >> i & 1) for mask in range(8)]
    assert np.allclose(shapley_from_values(np.array(values), 3), weights)


def test_brute_force_limit():
    with pytest.raises(DomainError, match="2\\^21"):
        shapley_brute_force(noisy_or, np.zeros((BRUTE_FORCE_LIMIT + 1, 3)))
    big = BagGame(lambda idx: 0.0, BRUTE_FORCE_LIMIT + 1)
    result = hshap_instances(None, np.zeros((BRUTE_FORCE_LIMIT + 1, 3)), game=big)
    with pytest.raises(DomainError):
        compare_with_brute_force(big, result)


def test_empty_bag_is_refused():
    with pytest.raises(DomainError):
        hshap_instances(noisy_or, np.zeros((0, 3)))


def test_proportional_fallback_above_the_exact_limit():
    instances = or_bag(12, list(range(12)))
    result = hshap_instances(noisy_or, instances, max_exact_players=4)
    assert not result.exact
    assert sum(result.scores) == pytest.approx(result.full_value - result.empty_value)


def test_single_certain_positive_needs_few_groups():
    instances = or_bag(8, [5])
    instances[5, 0] = 1.0
    game = BagGame.from_predictor(noisy_or, instances)
    result = hshap_instances(None, instances, game=game)
    assert result.scores[5] == 1.0
    assert result.selected == [5]
    assert game.groups <= 2 * np.log2(8) + 1


def test_group_count_grows_with_positives_not_length():
    rng = np.random.default_rng(21)
    for trial in range(100):
        r = int(rng.integers(2, 65))
        k = int(rng.integers(1, min(r, 6) + 1))
        instances = or_bag(r, rng.choice(r, size=k, replace=False), seed=trial)
        game = BagGame.from_predictor(noisy_or, instances)
        hshap_instances(None, instances, game=game)
        assert game.groups <= 4 * k * (np.log2(r) + 1), f"trial {trial}, r={r}, k={k}"


def test_identical_instances_get_equal_credit():
    params = ModelParams.initialise(EncoderSpec.for_instances((6,), hidden=8, attention_hidden=4), LearnerKind.WEAK,
                                    seed=4, dtype=np.float64)
    rng = np.random.default_rng(4)
    instances = rng.normal(size=(6, 6))
    instances[4] = instances[1]
    values = shapley_brute_force(weak_bag_predictor(params), instances)
    assert abs(values[1] - values[4]) <= 1e-9

    twins = or_bag(10, [2, 7])
    twins[7] = twins[2]
    result = hshap_instances(noisy_or, twins)
    assert abs(result.scores[2] - result.scores[7]) <= 1e-9
