"""
 Copyright Duel 2025
"""
import logging
from math import factorial
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from src.explain.attribution import AttributionResult
from src.models.bag import Bag
from src.models.mil_model import MILNetwork
from src.models.model_params import ModelParams
from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)

# Stacked instances (k, *instance_shape), k possibly 0 -> bag probability
BagPredictor = Callable[[np.ndarray], float]

BRUTE_FORCE_LIMIT = 20
MAX_EXACT_PLAYERS = 16
DISCREPANCY_TOLERANCE = 1e-6


def shapley_weights(players: int) -> np.ndarray:
    """
    w[s] = s! (n - s - 1)! / n! for coalitions of size s not containing the player.
    """
    return np.array([factorial(s) * factorial(players - s - 1) / factorial(players) for s in range(players)])


def shapley_from_values(values: np.ndarray, players: int) -> np.ndarray:
    """
    Exact Shapley values from the value of every coalition, indexed by bitmask.
    :param values: Array of length 2^players; values[mask] = v(coalition of set bits).
    :param players: Number of players.
    :return: One coefficient per player.
    """
    values = np.asarray(values, dtype=np.float64)
    masks = np.arange(1 << players)
    sizes = np.array([bin(m).count("1") for m in masks])
    weights = shapley_weights(players)
    phi = np.zeros(players)
    for i in range(players):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = np.sum(weights[sizes[without]] * (values[without | bit] - values[without]))
    return phi


class BagGame:
    """
    Cooperative game over the instances of one bag: v(S) is the prediction on the sub-bag S.
    Instances outside S are removed, not masked. Values are cached by coalition, and every batch of
    new coalitions evaluated together counts as one predictor group.
    """

    def __init__(self, value_fn: Callable[[Tuple[int, ...]], float], players: int):
        """
        Constructor
        :param value_fn: Maps sorted instance indices to a probability.
        :param players: Bag length r.
        """
        self.value_fn = value_fn
        self.players = players
        self.cache: Dict[FrozenSet[int], float] = {}
        self.groups = 0
        self.evaluations = 0

    @classmethod
    def from_predictor(cls, predictor: BagPredictor, instances: np.ndarray) -> "BagGame":
        instances = np.asarray(instances)
        return cls(lambda idx: float(predictor(instances[list(idx)])), len(instances))

    @classmethod
    def from_network(cls, params: ModelParams, instances: np.ndarray) -> "BagGame":
        """
        Weak-learner game on cached instance features: each coalition costs one pooling step.
        """
        network = MILNetwork(params)
        features, _ = network.encode(np.asarray(instances))
        return cls(lambda idx: network.bag_probability_from_features(features[list(idx)]), len(features))

    def values(self, coalitions: Iterable[Iterable[int]]) -> List[float]:
        keys = [frozenset(c) for c in coalitions]
        missing = [k for k in dict.fromkeys(keys) if k not in self.cache]
        if missing:
            self.groups += 1
            for key in missing:
                self.cache[key] = self.value_fn(tuple(sorted(key)))
                self.evaluations += 1
        return [self.cache[k] for k in keys]

    def value(self, coalition: Iterable[int]) -> float:
        return self.values([coalition])[0]

    def exact_shapley(self, players: Sequence[int]) -> np.ndarray:
        """
        Exact Shapley values of the game restricted to the given players (all others absent).
        """
        players = list(players)
        n = len(players)
        coalitions = [[players[i] for i in range(n) if mask >> i & 1] for mask in range(1 << n)]
        return shapley_from_values(np.array(self.values(coalitions)), n)


def _as_instances(bag) -> Tuple[str, np.ndarray]:
    if isinstance(bag, Bag):
        return bag.id, bag.stacked()
    return "bag", np.asarray(bag)


def shapley_brute_force(predictor: BagPredictor, bag, limit: int = BRUTE_FORCE_LIMIT) -> np.ndarray:
    """
    Exact Shapley value of every instance over all 2^r sub-bags.
    :param predictor: Bag predictor accepting any sub-bag, including the empty one.
    :param bag: Bag or stacked instances.
    :param limit: Largest r accepted.
    :return: Coefficients, length r.
    """
    _, instances = _as_instances(bag)
    r = len(instances)
    if r > limit:
        raise DomainError(f"brute-force Shapley over r={r} instances needs 2^{r} = {1 << r:,} predictor calls; "
                          f"the limit is r <= {limit}")
    return BagGame.from_predictor(predictor, instances).exact_shapley(range(r))


def _split(players: Sequence[int]) -> Tuple[List[int], List[int]]:
    half = (len(players) + 1) // 2
    return list(players[:half]), list(players[half:])


def hshap_instances(predictor: Optional[BagPredictor], bag, t: Optional[float] = None, tolerance: float = 0.0,
                    game: Optional[BagGame] = None, max_exact_players: int = MAX_EXACT_PLAYERS) -> AttributionResult:
    """
    Hierarchical Shapley attribution over the instances of a bag.

    A binary tree over the instances is explored top down. At each node a two-player game between its
    halves is played with only the node's instances present; halves whose coefficient exceeds the
    tolerance are explored further. The leaves reached are the instances that matter; their exact
    Shapley values are then computed among themselves, every pruned instance scoring 0. Under the OR
    structure pruned instances are null players, so the result equals brute force.
    :param predictor: Bag predictor (ignored when ``game`` is given).
    :param bag: Bag or stacked instances.
    :param t: Selection threshold, default 1/r.
    :param tolerance: Minimal coefficient for a half to be explored.
    :param game: Pre-built game, e.g. BagGame.from_network for cached features.
    :param max_exact_players: Above this many relevant instances, coefficients are split down the tree
        proportionally instead (flagged as not exact).
    :return: The attribution.
    """
    bag_id, instances = _as_instances(bag)
    r = len(instances) if game is None else game.players
    if r == 0:
        raise DomainError("cannot attribute an empty bag")
    game = game or BagGame.from_predictor(predictor, instances)
    everyone = list(range(r))
    full, empty = game.values([everyone, []])
    scores = np.zeros(r)
    notes: List[str] = []

    # relevant leaves, and proportional shares for the fallback
    leaves: List[int] = []
    shares: Dict[int, float] = {}
    if full - empty <= tolerance:
        notes.append("pruned at root")
    else:
        stack = [(everyone, full, full - empty)]
        while stack:
            node, node_value, share = stack.pop()
            if len(node) == 1:
                leaves.append(node[0])
                shares[node[0]] = share
                continue
            left, right = _split(node)
            v_left, v_right = game.values([left, right])
            phi_left = 0.5 * ((v_left - empty) + (node_value - v_right))
            phi_right = 0.5 * ((v_right - empty) + (node_value - v_left))
            gain = node_value - empty
            for half, value, phi in ((right, v_right, phi_right), (left, v_left, phi_left)):
                if phi > tolerance:
                    child_share = share * phi / gain if gain != 0 else 0.0
                    stack.append((half, value, child_share))

    exact = True
    if leaves:
        leaves.sort()
        if len(leaves) <= max_exact_players:
            scores[leaves] = game.exact_shapley(leaves)
        else:
            exact = False
            notes.append(f"{len(leaves)} relevant instances exceed the exact limit {max_exact_players}; "
                         f"coefficients split proportionally down the tree")
            for leaf in leaves:
                scores[leaf] = shares[leaf]

    gap = float(scores.sum() - (full - empty))
    if abs(gap) > DISCREPANCY_TOLERANCE:
        logger.info("Bag %s: hierarchical coefficients miss efficiency by %.3g; the predictor is not OR-structured",
                    bag_id, gap)
        notes.append(f"efficiency gap {gap:.3g}")
    return AttributionResult.from_scores(bag_id, "shapley", scores, t, full_value=full, empty_value=empty,
                                         exact=exact, groups_evaluated=game.groups, notes=notes)


def weak_bag_predictor(params: ModelParams) -> BagPredictor:
    """
    Bag predictor of a weak learner accepting any sub-bag; the empty bag scores g(0).
    """
    network = MILNetwork(params)

    def predict(instances: np.ndarray) -> float:
        if len(instances) == 0:
            return network.bag_probability_from_features(np.zeros((0, network.spec.feature_dim)))
        features, _ = network.encode(instances)
        return network.bag_probability_from_features(features)

    return predict


def compare_with_brute_force(game: BagGame, result: AttributionResult) -> float:
    """
    Max absolute difference between hierarchical and brute-force coefficients on the same game.
    """
    if game.players > BRUTE_FORCE_LIMIT:
        raise DomainError(f"oracle comparison needs r <= {BRUTE_FORCE_LIMIT}, got {game.players}; "
                          f"2^{game.players} predictor calls")
    exact = game.exact_shapley(range(game.players))
    difference = float(np.max(np.abs(exact - np.asarray(result.scores))))
    if difference > DISCREPANCY_TOLERANCE:
        logger.warning("Bag %s: hierarchical vs brute-force max diff %.3g", result.bag_id, difference)
    return difference
