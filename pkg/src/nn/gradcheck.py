"""
 Copyright Duel 2025
"""
import logging
from typing import Callable, Optional, Tuple

import numpy as np

from src.nn.optim import ParamSet

logger = logging.getLogger(__name__)

LossAndGrads = Callable[[ParamSet], Tuple[float, ParamSet]]


def grad_check(model_fn: LossAndGrads, params: ParamSet, epsilon: float = 1e-3, n_samples: int = 100,
               rng: Optional[np.random.Generator] = None) -> float:
    """
    Compare analytic gradients against central finite differences on sampled coordinates.

    ``model_fn`` must be deterministic (fix any dropout stream inside it) and return the loss
    together with the analytic gradients for ``params``.
    :param model_fn: params -> (scalar loss, gradients keyed like params).
    :param params: Point at which gradients are checked; perturbed in place and restored.
    :param epsilon: Finite-difference step.
    :param n_samples: Coordinates sampled across all tensors (every coordinate when fewer exist).
    :param rng: Generator used to sample coordinates.
    :return: max |analytic - numeric| / max(1, |analytic|); inf if any difference is non-finite.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    _, analytic = model_fn(params)

    coordinates = [(name, idx) for name, p in params.items() for idx in range(p.size)]
    if len(coordinates) > n_samples:
        picks = rng.choice(len(coordinates), size=n_samples, replace=False)
        coordinates = [coordinates[i] for i in sorted(picks)]

    worst = 0.0
    for name, flat_index in coordinates:
        tensor = params[name].reshape(-1)
        original = tensor[flat_index].copy()
        tensor[flat_index] = original + epsilon
        loss_plus, _ = model_fn(params)
        tensor[flat_index] = original - epsilon
        loss_minus, _ = model_fn(params)
        tensor[flat_index] = original

        numeric = (float(loss_plus) - float(loss_minus)) / (2.0 * epsilon)
        exact = float(analytic[name].reshape(-1)[flat_index]) if name in analytic else 0.0
        if not np.isfinite(numeric) or not np.isfinite(exact):
            logger.warning("Non-finite difference for %s[%d]", name, flat_index)
            return float("inf")
        error = abs(exact - numeric) / max(1.0, abs(exact))
        if error > worst:
            worst = error
            logger.debug("grad_check %s[%d]: analytic=%g numeric=%g", name, flat_index, exact, numeric)
    return worst
