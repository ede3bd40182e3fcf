"""
 Copyright Duel 2025
"""
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Tuple

import numpy as np

from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)

ParamSet = Dict[str, np.ndarray]


class OptimizerKind(str, Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass
class OptimizerState:
    """
    Accumulators and constants of one optimizer. Accumulator shapes mirror the parameters.
    """
    kind: OptimizerKind
    learning_rate: float
    weight_decay: float = 0.0
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: ParamSet = field(default_factory=dict)
    second_moment: ParamSet = field(default_factory=dict)

    @classmethod
    def create(cls, kind: OptimizerKind, params: ParamSet, learning_rate: float, weight_decay: float = 0.0,
               momentum: float = 0.9) -> "OptimizerState":
        """
        Build a fresh state with zeroed accumulators for every parameter.
        :param kind: adaptive-moment (adam) or momentum SGD.
        :param params: The parameters that will be optimised.
        :param learning_rate: Initial learning rate.
        :param weight_decay: L2 penalty added to the gradients.
        :param momentum: Momentum constant for SGD.
        :return: The new state.
        """
        kind = OptimizerKind(kind)
        state = cls(kind=kind, learning_rate=learning_rate, weight_decay=weight_decay, momentum=momentum)
        state.first_moment = {name: np.zeros_like(p) for name, p in params.items()}
        if kind == OptimizerKind.ADAM:
            state.second_moment = {name: np.zeros_like(p) for name, p in params.items()}
        return state


def optimizer_step(params: ParamSet, grads: ParamSet, state: OptimizerState) -> Tuple[ParamSet, OptimizerState]:
    """
    Apply one update to ``params`` in place.

    Weight decay is added to the gradient as an L2 term before the update rule, like
    torch.optim.SGD/Adam do.
    :param params: Parameters keyed by name.
    :param grads: Gradients keyed by the same names (missing names are left untouched).
    :param state: Optimizer state, mutated in place.
    :return: The updated parameters and state.
    """
    state.step += 1
    for name, grad in grads.items():
        if name not in params or name not in state.first_moment:
            raise DomainError(f"No parameter/accumulator named '{name}'")
        param = params[name]
        if grad.shape != param.shape or state.first_moment[name].shape != param.shape:
            raise DomainError(
                f"Shape mismatch for '{name}': param {param.shape}, grad {grad.shape}, "
                f"accumulator {state.first_moment[name].shape}"
            )
        g = grad + state.weight_decay * param if state.weight_decay else grad

        if state.kind == OptimizerKind.SGD:
            velocity = state.first_moment[name]
            velocity *= state.momentum
            velocity += g
            param -= (state.learning_rate * velocity).astype(param.dtype)
        else:
            m = state.first_moment[name]
            v = state.second_moment[name]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * g * g
            m_hat = m / (1.0 - state.beta1 ** state.step)
            v_hat = v / (1.0 - state.beta2 ** state.step)
            param -= (state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)).astype(param.dtype)
    return params, state


def scheduled_learning_rate(base_rate: float, epoch: int, decay_factor: float, decay_period: int) -> float:
    """
    Step decay: the rate is multiplied by ``decay_factor`` every ``decay_period`` epochs.
    """
    return base_rate * decay_factor ** (epoch // max(decay_period, 1))
