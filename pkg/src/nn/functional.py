"""
 Copyright Duel 2025
"""
import logging

import numpy as np

from src.utilities.errors import DomainError

logger = logging.getLogger(__name__)

LOGIT_CLAMP = 30.0
PROBABILITY_EPS = 1e-7


def sigmoid(logits: np.ndarray) -> np.ndarray:
    """
    Logistic function with logits clamped to +/- LOGIT_CLAMP before exponentiation.
    :param logits: Array (or scalar) of logits.
    :return: Probabilities in (0, 1), same dtype as the input.
    """
    z = np.clip(np.asarray(logits), -LOGIT_CLAMP, LOGIT_CLAMP)
    return 1.0 / (1.0 + np.exp(-z))


def sigmoid_backward(logits: np.ndarray, probabilities: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """
    Gradient through the clamped sigmoid. Clamped logits carry no gradient.
    """
    inside = np.abs(np.asarray(logits)) < LOGIT_CLAMP
    return upstream * probabilities * (1.0 - probabilities) * inside


def sparsemax(logits: np.ndarray) -> np.ndarray:
    """
    Euclidean projection of a score vector onto the probability simplex.

    The output is non-negative, sums to one and is exactly zero for scores that fall
    below the support threshold.
    :param logits: One-dimensional array of finite scores, length r >= 1.
    :return: Probability vector of length r with the dtype of the input.
    """
    z = np.asarray(logits)
    if z.ndim != 1 or z.size == 0:
        raise DomainError(f"sparsemax expects a non-empty vector, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise DomainError("sparsemax received non-finite logits")
    dtype = z.dtype if np.issubdtype(z.dtype, np.floating) else np.float64
    if z.size == 1:
        return np.ones(1, dtype=dtype)

    z64 = z.astype(np.float64)
    u = np.sort(z64)[::-1]
    cssv = np.cumsum(u) - 1.0
    ind = np.arange(1, z64.size + 1)
    support = u - cssv / ind > 0
    rho = np.count_nonzero(support)
    theta = cssv[rho - 1] / rho
    return np.maximum(z64 - theta, 0.0).astype(dtype)


def sparsemax_backward(logits: np.ndarray, upstream_grad: np.ndarray) -> np.ndarray:
    """
    Jacobian-vector product of sparsemax: the upstream gradient is mean-centred over the
    support of the projection and zeroed elsewhere.
    :param logits: The scores sparsemax was evaluated on.
    :param upstream_grad: Gradient of the loss with respect to the sparsemax output.
    :return: Gradient with respect to the scores.
    """
    z = np.asarray(logits)
    g = np.asarray(upstream_grad)
    if z.shape != g.shape:
        raise DomainError(f"sparsemax_backward length mismatch: {z.shape} vs {g.shape}")
    support = sparsemax(z) > 0
    out = np.zeros_like(g)
    out[support] = g[support] - g[support].mean()
    return out


def _pt(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.where(y == 1, p, 1.0 - p)


def _clamp_probabilities(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    clamped = np.clip(p, PROBABILITY_EPS, 1.0 - PROBABILITY_EPS)
    n_clamped = int(np.count_nonzero(clamped != p))
    if n_clamped:
        logger.debug("Clamped %d probabilities into [%g, 1 - %g]", n_clamped, PROBABILITY_EPS, PROBABILITY_EPS)
    return clamped


def focal_loss(p, y, alpha: float = 0.25, gamma: float = 2.0):
    """
    Focal loss -alpha * (1 - p_t)^gamma * log(p_t), with p_t = p for positives and 1 - p otherwise.

    With gamma = 0 and alpha = 1 this is binary cross-entropy.
    :param p: Predicted probability (scalar or array).
    :param y: Binary label(s) matching p.
    :param alpha: Weight in (0, 1].
    :param gamma: Focusing exponent >= 0.
    :return: Non-negative loss, scalar for scalar inputs.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must be in (0, 1], got {alpha}")
    if gamma < 0:
        raise DomainError(f"gamma must be >= 0, got {gamma}")
    p = _clamp_probabilities(p)
    y = np.asarray(y)
    pt = _pt(p, y)
    loss = -alpha * (1.0 - pt) ** gamma * np.log(pt)
    return float(loss) if loss.ndim == 0 else loss


def focal_loss_grad(p, y, alpha: float = 0.25, gamma: float = 2.0) -> np.ndarray:
    """
    Derivative of focal_loss with respect to p.
    """
    p = _clamp_probabilities(p)
    y = np.asarray(y)
    pt = _pt(p, y)
    d_pt = -alpha * (1.0 - pt) ** gamma / pt
    if gamma > 0:
        d_pt = d_pt + alpha * gamma * (1.0 - pt) ** (gamma - 1.0) * np.log(pt)
    return np.where(y == 1, d_pt, -d_pt)
