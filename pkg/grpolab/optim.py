"""
AdamW with bias-corrected moments and decoupled weight decay, over numpy arrays.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .errors import AbortStepError, InvalidInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.95
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params):
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64))


def adam_step(params, grad, state, hyper):
    """
    One AdamW descent step on ``params`` (minimizes; pass the negated gradient
    of an objective to maximize it).

    Returns:
        ``(new_params, new_state)``. The inputs are not modified.
    """
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise InvalidInputError(f"shape mismatch: params {params.shape}, grad {grad.shape}")
    if hyper.lr <= 0:
        raise InvalidInputError("lr must be positive")
    if not np.all(np.isfinite(grad)):
        logger.warning("aborting optimizer step %d: non-finite gradient", state.step + 1)
        raise AbortStepError("non-finite gradient")

    step = state.step + 1
    m = hyper.beta1 * state.m + (1.0 - hyper.beta1) * grad
    v = hyper.beta2 * state.v + (1.0 - hyper.beta2) * grad * grad
    m_hat = m / (1.0 - hyper.beta1 ** step)
    v_hat = v / (1.0 - hyper.beta2 ** step)

    new_params = params * (1.0 - hyper.lr * hyper.weight_decay)
    new_params = new_params - hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
    return new_params, AdamState(m, v, step)
