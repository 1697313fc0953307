"""
Nesterov accelerated gradient and the shrink-on-plateau learning rate.

The update uses the lookahead-free NAG reformulation

    v <- mu * v - lr * g
    p <- p + mu * v - lr * g

which, with v the freshly updated velocity, equals
p + mu^2 * v_old - (1 + mu) * lr * g. mu = 0 reduces to plain SGD.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from dpn.autodiff.tensor import Tensor
from dpn.errors import DivergenceError

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    learning_rate: float
    momentum: float = 0.99
    shrink: float = 10.0
    patience: int = 1
    velocity: Dict[str, np.ndarray] = field(default_factory=dict)
    best_valid: float = math.inf
    stalls: int = 0

    def scalars(self) -> Dict[str, float]:
        return {
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "shrink": self.shrink,
            "patience": self.patience,
            "best_valid": self.best_valid,
            "stalls": self.stalls,
        }


def global_norm(grads: List[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads))


def clip_gradients(named: List[Tuple[str, Tensor]], max_norm: float) -> float:
    """Rescale all grads in place when their global L2 norm exceeds max_norm; returns the norm."""
    grads = [t.grad for _, t in named if t.grad is not None]
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        factor = max_norm / (norm + 1e-6)
        for _, t in named:
            if t.grad is not None:
                t.grad = (t.grad * factor).astype(t.dtype)
    return norm


def nag_step(state: OptimizerState, named: List[Tuple[str, Tensor]]):
    """Apply one NAG update to every named parameter from its `.grad`."""
    for name, param in named:
        grad = param.grad
        if grad is None:
            continue
        if not np.all(np.isfinite(grad)):
            bad = int(np.size(grad) - np.count_nonzero(np.isfinite(grad)))
            raise DivergenceError(
                f"Non-finite gradient for {name}: {bad} of {grad.size} entries "
                f"(lr={state.learning_rate})"
            )
        mu, lr = state.momentum, state.learning_rate
        v = state.velocity.get(name)
        if v is None:
            v = np.zeros_like(param.data)
        v = mu * v - lr * grad
        param.data = (param.data + mu * v - lr * grad).astype(param.dtype)
        state.velocity[name] = v.astype(param.dtype)


def lr_schedule(state: OptimizerState, validation_loss: float) -> OptimizerState:
    """Divide the learning rate by `shrink` after `patience` rounds without improvement."""
    if validation_loss < state.best_valid:
        state.best_valid = validation_loss
        state.stalls = 0
        return state
    state.stalls += 1
    if state.stalls >= state.patience:
        old = state.learning_rate
        state.learning_rate = old / state.shrink
        state.stalls = 0
        logger.info(f"Validation loss {validation_loss:.4f} did not improve; lr {old:g} -> {state.learning_rate:g}")
    return state
