import logging
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel

from dpn.autodiff import ops
from dpn.autodiff.tensor import Tensor, backward, no_grad, reset_tape
from dpn.errors import ContractError

logger = logging.getLogger(__name__)


class GradCheckReport(BaseModel):
    names: List[str]
    max_rel_errors: List[float]
    checked_entries: List[int]
    floored_entries: List[int]
    tol: float
    step: float
    floor: float

    @property
    def max_error(self) -> float:
        return max(self.max_rel_errors, default=0.0)

    @property
    def hidden_by_floor(self) -> int:
        """Coordinates that pass only because of the `floor` term in the denominator."""
        return sum(self.floored_entries)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tol

    def worst(self) -> str:
        if not self.names:
            return "-"
        i = int(np.argmax(self.max_rel_errors))
        return f"{self.names[i]} ({self.max_rel_errors[i]:.3e})"


def _scalarize(out: Tensor, weights: Optional[np.ndarray]) -> Tensor:
    if out.data.size == 1:
        return ops.reshape(out, ())
    return ops.sum_all(ops.mul(out, Tensor(weights)))


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-6,
    eps: float = 1e-12,
    max_entries: Optional[int] = None,
    seed: int = 0,
    names: Optional[Sequence[str]] = None,
) -> GradCheckReport:
    """
    Compare tape gradients of `f(*inputs)` with central differences.

    Non-scalar outputs are contracted with a fixed random weight tensor. The
    error of one coordinate is |g_ad - g_fd| / (|g_ad| + |g_fd| + eps); the
    report keeps the maximum per input and counts the coordinates that only
    pass because of `eps`. `max_entries` limits how many
    coordinates of each input are perturbed (chosen with `seed`).
    """
    for t in inputs:
        if not t.requires_grad:
            raise ContractError(f"grad_check input {t!r} does not require a gradient")

    rng = np.random.default_rng(seed)
    reset_tape()
    with no_grad():
        sample = f(*inputs)
    weights = None
    if sample.data.size != 1:
        weights = rng.standard_normal(sample.shape).astype(sample.dtype)

    for t in inputs:
        t.zero_grad()
    loss = _scalarize(f(*inputs), weights)
    backward(loss)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]

    def evaluate() -> float:
        with no_grad():
            return float(_scalarize(f(*inputs), weights).data)

    errors: List[float] = []
    counts: List[int] = []
    floored: List[int] = []
    for t, g_ad in zip(inputs, analytic):
        t.data = np.ascontiguousarray(t.data)
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            coords = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        hidden = 0
        g_flat = g_ad.reshape(-1)
        for i in coords:
            original = flat[i]
            flat[i] = original + h
            plus = evaluate()
            flat[i] = original - h
            minus = evaluate()
            flat[i] = original
            g_fd = (plus - minus) / (2.0 * h)
            diff = abs(g_flat[i] - g_fd)
            scale = abs(g_flat[i]) + abs(g_fd)
            err = diff / (scale + eps)
            if err <= tol and scale > 0 and diff / scale > tol:
                hidden += 1
            worst = max(worst, float(err))
        errors.append(worst)
        counts.append(int(coords.size))
        floored.append(hidden)

    report = GradCheckReport(
        names=list(names) if names is not None else [t.name or f"input{i}" for i, t in enumerate(inputs)],
        max_rel_errors=errors,
        checked_entries=counts,
        floored_entries=floored,
        tol=tol,
        step=h,
        floor=eps,
    )
    logger.info(f"Gradient check: max relative error {report.max_error:.3e}, worst {report.worst()}")
    for name, hidden in zip(report.names, floored):
        if hidden:
            logger.warning(f"{name}: {hidden} coordinate(s) within tolerance only through the eps={eps:g} floor")
    return report
