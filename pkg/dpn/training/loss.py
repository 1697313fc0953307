import numpy as np

from dpn.autodiff import ops
from dpn.autodiff.tensor import Tensor
from dpn.data.vocab import PAD_ID
from dpn.errors import DimensionError, EmptyBatchError


def _check(log_probs: Tensor, targets: np.ndarray):
    if log_probs.ndim != 3 or targets.shape != log_probs.shape[:2]:
        raise DimensionError(
            f"targets {targets.shape} must match log_probs [batch,time] {log_probs.shape[:2]}"
        )


def nll_loss(log_probs: Tensor, targets, pad_id: int = PAD_ID) -> Tensor:
    """Mean negative log-likelihood over non-pad target tokens."""
    targets = np.asarray(targets, dtype=np.int64)
    _check(log_probs, targets)
    keep = targets != pad_id
    count = int(keep.sum())
    if count == 0:
        raise EmptyBatchError("Batch has no non-pad target tokens")
    picked = ops.pick_last_dim(log_probs, np.where(keep, targets, 0))
    weights = Tensor(keep.astype(log_probs.dtype))
    return ops.scale(ops.sum_all(ops.mul(picked, weights)), -1.0 / count)


def token_accuracy(log_probs, targets, pad_id: int = PAD_ID) -> float:
    data = log_probs.data if isinstance(log_probs, Tensor) else np.asarray(log_probs)
    targets = np.asarray(targets, dtype=np.int64)
    keep = targets != pad_id
    if not keep.any():
        raise EmptyBatchError("Batch has no non-pad target tokens")
    return float((data.argmax(axis=-1) == targets)[keep].mean())
