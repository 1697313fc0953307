from dpn.autodiff.tensor import Tensor, Tape, backward, get_tape, no_grad, reset_tape
from dpn.autodiff.gradcheck import GradCheckReport, grad_check

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "get_tape",
    "no_grad",
    "reset_tape",
    "GradCheckReport",
    "grad_check",
]
