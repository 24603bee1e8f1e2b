from . import ops
from .gradcheck import GradCheckReport, grad_check
from .tensor import (
    DomainError,
    ShapeError,
    Tape,
    TapeError,
    Tensor,
    active_tape,
    as_tensor,
    backward,
    grad,
    no_record,
    record,
)

__all__ = [
    "ops",
    "GradCheckReport",
    "grad_check",
    "DomainError",
    "ShapeError",
    "Tape",
    "TapeError",
    "Tensor",
    "active_tape",
    "as_tensor",
    "backward",
    "grad",
    "no_record",
    "record",
]
