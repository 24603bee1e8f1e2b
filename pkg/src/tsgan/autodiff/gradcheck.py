"""Central finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import ShapeError, Tape, Tensor, grad


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    worst: tuple[int, int] | None = None  # (input position, flat index)

    @property
    def pass_(self) -> bool:
        return self.passed


def _eval(f, xs) -> float:
    with Tape():
        out = f(*xs)
    if out.size != 1:
        raise ShapeError(f"grad_check needs a scalar function, got shape {out.shape}")
    return float(out.data)


def grad_check(f: Callable[..., Tensor], x: Tensor | Sequence[Tensor],
               step: float = 1e-4, tol: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``x`` is one tensor or a sequence; ``f`` is called with them as positional
    arguments.  Relative error per element uses ``max(|a|, |b|, 1e-8)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    xs = [x] if isinstance(x, Tensor) else list(x)
    flags = [t.requires_grad for t in xs]
    for t in xs:
        t.requires_grad = True
    try:
        with Tape():
            out = f(*xs)
            if out.size != 1:
                raise ShapeError(f"grad_check needs a scalar function, got shape {out.shape}")
            analytic = [g.data.copy() for g in grad(out, xs)]

        worst, where = 0.0, None
        for pos, t in enumerate(xs):
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                fp = _eval(f, xs)
                flat[i] = orig - step
                fm = _eval(f, xs)
                flat[i] = orig
                num = (fp - fm) / (2.0 * step)
                a = analytic[pos].reshape(-1)[i]
                err = abs(a - num) / max(abs(a), abs(num), 1e-8)
                if err > worst:
                    worst, where = err, (pos, i)
    finally:
        for t, fl in zip(xs, flags):
            t.requires_grad = fl
    return GradCheckReport(max_rel_err=float(worst), passed=bool(worst <= tol), worst=where)
