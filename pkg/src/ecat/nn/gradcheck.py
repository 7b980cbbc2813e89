"""Finite-difference verification of tape gradients.

Everything here runs in float64; central differences with a small step
keep truncation and roundoff both far below the tolerances used in the
tests.  Sampling a subset of coordinates makes whole-model checks
affordable while still touching every parameter tensor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

__all__ = ["GradReport", "gradient_check", "check_scalar_fn"]

DEFAULT_STEP = 1e-5


@dataclass
class GradReport:
    """Per-input worst relative error of analytic vs numeric gradients."""

    tol: float
    max_rel_error: dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values()) if self.max_rel_error else 0.0

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol

    def __str__(self) -> str:
        lines = [f"gradient check ({'pass' if self.passed else 'FAIL'}, tol {self.tol:g}):"]
        for name, err in self.max_rel_error.items():
            lines.append(f"  {name}: max rel err {err:.3e}")
        return "\n".join(lines)


def _rel_err(analytic: float, numeric: float, abs_floor: float) -> float:
    # Components smaller than the FD measurement noise are unresolvable;
    # e.g. attention key biases have exactly zero gradient (softmax shift
    # invariance) and central differences return pure roundoff there.
    if max(abs(analytic), abs(numeric)) <= abs_floor:
        return 0.0
    scale = max(abs(analytic), abs(numeric))
    if scale < 1e-8:
        return abs(analytic - numeric)
    return abs(analytic - numeric) / scale


def gradient_check(
    fn: Callable[[Sequence[Tensor]], Tensor],
    inputs: Sequence[Tensor],
    tol: float = 1e-5,
    step: float = DEFAULT_STEP,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    names: Sequence[str] | None = None,
    abs_floor: float = 0.0,
) -> GradReport:
    """Compare fn's tape gradients against central finite differences.

    ``fn`` must map the given tensors to a scalar Tensor.  Inputs must be
    float64 and marked requires_grad.  ``max_coords`` caps the number of
    coordinates probed per input (sampled without replacement).
    ``abs_floor`` ignores components below the FD noise floor (set it to
    roughly eps * |f| * sqrt(#terms) / step for large objectives).
    """
    for t in inputs:
        if t.data.dtype != np.float64:
            raise ValueError("gradient_check requires float64 inputs")
        if not t.requires_grad:
            raise ValueError("gradient_check inputs must require grad")

    for t in inputs:
        t.zero_grad()
    out = fn(inputs)
    if out.size != 1:
        raise ValueError("gradient_check target must be scalar")
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]

    if names is None:
        names = [f"input{i}" for i in range(len(inputs))]
    if rng is None:
        rng = np.random.default_rng(0)

    report = GradReport(tol=tol)
    for t, ga, name in zip(inputs, analytic, names):
        flat = t.data.reshape(-1)
        n = flat.size
        coords = np.arange(n)
        if max_coords is not None and n > max_coords:
            coords = rng.choice(n, size=max_coords, replace=False)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            flat[c] = orig + step
            f_plus = float(fn(inputs).data)
            flat[c] = orig - step
            f_minus = float(fn(inputs).data)
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            worst = max(worst, _rel_err(float(ga.reshape(-1)[c]), numeric, abs_floor))
        report.max_rel_error[name] = worst
    return report


def check_scalar_fn(fn, arrays: dict[str, np.ndarray], tol=1e-5, **kw) -> GradReport:
    """Convenience wrapper: dict of float64 arrays -> scalar Tensor."""
    names = list(arrays)
    tensors = [Tensor(np.asarray(arrays[n], dtype=np.float64), requires_grad=True) for n in names]

    def wrapped(ts):
        return fn(**dict(zip(names, ts)))

    return gradient_check(wrapped, tensors, tol=tol, names=names, **kw)
