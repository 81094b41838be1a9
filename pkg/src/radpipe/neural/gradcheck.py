"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .params import Param


@dataclass
class GradCheckReport:
    tol: float
    max_rel_error: dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol

    @property
    def failures(self) -> list[str]:
        return [name for name, err in self.max_rel_error.items() if err > self.tol]


def relative_error(a: float, n: float) -> float:
    return abs(a - n) / max(1e-8, abs(a) + abs(n))


def grad_check(loss_fn: Callable[[], float], params: Sequence[Param], eps: float = 1e-5,
               tol: float = 1e-4, coords_per_param: int = 20, seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``loss_fn`` computes the loss from the current parameter values and
    accumulates analytic gradients into ``Param.grad``. Parameters with fewer
    than ``coords_per_param`` entries are checked exhaustively.
    """
    rng = np.random.default_rng(seed)
    for p in params:
        p.zero_grad()
    loss_fn()
    analytic = {p.name: p.grad.copy() for p in params}
    report = GradCheckReport(tol)
    for p in params:
        flat = p.values.reshape(-1)
        if flat.size == 0:
            continue
        if flat.size <= coords_per_param:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=coords_per_param, replace=False)
        a_flat = analytic[p.name].reshape(-1)
        worst = 0.0
        for k in coords:
            orig = flat[k]
            flat[k] = orig + eps
            f_plus = loss_fn()
            flat[k] = orig - eps
            f_minus = loss_fn()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            worst = max(worst, relative_error(float(a_flat[k]), numeric))
        report.max_rel_error[p.name] = worst
    for p in params:
        p.zero_grad()
    return report
