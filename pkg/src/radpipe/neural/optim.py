from __future__ import annotations

from typing import Iterable

import numpy as np

from .params import Param


def adam_step(params: Iterable[Param], lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update; zeroes each gradient afterwards."""
    params = [p for p in params if p.trainable]
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise FloatingPointError(f"non-finite gradient in parameter {p.name!r}")
    for p in params:
        p.adam_t += 1
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * p.grad
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * p.grad * p.grad
        m_hat = p.adam_m / (1.0 - beta1 ** p.adam_t)
        v_hat = p.adam_v / (1.0 - beta2 ** p.adam_t)
        p.values -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()
