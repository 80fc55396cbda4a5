"""Central finite-difference checks for the autodiff engine."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor

REL_FLOOR = 1e-7


def numerical_grad(f: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> np.ndarray:
    """d f / d param by central differences; ``f`` re-runs the forward pass."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f().item()
        flat[i] = orig - h
        down = f().item()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor).

    The floor keeps entries whose true gradient is ~0 from reporting
    cancellation noise as a huge relative error.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_gradients(f: Callable[[], Tensor], params: dict[str, Tensor], h: float = 1e-5) -> dict[str, np.ndarray]:
    """Per-parameter elementwise relative errors of backprop vs finite differences."""
    for p in params.values():
        p.grad = None
    f().backward()
    analytic = {k: (p.grad if p.grad is not None else np.zeros_like(p.data)) for k, p in params.items()}
    return {k: relative_error(analytic[k], numerical_grad(f, p, h)) for k, p in params.items()}
