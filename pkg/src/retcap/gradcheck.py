"""Central finite differences for checking hand-written gradients."""

from __future__ import annotations

import numpy as np


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """d f / d x by (f(x + h e_i) - f(x - h e_i)) / 2h; ``x`` is perturbed in place and restored."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic, numeric, floor: float = 1e-8) -> np.ndarray:
    """Per-coordinate |analytic - numeric| / (|analytic| + floor)."""
    a = np.asarray(analytic, dtype=np.float64)
    return np.abs(a - np.asarray(numeric, dtype=np.float64)) / (np.abs(a) + floor)
