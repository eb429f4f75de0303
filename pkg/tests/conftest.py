"""Shared oracles and fixtures.

The gradient oracle is central finite differences at 64 bit and stays
independent of the autodiff tape it checks.
"""

import numpy as np

FD_H = 1e-5
REL_FLOOR = 1e-6


def numeric_grad(f, x: np.ndarray, h: float = FD_H) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x (x is float64)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = REL_FLOOR) -> float:
    """max |a - n| / max(|a|, |n|, floor); the floor absorbs FD noise where
    both gradients are essentially zero."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))
