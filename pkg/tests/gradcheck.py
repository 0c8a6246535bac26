"""Central finite-difference helpers for gradient tests.

All checks run in float64 with step h=1e-3. The error metric is relative
with an absolute floor on the denominator, so near-zero gradient entries
are compared at an absolute tolerance of floor * rtol.
"""

from __future__ import annotations

import numpy as np

H_STEP = 1e-3
REL_TOL = 1e-4
DENOM_FLOOR = 1e-3


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), DENOM_FLOOR)
    return float(np.max(np.abs(a - b) / denom))


def fd_grad(f, x: np.ndarray, h: float = H_STEP) -> np.ndarray:
    """Central differences of scalar f with respect to every entry of x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat_x = x.ravel()
    flat_g = g.ravel()
    for i in range(flat_x.size):
        orig = flat_x[i]
        flat_x[i] = orig + h
        fp = f(x)
        flat_x[i] = orig - h
        fm = f(x)
        flat_x[i] = orig
        flat_g[i] = (fp - fm) / (2.0 * h)
    return g


def model_param_fd(model, pid: str, loss_fn, h: float = H_STEP) -> np.ndarray:
    """Central differences of loss_fn(model) w.r.t. one named parameter."""
    base = model.get_param(pid).astype(np.float64)
    g = np.zeros_like(base)
    flat = g.ravel()
    for i in range(base.size):
        for sign in (+1.0, -1.0):
            m = model.clone()
            arr = m.get_param(pid).copy()
            arr.ravel()[i] += sign * h
            m.set_param(pid, arr)
            val = loss_fn(m)
            flat[i] += sign * val / (2.0 * h)
    return g
