"""Adam restricted to an explicit trainable-parameter mask.

The optimizer works against any store exposing get_param/set_param with
string parameter ids (the network's parameter registry does). Moment
accumulators exist only for masked parameters, so everything outside the
mask is untouched by construction, not by bookkeeping.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from radapt.errors import OptimStateError
from radapt.nn.model import ADAPT_PHASE, SOURCE_PHASE

SOURCE_LR = 1e-4
ADAPT_LR = 5e-5


def make_lr(phase: str, override: float | None = None) -> float:
    """Default learning rate per training phase, with config passthrough."""
    if override is not None:
        if not (np.isfinite(override) and override > 0):
            raise ValueError(f"learning rate override must be positive, got {override}")
        return float(override)
    if phase == SOURCE_PHASE:
        return SOURCE_LR
    if phase == ADAPT_PHASE:
        return ADAPT_LR
    raise ValueError(f"unknown phase {phase!r}")


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators for the masked parameters.

    Moments adopt each parameter's dtype; the update arithmetic runs in
    float64 and the result is cast back, so trajectories are deterministic
    and state round-trips through storage exactly.
    """

    lr: float
    mask: tuple[str, ...]
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def init_adam(store, mask: Iterable[str], lr: float, **hyper) -> AdamState:
    """Allocate zeroed moment slots for the masked parameters.

    The mask is kept in the store's declaration order so update order
    never depends on how the mask was built.
    """
    wanted = set(mask)
    ordered = tuple(pid for pid in store.param_ids() if pid in wanted)
    missing = wanted - set(ordered)
    if missing:
        raise OptimStateError(f"mask names unknown parameters: {sorted(missing)}")
    state = AdamState(lr=float(lr), mask=ordered, **hyper)
    for pid in ordered:
        p = store.get_param(pid)
        state.m[pid] = np.zeros_like(p)
        state.v[pid] = np.zeros_like(p)
    return state


def adam_step(store, grads: Mapping[str, np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update of the masked parameters in place."""
    missing = [pid for pid in state.mask if pid not in grads]
    if missing:
        raise OptimStateError(f"gradients missing for masked parameters: {missing}")
    if set(state.m) != set(state.mask) or set(state.v) != set(state.mask):
        raise OptimStateError("optimizer slots do not match the mask")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for pid in state.mask:
        p = store.get_param(pid)
        g = np.asarray(grads[pid], dtype=np.float64)
        if g.shape != p.shape:
            raise OptimStateError(f"gradient shape {g.shape} != param shape {p.shape} for {pid}")
        m = state.m[pid].astype(np.float64) * b1 + (1.0 - b1) * g
        v = state.v[pid].astype(np.float64) * b2 + (1.0 - b2) * g * g
        state.m[pid] = m.astype(p.dtype)
        state.v[pid] = v.astype(p.dtype)
        update = state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps)
        store.set_param(pid, (p.astype(np.float64) - update).astype(p.dtype))
