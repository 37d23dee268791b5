"""Bias-corrected Adam over named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    skipped: int = 0

    @classmethod
    def for_params(cls, arrays: dict) -> "AdamState":
        return cls(
            m={k: np.zeros_like(a) for k, a in arrays.items()},
            v={k: np.zeros_like(a) for k, a in arrays.items()},
        )


def adam_step(
    arrays: dict,
    grads: dict,
    state: AdamState,
    lr: float = 1e-4,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """Update ``arrays`` in place; a non-finite gradient skips the whole step."""
    for g in grads.values():
        if g is not None and not np.all(np.isfinite(g)):
            state.skipped += 1
            return state
    state.t += 1
    c1 = 1.0 - beta1**state.t
    c2 = 1.0 - beta2**state.t
    for k, a in arrays.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(a)
        g = g.astype(a.dtype, copy=False)
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        m_hat = state.m[k] / c1
        v_hat = state.v[k] / c2
        a -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(a.dtype)
    return state
