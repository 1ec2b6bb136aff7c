"""ADAM optimizer over named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def init_adam(params: dict) -> AdamState:
    state = AdamState()
    for name, arr in params.items():
        state.m[name] = np.zeros_like(np.asarray(arr, dtype=np.float64))
        state.v[name] = np.zeros_like(np.asarray(arr, dtype=np.float64))
    return state


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> tuple[dict, AdamState]:
    """One bias-corrected ADAM update; returns fresh parameter arrays."""
    state.t += 1
    t = state.t
    out = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / (1.0 - beta1 ** t)
        v_hat = state.v[name] / (1.0 - beta2 ** t)
        out[name] = np.asarray(p, dtype=np.float64) - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out, state
