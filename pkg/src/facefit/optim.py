"""Adam optimizer and the step-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError


@dataclass
class AdamState:
    """Moment estimates and hyperparameters for one optimization run.

    ``lower_bounds`` maps leaf names to values the corresponding parameter
    is clamped to stay at or above after each step (used to keep the
    camera scale positive).
    """

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    lower_bounds: dict = field(default_factory=dict)


def adam_init(leaves, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
              lower_bounds=None):
    """Fresh AdamState with zero moments shaped like ``leaves``."""
    state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                      lower_bounds=dict(lower_bounds or {}))
    for name, value in leaves.items():
        state.m[name] = np.zeros_like(np.asarray(value, dtype=np.float64))
        state.v[name] = np.zeros_like(state.m[name])
    return state


def adam_step(leaves, grads, state, lr=None):
    """One bias-corrected Adam update.

    Returns (updated leaves dict, state); the state's moments and step
    count are updated in place, input arrays are never mutated. ``lr``
    overrides the state's base rate for this step (for schedules).
    """
    step_lr = state.lr if lr is None else lr
    state.t += 1
    t = state.t
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    updated = {}
    for name, value in leaves.items():
        g = grads.get(name)
        if g is None:
            raise InvalidArgumentError(f"missing gradient for leaf {name!r}")
        value = np.asarray(value, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        if g.shape != value.shape:
            raise InvalidArgumentError(
                f"gradient shape {g.shape} does not match leaf {name!r} shape {value.shape}")
        m = state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        v = state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        new = value - step_lr * m_hat / (np.sqrt(v_hat) + state.eps)
        bound = state.lower_bounds.get(name)
        if bound is not None:
            new = np.maximum(new, bound)
        updated[name] = new
    return updated, state


def lr_schedule(step, base_lr, decay_every, factor):
    """Step decay: base_lr * factor ** floor(step / decay_every)."""
    if decay_every <= 0:
        raise InvalidArgumentError("decay_every must be positive")
    if not (0.0 < factor <= 1.0):
        raise InvalidArgumentError("factor must be in (0, 1]")
    return base_lr * factor ** (step // decay_every)
