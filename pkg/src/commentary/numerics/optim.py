"""Adam and the staircase exponential learning-rate schedule."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(store, state, lr, names=None):
    """Bias-corrected Adam update of ``store`` in place.

    ``names`` restricts the update to a subset of parameters (used when part of
    the model is frozen); moments of other parameters are left untouched.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name in (store.names() if names is None else names):
        p = store[name]
        g = store.grad(name)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return store, state


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float
    decay_rate: float = 0.96
    decay_steps: int = 1000


def lr_at(schedule, step):
    if step < 0:
        raise ValueError("step must be >= 0")
    return schedule.base_lr * schedule.decay_rate ** (step // schedule.decay_steps)
