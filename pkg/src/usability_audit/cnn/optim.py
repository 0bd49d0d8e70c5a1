"""Adam with bias-corrected moment estimates."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, config=AdamConfig()):
    """Update ``params`` in place (a dict of arrays) and advance ``state``."""
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for key, p in params.items():
        g = grads[key]
        if np.shape(g) != np.shape(p):
            raise ShapeMismatch(f"gradient for {key!r} has shape {np.shape(g)}, parameter {np.shape(p)}")
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        v = state.v[key]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= config.lr * (m / c1) / (np.sqrt(v / c2) + config.eps)
    return params, state
