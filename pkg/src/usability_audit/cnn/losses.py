"""Softmax and focal loss with its analytic gradient."""

from dataclasses import dataclass

import numpy as np

P_FLOOR = 1e-12


def softmax(logits):
    """Row-wise softmax with the maximum subtracted for stability."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class FocalLossParams:
    gamma: float = 2.0
    alpha: float = 1.0

    def __post_init__(self):
        if self.gamma < 0 or self.alpha <= 0:
            raise ValueError("focal loss needs gamma >= 0 and alpha > 0")


def focal_loss(probs, true_class, params=FocalLossParams()):
    """Mean of ``-alpha * (1 - p_t)**gamma * log(p_t)`` and its gradient w.r.t. the logits.

    ``probs`` is a softmax output, one row per sample (a single vector is
    also accepted). ``p_t`` is clamped to [1e-12, 1] before the log; the
    gradient is that of the unclamped loss, so confidently wrong samples
    still push the logits.
    """
    probs = np.asarray(probs, dtype=float)
    single = probs.ndim == 1
    if single:
        probs = probs[None]
    t = np.atleast_1d(np.asarray(true_class, dtype=int))
    n = probs.shape[0]
    p = np.clip(probs[np.arange(n), t], P_FLOOR, 1.0)
    q = 1.0 - p
    g, a = params.gamma, params.alpha
    logp = np.log(p)
    losses = -a * q ** g * logp
    # dL/dp * p, then the softmax Jacobian gives dL/dz = that * (onehot - probs)
    with np.errstate(divide="ignore", invalid="ignore"):
        focus = np.where(q > 0, g * p * q ** (g - 1) * logp, 0.0) if g > 0 else np.zeros_like(p)
    scale = a * (focus - q ** g)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), t] = 1.0
    dlogits = scale[:, None] * (onehot - probs) / n
    if single:
        return float(losses[0]), dlogits[0]
    return float(losses.mean()), dlogits
