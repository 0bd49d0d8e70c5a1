"""Finite-difference verification of the analytic backward passes.

The error reported for one entry is ``|a - n| / max(|a|, |n|, s)`` with
``a`` the analytic and ``n`` the central-difference derivative, and
``s = floor * max|a|`` over the same parameter tensor. Without the floor an
entry whose true derivative is ~0 would divide rounding noise (about
1e-11 at eps=1e-5) by itself.
"""

from dataclasses import dataclass

import numpy as np

from .layers import Conv2D, Dense, conv2d_forward
from .losses import FocalLossParams, focal_loss, softmax
from .model import CnnConfig, CnnModel

DEFAULT_EPS = 1e-5
DEFAULT_FLOOR = 1e-3
# a linear map has no truncation error, so a wide step only shrinks rounding
LINEAR_EPS = 1e-2


def numeric_gradient(f, arr, eps=DEFAULT_EPS):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        gflat[i] = (up - down) / (2 * eps)
    return grad


def relative_error(analytic, numeric, floor=DEFAULT_FLOOR):
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    if not a.size:
        return 0.0
    scale = max(float(np.abs(a).max()), float(np.abs(n).max()))
    den = np.maximum(np.maximum(np.abs(a), np.abs(n)), max(floor * scale, 1e-300))
    return float((np.abs(a - n) / den).max())


@dataclass
class CheckResult:
    max_error: float
    per_param: dict


def _check(loss_fn, backward_fn, arrays, eps, floor):
    """``loss_fn()`` evaluates the loss; ``backward_fn()`` returns analytic grads keyed like ``arrays``."""
    analytic = backward_fn()
    errs = {}
    for key, arr in arrays.items():
        num = numeric_gradient(loss_fn, arr, eps)
        errs[key] = relative_error(analytic[key], num, floor)
    return CheckResult(max(errs.values()), errs)


def check_dense_linear(seed=0, n=4, fan_in=6, fan_out=5, eps=LINEAR_EPS, floor=DEFAULT_FLOOR):
    """A lone dense layer under a linear loss ``sum(out * R)``."""
    rng = np.random.default_rng(seed)
    layer = Dense(fan_in, fan_out, rng=rng)
    layer.params["b"] = rng.normal(size=fan_out)
    x = rng.normal(size=(n, fan_in))
    R = rng.normal(size=(n, fan_out))

    def loss():
        return float((layer.forward(x) * R).sum())

    def backward():
        layer.forward(x)
        dx = layer.backward(R)
        return {"W": layer.grads["W"], "b": layer.grads["b"], "x": dx}

    return _check(loss, backward, {"W": layer.params["W"], "b": layer.params["b"], "x": x}, eps, floor)


def check_conv_layer(seed=0, n=2, side=6, cin=2, cout=3, eps=DEFAULT_EPS, floor=DEFAULT_FLOOR):
    """A lone 3x3 same-padded convolution under a linear loss."""
    rng = np.random.default_rng(seed)
    layer = Conv2D(cin, cout, 3, rng=rng)
    layer.params["b"] = rng.normal(size=cout)
    x = rng.normal(size=(n, side, side, cin))
    R = rng.normal(size=(n, side, side, cout))

    def loss():
        return float((conv2d_forward(x, layer.params["W"], layer.params["b"])[0] * R).sum())

    def backward():
        layer.forward(x)
        dx = layer.backward(R)
        return {"W": layer.grads["W"], "b": layer.grads["b"], "x": dx}

    return _check(loss, backward, {"W": layer.params["W"], "b": layer.params["b"], "x": x}, eps, floor)


SMALL_CONFIG = CnnConfig(input_side=16, filters=(2, 2, 2), dense_units=8, dropout=0.5)


def _kink_margin(model, x):
    """Smallest distance of any ReLU input from 0 and of any pooling winner from its runner-up."""
    margin = np.inf
    h = x
    for layer in model.layers:
        name = layer.name
        if name == "relu":
            margin = min(margin, float(np.abs(h).min()))
        if name == "pool":
            n, hh, ww, c = h.shape
            win = np.sort(h.reshape(n, hh // 2, 2, ww // 2, 2, c).transpose(0, 1, 3, 5, 2, 4)
                          .reshape(n, hh // 2, ww // 2, c, 4), axis=-1)
            # windows of dead ReLU outputs tie at exactly 0 and pass no gradient
            live = win[..., -1] > 0
            if live.any():
                margin = min(margin, float((win[..., -1] - win[..., -2])[live].min()))
        h = layer.forward(h, training=True)
    return margin


def check_full_stack(seed=0, batch=2, eps=DEFAULT_EPS, floor=DEFAULT_FLOOR, config=SMALL_CONFIG,
                     focal=FocalLossParams(), min_margin=1e-3, min_p_true=1e-9, max_redraws=200):
    """Every parameter of a small network under focal loss, dropout mask frozen.

    Inputs are redrawn until every ReLU input and pooling decision sits at
    least ``min_margin`` from a kink and every true-class probability is
    above ``min_p_true`` (well clear of the loss clamp), so the finite
    differences never straddle a non-smooth point.
    """
    rng = np.random.default_rng(seed)
    side = config.input_side
    for _ in range(max_redraws):
        model = CnnModel(config, seed=int(rng.integers(2**31)))
        labels = rng.integers(config.n_classes, size=batch)
        for layer in model.layers:
            if layer.name == "dropout":
                flat = side // 8
                layer.fixed_mask = rng.random((batch, flat, flat, config.filters[-1])) >= layer.rate
            if "b" in layer.params:
                layer.params["b"][...] = rng.normal(scale=0.1, size=layer.params["b"].shape)
        x = rng.normal(size=(batch, side, side, 3))
        if _kink_margin(model, x) < min_margin:
            continue
        p = softmax(model.forward(x, training=True))[np.arange(batch), labels]
        if p.min() >= min_p_true:
            break
    else:
        raise RuntimeError("could not draw a network and input clear of non-smooth points")

    def loss():
        return focal_loss(softmax(model.forward(x, training=True)), labels, focal)[0]

    def backward():
        probs = softmax(model.forward(x, training=True))
        _, dlogits = focal_loss(probs, labels, focal)
        model.backward(dlogits)
        return {k: v.copy() for k, v in model.named_grads().items()}

    return _check(loss, backward, model.named_params(), eps, floor)


def gradient_check(kind="full", seed=0, **kwargs):
    """Run one of the checks by name: ``dense``, ``conv`` or ``full``."""
    fn = {"dense": check_dense_linear, "conv": check_conv_layer, "full": check_full_stack}[kind]
    return fn(seed=seed, **kwargs).max_error
