"""Layers with explicit forward and backward passes.

Tensors are float64 arrays in (batch, height, width, channels) layout.
Each layer caches what its backward pass needs during ``forward`` and
fills ``grads`` (keyed like ``params``) during ``backward``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch


class Layer:
    name = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, training=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def he_normal(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def _pad_amount(k, padding):
    if padding == "same":
        return (k - 1) // 2
    if padding == "valid":
        return 0
    return int(padding)


def conv2d_forward(x, kernels, bias=None, stride=1, padding="same"):
    """Cross-correlate a (N, H, W, Cin) batch with (k, k, Cin, Cout) kernels.

    Returns ``(out, cols)`` where ``cols`` is the im2col matrix reused by the
    backward pass. A single (H, W, Cin) image is accepted and returns a
    single (Ho, Wo, Cout) output.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4 or kernels.ndim != 4:
        raise ShapeMismatch(f"conv expects 4-D input and kernels, got {x.shape} and {kernels.shape}")
    k, k2, cin, cout = kernels.shape
    if k != k2 or cin != x.shape[3]:
        raise ShapeMismatch(f"kernels {kernels.shape} incompatible with input channels {x.shape[3]}")
    p = _pad_amount(k, padding)
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
    n = x.shape[0]
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    if ho <= 0 or wo <= 0:
        raise ShapeMismatch("kernel larger than padded input")
    # (N, Ho, Wo, C, k, k) -> rows ordered (ki, kj, c) to match kernels.reshape
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, k * k * cin)
    out = cols @ kernels.reshape(k * k * cin, cout)
    if bias is not None:
        out += bias
    out = out.reshape(n, ho, wo, cout)
    return (out[0] if single else out), cols


def conv2d_backward(dout, cols, x_shape, kernels, stride=1, padding="same"):
    """Gradients ``(dx, dkernels, dbias)`` for :func:`conv2d_forward`."""
    n, h, w, cin = x_shape
    k = kernels.shape[0]
    cout = kernels.shape[3]
    p = _pad_amount(k, padding)
    ho, wo = dout.shape[1], dout.shape[2]
    dflat = dout.reshape(-1, cout)
    dk = (cols.T @ dflat).reshape(kernels.shape)
    db = dflat.sum(0)
    dcols = (dflat @ kernels.reshape(k * k * cin, cout).T).reshape(n, ho, wo, k, k, cin)
    dxp = np.zeros((n, h + 2 * p, w + 2 * p, cin))
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, p:p + h, p:p + w, :] if p else dxp
    return dx, dk, db


class Conv2D(Layer):
    name = "conv"

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, padding="same", rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = kernel_size * kernel_size * in_channels
        self.params["W"] = he_normal(rng, (kernel_size, kernel_size, in_channels, out_channels), fan_in)
        self.params["b"] = np.zeros(out_channels)
        self.stride = stride
        self.padding = padding

    def forward(self, x, training=False, rng=None):
        out, cols = conv2d_forward(x, self.params["W"], self.params["b"], self.stride, self.padding)
        self._cache = (cols, x.shape)
        return out

    def backward(self, dout):
        cols, shape = self._cache
        dx, dW, db = conv2d_backward(dout, cols, shape, self.params["W"], self.stride, self.padding)
        self.grads["W"] = dW
        self.grads["b"] = db
        return dx


class ReLU(Layer):
    name = "relu"

    def forward(self, x, training=False, rng=None):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


def maxpool_forward(x):
    """2x2 max pooling with stride 2.

    Returns ``(out, argmax)``; ``argmax`` holds the winning position 0..3
    (row-major within the window, first maximum on ties).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 3
    if single:
        x = x[None]
    n, h, w, c = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"max pooling needs even height and width, got {h}x{w}")
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    idx = win.argmax(-1)
    out = np.take_along_axis(win, idx[..., None], -1)[..., 0]
    if single:
        return out[0], idx[0]
    return out, idx


def maxpool_backward(dout, argmax, x_shape):
    n, h, w, c = x_shape
    dwin = np.zeros(dout.shape + (4,))
    np.put_along_axis(dwin, argmax[..., None], dout[..., None], -1)
    return dwin.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(x_shape)


class MaxPool2D(Layer):
    name = "pool"

    def forward(self, x, training=False, rng=None):
        out, self._idx = maxpool_forward(x)
        self._shape = x.shape
        return out

    def backward(self, dout):
        return maxpool_backward(dout, self._idx, self._shape)


class Dropout(Layer):
    """Inverted dropout: scaled by 1/(1-rate) in training, identity otherwise."""

    name = "dropout"

    def __init__(self, rate=0.5):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.fixed_mask = None  # set by gradient checks to freeze the draw

    def forward(self, x, training=False, rng=None):
        if not training or self.rate == 0:
            self._mask = None
            return x
        if self.fixed_mask is not None:
            keep = self.fixed_mask
        else:
            if rng is None:
                raise ValueError("training-mode dropout needs a random generator")
            keep = rng.random(x.shape) >= self.rate
        self._mask = keep / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dout):
        return dout if self._mask is None else dout * self._mask


class Flatten(Layer):
    name = "flatten"

    def forward(self, x, training=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    name = "dense"

    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = he_normal(rng, (in_features, out_features), in_features)
        self.params["b"] = np.zeros(out_features)

    def forward(self, x, training=False, rng=None):
        if x.shape[-1] != self.params["W"].shape[0]:
            raise ShapeMismatch(f"dense expects {self.params['W'].shape[0]} inputs, got {x.shape[-1]}")
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = self._x.T @ dout
        self.grads["b"] = dout.sum(0)
        return dout @ self.params["W"].T
