"""Neural layers with explicit forward/backward passes (float64, numpy).

Every layer caches what its backward pass needs, accumulates parameter
gradients in place, and returns the gradient with respect to its input.
Shapes follow (batch, time, features) throughout.
"""
from __future__ import annotations

import numpy as np


class Param:
    """A trainable tensor and its gradient accumulator."""

    __slots__ = ("value", "grad", "penalized")

    def __init__(self, value: np.ndarray, penalized: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.penalized = penalized  # participates in the L2 penalty term


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Layer:
    def params(self) -> list[tuple[str, Param]]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []


class Dense(Layer):
    """Affine map over the trailing axis, with optional ReLU."""

    def __init__(self, rng, n_in: int, n_out: int, relu: bool = False, penalized: bool = False):
        self.W = Param(glorot(rng, (n_in, n_out), n_in, n_out), penalized)
        self.b = Param(np.zeros(n_out))
        self.relu = relu
        self._x = None
        self._mask = None

    def params(self):
        return [("W", self.W), ("b", self.b)]

    def forward(self, x):
        self._x = x
        y = x @ self.W.value + self.b.value
        if self.relu:
            self._mask = y > 0
            y = y * self._mask
        return y

    def backward(self, dy):
        if self.relu:
            dy = dy * self._mask
        flat_x = self._x.reshape(-1, self._x.shape[-1])
        flat_dy = dy.reshape(-1, dy.shape[-1])
        self.W.grad += flat_x.T @ flat_dy
        self.b.grad += flat_dy.sum(axis=0)
        return dy @ self.W.value.T


def conv1d_forward(x, W, b, stride=1, dilation=1, padding="same"):
    """Cross-correlation along time: one matmul per kernel tap.

    x: (b, w, v); W: (m, f, v); returns (y, cache). Taps are spaced
    ``dilation`` steps apart, so dilation 1 is the plain convolution.
    """
    bs, w, v = x.shape
    m, f, _ = W.shape
    span = (f - 1) * dilation
    if padding == "same":
        if stride != 1:
            raise ValueError("same padding requires stride 1")
        pad_left = span // 2
        pad_right = span - pad_left
    elif padding == "valid":
        pad_left = pad_right = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    xp = np.pad(x, ((0, 0), (pad_left, pad_right), (0, 0)))
    wp = xp.shape[1]
    w_out = (wp - span - 1) // stride + 1
    if w_out < 1:
        raise ValueError(f"kernel span {span + 1} exceeds padded window {wp}")
    y = np.broadcast_to(b, (bs, w_out, m)).copy()
    for j in range(f):
        lo = j * dilation
        y += xp[:, lo : lo + stride * w_out : stride, :] @ W[:, j, :].T
    cache = (xp, x.shape, stride, dilation, pad_left, w_out)
    return y, cache


def conv1d_backward(dy, W, cache):
    """Returns (dx, dW, db) for one conv1d_forward call."""
    xp, x_shape, stride, dilation, pad_left, w_out = cache
    m, f, v = W.shape
    dW = np.zeros_like(W)
    dxp = np.zeros_like(xp)
    flat_dy = dy.reshape(-1, m)
    for j in range(f):
        lo = j * dilation
        sl = slice(lo, lo + stride * w_out, stride)
        dW[:, j, :] = flat_dy.T @ xp[:, sl, :].reshape(-1, v)
        dxp[:, sl, :] += dy @ W[:, j, :]
    db = flat_dy.sum(axis=0)
    dx = dxp[:, pad_left : pad_left + x_shape[1], :]
    return dx, dW, db


class BatchNorm1d(Layer):
    """Per-channel standardization over the batch and time axes."""

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.99):
        self.gamma = Param(np.ones(channels))
        self.beta = Param(np.zeros(channels))
        self.eps = eps
        self.momentum = momentum
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._cache = None

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def buffers(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def forward(self, x, train: bool):
        if train:
            mean = x.mean(axis=(0, 1))
            var = x.var(axis=(0, 1))
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
        else:
            mean = self.running_mean
            var = self.running_var
        ivar = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * ivar
        self._cache = (xhat, ivar, train, x.shape[0] * x.shape[1])
        return xhat * self.gamma.value + self.beta.value

    def backward(self, dy):
        xhat, ivar, train, n = self._cache
        self.gamma.grad += (dy * xhat).sum(axis=(0, 1))
        self.beta.grad += dy.sum(axis=(0, 1))
        dxhat = dy * self.gamma.value
        if not train:
            return dxhat * ivar
        s1 = dxhat.sum(axis=(0, 1))
        s2 = (dxhat * xhat).sum(axis=(0, 1))
        return (ivar / n) * (n * dxhat - s1 - xhat * s2)


class MaxPool1d(Layer):
    """Stride-1 max pooling over time windows of size h."""

    def __init__(self, h: int):
        if h < 1:
            raise ValueError("pool window must be >= 1")
        self.h = h
        self._cache = None

    def forward(self, x):
        bs, w, c = x.shape
        if self.h > w:
            raise ValueError(f"pool window {self.h} exceeds length {w}")
        windows = np.lib.stride_tricks.sliding_window_view(x, self.h, axis=1)
        arg = windows.argmax(axis=-1)  # (b, w_out, c)
        y = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
        self._cache = (arg, x.shape)
        return y

    def backward(self, dy):
        arg, x_shape = self._cache
        dx = np.zeros(x_shape)
        bs, w_out, c = dy.shape
        bi = np.arange(bs)[:, None, None]
        ti = np.arange(w_out)[None, :, None] + arg
        ci = np.arange(c)[None, None, :]
        np.add.at(dx, (bi, ti, ci), dy)
        return dx


class Dropout(Layer):
    """Inverted dropout: keep with probability 1-p, rescale by 1/(1-p)."""

    def __init__(self, p: float, rng: np.random.Generator):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.p = p
        self.rng = rng
        self._mask = None

    def forward(self, x, train: bool):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.p) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


class LSTM(Layer):
    """Single-direction LSTM over (b, w, in) returning all hidden states."""

    def __init__(self, rng, n_in: int, hidden: int):
        self.hidden = hidden
        self.Wx = Param(glorot(rng, (n_in, 4 * hidden), n_in, 4 * hidden), penalized=True)
        self.Wh = Param(glorot(rng, (hidden, 4 * hidden), hidden, 4 * hidden), penalized=True)
        self.b = Param(np.zeros(4 * hidden))
        self._cache = None

    def params(self):
        return [("Wx", self.Wx), ("Wh", self.Wh), ("b", self.b)]

    def forward(self, x):
        bs, w, _ = x.shape
        hdim = self.hidden
        h = np.zeros((bs, hdim))
        c = np.zeros((bs, hdim))
        hs = np.zeros((bs, w, hdim))
        steps = []
        for t in range(w):
            xt = x[:, t, :]
            z = xt @ self.Wx.value + h @ self.Wh.value + self.b.value
            i = sigmoid(z[:, :hdim])
            f = sigmoid(z[:, hdim : 2 * hdim])
            g = np.tanh(z[:, 2 * hdim : 3 * hdim])
            o = sigmoid(z[:, 3 * hdim :])
            c_new = f * c + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            steps.append((xt, h, c, i, f, g, o, tanh_c))
            h, c = h_new, c_new
            hs[:, t, :] = h
        self._cache = (steps, x.shape)
        return hs

    def backward(self, dhs):
        steps, x_shape = self._cache
        bs, w, n_in = x_shape
        hdim = self.hidden
        dx = np.zeros(x_shape)
        dh_next = np.zeros((bs, hdim))
        dc_next = np.zeros((bs, hdim))
        for t in reversed(range(w)):
            xt, h_prev, c_prev, i, f, g, o, tanh_c = steps[t]
            dh = dhs[:, t, :] + dh_next
            do = dh * tanh_c
            dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
            di = dc * g
            dg = dc * i
            df = dc * c_prev
            dc_next = dc * f
            dz = np.concatenate(
                [
                    di * i * (1.0 - i),
                    df * f * (1.0 - f),
                    dg * (1.0 - g * g),
                    do * o * (1.0 - o),
                ],
                axis=1,
            )
            self.Wx.grad += xt.T @ dz
            self.Wh.grad += h_prev.T @ dz
            self.b.grad += dz.sum(axis=0)
            dx[:, t, :] = dz @ self.Wx.value.T
            dh_next = dz @ self.Wh.value.T
        return dx


class BiLSTM(Layer):
    """Forward and backward LSTM passes with summed hidden states."""

    def __init__(self, rng, n_in: int, hidden: int, bidirectional: bool = True):
        self.fwd = LSTM(rng, n_in, hidden)
        self.bwd = LSTM(rng, n_in, hidden) if bidirectional else None

    def params(self):
        out = [(f"fwd.{n}", p) for n, p in self.fwd.params()]
        if self.bwd is not None:
            out += [(f"bwd.{n}", p) for n, p in self.bwd.params()]
        return out

    def forward(self, x):
        hs = self.fwd.forward(x)
        if self.bwd is not None:
            hs = hs + self.bwd.forward(x[:, ::-1, :])[:, ::-1, :]
        return hs

    def backward(self, dhs):
        dx = self.fwd.backward(dhs)
        if self.bwd is not None:
            dx = dx + self.bwd.backward(dhs[:, ::-1, :])[:, ::-1, :]
        return dx


class ConvBlock(Layer):
    """Plain and dilated convolution branches sharing one kernel.

    Each branch runs the shared kernel at its own dilation, then its own
    batch normalization and stride-1 max pooling; branch outputs sum.
    """

    def __init__(self, rng, n_in: int, filters: int, kernel: int, dilation: int, pool_h: int):
        self.W = Param(
            glorot(rng, (filters, kernel, n_in), kernel * n_in, kernel * filters),
            penalized=True,
        )
        self.b = Param(np.zeros(filters))
        self.bn_plain = BatchNorm1d(filters)
        self.bn_dilated = BatchNorm1d(filters)
        self.pool_plain = MaxPool1d(pool_h)
        self.pool_dilated = MaxPool1d(pool_h)
        self.dilation = dilation
        self._caches = None

    def params(self):
        out = [("conv.W", self.W), ("conv.b", self.b)]
        out += [(f"bn_plain.{n}", p) for n, p in self.bn_plain.params()]
        out += [(f"bn_dilated.{n}", p) for n, p in self.bn_dilated.params()]
        return out

    def buffers(self):
        out = [(f"bn_plain.{n}", b) for n, b in self.bn_plain.buffers()]
        out += [(f"bn_dilated.{n}", b) for n, b in self.bn_dilated.buffers()]
        return out

    def forward(self, x, train: bool):
        y1, c1 = conv1d_forward(x, self.W.value, self.b.value, dilation=1)
        y2, c2 = conv1d_forward(x, self.W.value, self.b.value, dilation=self.dilation)
        self._caches = (c1, c2)
        out1 = self.pool_plain.forward(self.bn_plain.forward(y1, train))
        out2 = self.pool_dilated.forward(self.bn_dilated.forward(y2, train))
        return out1 + out2

    def backward(self, dy):
        c1, c2 = self._caches
        d1 = self.bn_plain.backward(self.pool_plain.backward(dy))
        d2 = self.bn_dilated.backward(self.pool_dilated.backward(dy))
        dx1, dW1, db1 = conv1d_backward(d1, self.W.value, c1)
        dx2, dW2, db2 = conv1d_backward(d2, self.W.value, c2)
        self.W.grad += dW1 + dW2
        self.b.grad += db1 + db2
        return dx1 + dx2


class PositionAwareAttention(Layer):
    """Self-scored attention with a per-timestep bias favoring later fixes.

    Keys come from a dense map of the input; each key is scored against
    itself plus a linearly increasing time bias, softmaxed over the time
    axis per feature channel, and the attention-weighted input sum is
    repeated ``z`` times as the decoder context.
    """

    def __init__(self, rng, n_in: int, omega: float):
        self.Wk = Param(glorot(rng, (n_in, n_in), n_in, n_in))
        self.bk = Param(np.zeros(n_in))
        self.omega = omega
        self._cache = None

    def params(self):
        return [("Wk", self.Wk), ("bk", self.bk)]

    def scores(self, x):
        bs, w, r = x.shape
        K = x @ self.Wk.value + self.bk.value
        bias = self.omega * (np.arange(w) % w).astype(np.float64)[None, :, None]
        S = K * (K + bias)
        return K, bias, S

    def attention_weights(self, x):
        _, _, S = self.scores(x)
        e = np.exp(S - S.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def forward(self, x, z: int):
        K, bias, S = self.scores(x)
        e = np.exp(S - S.max(axis=1, keepdims=True))
        A = e / e.sum(axis=1, keepdims=True)
        ctx = (A * x).sum(axis=1)  # (b, r)
        self._cache = (x, K, bias, A)
        return np.repeat(ctx[:, None, :], z, axis=1)

    def backward(self, dE):
        x, K, bias, A = self._cache
        dctx = dE.sum(axis=1)  # (b, r)
        dA = dctx[:, None, :] * x
        dx = dctx[:, None, :] * A
        dS = A * (dA - (A * dA).sum(axis=1, keepdims=True))
        dK = dS * (2.0 * K + bias)
        flat_x = x.reshape(-1, x.shape[-1])
        flat_dK = dK.reshape(-1, dK.shape[-1])
        self.Wk.grad += flat_x.T @ flat_dK
        self.bk.grad += flat_dK.sum(axis=0)
        return dx + dK @ self.Wk.value.T
