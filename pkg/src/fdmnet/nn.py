"""Small dense-layer library with hand-written backward passes.

Every layer follows the same protocol: ``forward(x)`` caches whatever the
backward pass needs and returns the output, ``backward(dy)`` returns the
gradient with respect to ``x`` and *accumulates* parameter gradients into
``Param.grad``. A layer instance must be used at most once per forward pass.

Image tensors are laid out as (batch, channels, height, width); token layers
(``Dense``, ``LayerNorm``) act on the last axis.
"""

import numpy as np
from scipy.special import erf

from . import _kernels

INIT_STD = 0.02


class ShapeError(ValueError):
    pass


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.value)


class Module:
    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        if isinstance(value, Param):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name, module):
        self._modules[name] = module
        return module

    def named_params(self, prefix=""):
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_params(f"{prefix}{name}.")

    def param_dict(self):
        return dict(self.named_params())

    def zero_grad(self):
        for _, p in self.named_params():
            p.zero_grad()

    def astype(self, dtype):
        for _, p in self.named_params():
            p.value = p.value.astype(dtype)
            p.grad = np.zeros_like(p.value)
        return self

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


def normal(rng, shape, std=INIT_STD, fan_in=None):
    """Zero-mean normal init. ``std=None`` scales by 1/sqrt(fan_in) instead."""
    if std is None:
        std = 1.0 / np.sqrt(fan_in if fan_in is not None else shape[-1])
    return rng.normal(0.0, std, size=shape)


# ------------------------------------------------------------ convolution --


def _pads(padding, k):
    if padding == "same":
        return ((k - 1) // 2, k // 2)
    if isinstance(padding, int):
        return (padding, padding)
    return tuple(padding)


def _pad(x, pads, mode):
    if pads == (0, 0):
        return x
    width = ((0, 0), (0, 0), pads, pads)
    return np.pad(x, width, mode="wrap" if mode == "circular" else "constant")


def _unpad_adjoint(gp, pads, h, w, mode):
    lo, hi = pads
    if (lo, hi) == (0, 0):
        return gp
    if mode != "circular":
        return gp[:, :, lo:lo + h, lo:lo + w]
    rows = (np.arange(gp.shape[2]) - lo) % h
    cols = (np.arange(gp.shape[3]) - lo) % w
    out = np.zeros(gp.shape[:2] + (h, gp.shape[3]), dtype=gp.dtype)
    for r, target in enumerate(rows):
        out[:, :, target, :] += gp[:, :, r, :]
    res = np.zeros(gp.shape[:2] + (h, w), dtype=gp.dtype)
    for c, target in enumerate(cols):
        res[:, :, :, target] += out[:, :, :, c]
    return res


def conv_out_size(n, k, stride, pads):
    return (n + pads[0] + pads[1] - k) // stride + 1


def patches(x, k, stride=1, padding=0, padding_mode="zeros"):
    """Patch matrix (B, C, k*k, Ho*Wo) of a NCHW tensor, plus (Ho, Wo)."""
    h, w = x.shape[2:]
    pads = _pads(padding, k)
    ho, wo = conv_out_size(h, k, stride, pads), conv_out_size(w, k, stride, pads)
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv output would be empty for input {h}x{w}, kernel {k}")
    return _kernels.im2col(_pad(x, pads, padding_mode), k, stride, ho, wo), (ho, wo)


def patches_adjoint(dcols, x_shape, k, out_hw, stride=1, padding=0, padding_mode="zeros"):
    h, w = x_shape[2:]
    pads = _pads(padding, k)
    dxp = _kernels.col2im(dcols, k, stride, out_hw[0], out_hw[1], h + sum(pads), w + sum(pads))
    return _unpad_adjoint(dxp, pads, h, w, padding_mode)


def conv2d_forward(x, weight, stride=1, padding=0, padding_mode="zeros"):
    """Cross-correlation. Returns (output, cols) where cols is the patch matrix."""
    b, c, h, w = x.shape
    o, ci, k, k2 = weight.shape
    if ci != c or k != k2:
        raise ShapeError(f"kernel {weight.shape} does not match input with {c} channels")
    cols, (ho, wo) = patches(x, k, stride, padding, padding_mode)
    out = np.matmul(weight.reshape(o, -1), cols.reshape(b, c * k * k, ho * wo))
    return out.reshape(b, o, ho, wo), cols


def conv2d_backward(dy, x_shape, weight, cols, stride=1, padding=0, padding_mode="zeros"):
    b, c, h, w = x_shape
    o, _, k, _ = weight.shape
    ho, wo = dy.shape[2:]
    dyf = dy.reshape(b, o, ho * wo)
    colf = cols.reshape(b, c * k * k, ho * wo)
    dw = np.tensordot(dyf, colf, axes=([0, 2], [0, 2])).reshape(weight.shape)
    dcols = np.matmul(weight.reshape(o, -1).T, dyf).reshape(b, c, k * k, ho * wo)
    return patches_adjoint(dcols, x_shape, k, (ho, wo), stride, padding, padding_mode), dw


def conv_transpose2d_forward(x, weight, stride=2):
    """Adjoint of a ``stride`` conv2d without padding; kernel is (C_in, C_out, k, k)."""
    b, c, h, w = x.shape
    ci, o, k, _ = weight.shape
    if ci != c:
        raise ShapeError(f"kernel {weight.shape} does not match input with {c} channels")
    cols = np.matmul(weight.reshape(ci, -1).T, x.reshape(b, c, h * w))
    hout, wout = (h - 1) * stride + k, (w - 1) * stride + k
    return _kernels.col2im(cols.reshape(b, o, k * k, h * w), k, stride, h, w, hout, wout)


def conv_transpose2d_backward(dy, x, weight, stride=2):
    b, c, h, w = x.shape
    ci, o, k, _ = weight.shape
    dcols = _kernels.im2col(dy, k, stride, h, w).reshape(b, o * k * k, h * w)
    dx = np.matmul(weight.reshape(ci, -1), dcols).reshape(x.shape)
    dw = np.tensordot(x.reshape(b, c, h * w), dcols, axes=([0, 2], [0, 2])).reshape(weight.shape)
    return dx, dw


class Conv2d(Module):
    def __init__(self, cin, cout, k, rng, stride=1, padding=0, bias=True,
                 padding_mode="zeros", std=INIT_STD):
        super().__init__()
        self.stride, self.padding, self.padding_mode = stride, padding, padding_mode
        self.weight = Param(normal(rng, (cout, cin, k, k), std, cin * k * k))
        self.has_bias = bias
        if bias:
            self.bias = Param(np.zeros(cout))

    def forward(self, x):
        out, self._cols = conv2d_forward(x, self.weight.value, self.stride,
                                         self.padding, self.padding_mode)
        self._xshape = x.shape
        if self.has_bias:
            out += self.bias.value[:, None, None]
        return out

    def backward(self, dy):
        dx, dw = conv2d_backward(dy, self._xshape, self.weight.value, self._cols,
                                 self.stride, self.padding, self.padding_mode)
        self.weight.grad += dw
        if self.has_bias:
            self.bias.grad += dy.sum(axis=(0, 2, 3))
        return dx


class ConvTranspose2d(Module):
    def __init__(self, cin, cout, k, rng, stride=2, bias=True, std=INIT_STD):
        super().__init__()
        self.stride = stride
        self.weight = Param(normal(rng, (cin, cout, k, k), std, cin))
        self.has_bias = bias
        if bias:
            self.bias = Param(np.zeros(cout))

    def forward(self, x):
        self._x = x
        out = conv_transpose2d_forward(x, self.weight.value, self.stride)
        if self.has_bias:
            out += self.bias.value[:, None, None]
        return out

    def backward(self, dy):
        dx, dw = conv_transpose2d_backward(dy, self._x, self.weight.value, self.stride)
        self.weight.grad += dw
        if self.has_bias:
            self.bias.grad += dy.sum(axis=(0, 2, 3))
        return dx


class Conv1x1(Module):
    """Per-pixel fully connected layer over the channel axis of a NCHW tensor."""

    def __init__(self, cin, cout, rng, bias=True, std=INIT_STD):
        super().__init__()
        self.weight = Param(normal(rng, (cout, cin), std, cin))
        self.has_bias = bias
        if bias:
            self.bias = Param(np.zeros(cout))

    def forward(self, x):
        b, c, h, w = x.shape
        if c != self.weight.shape[1]:
            raise ShapeError(f"expected {self.weight.shape[1]} channels, got {c}")
        self._x = x
        out = np.matmul(self.weight.value, x.reshape(b, c, h * w)).reshape(b, -1, h, w)
        if self.has_bias:
            out += self.bias.value[:, None, None]
        return out

    def backward(self, dy):
        b, o, h, w = dy.shape
        x = self._x
        dyf = dy.reshape(b, o, h * w)
        self.weight.grad += np.tensordot(dyf, x.reshape(b, x.shape[1], h * w), axes=([0, 2], [0, 2]))
        if self.has_bias:
            self.bias.grad += dyf.sum(axis=(0, 2))
        return np.matmul(self.weight.value.T, dyf).reshape(x.shape)


class Dense(Module):
    """x @ W + b on the last axis; W is stored (in, out)."""

    def __init__(self, cin, cout, rng, bias=True, std=INIT_STD):
        super().__init__()
        self.weight = Param(normal(rng, (cin, cout), std, cin))
        self.has_bias = bias
        if bias:
            self.bias = Param(np.zeros(cout))

    def forward(self, x):
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeError(f"expected last axis {self.weight.shape[0]}, got {x.shape[-1]}")
        self._x = x
        out = x @ self.weight.value
        if self.has_bias:
            out = out + self.bias.value
        return out

    def backward(self, dy):
        x2 = self._x.reshape(-1, self._x.shape[-1])
        d2 = dy.reshape(-1, dy.shape[-1])
        self.weight.grad += x2.T @ d2
        if self.has_bias:
            self.bias.grad += d2.sum(axis=0)
        return dy @ self.weight.value.T


# ------------------------------------------------------------ pointwise ----


def relu(x):
    return np.maximum(x, 0.0)


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return cdf + x * pdf


def pointwise(x, kind):
    if kind == "relu":
        return relu(x)
    if kind == "gelu":
        return gelu(x)
    raise ValueError(f"unknown activation {kind!r}")


class Activation(Module):
    def __init__(self, kind):
        super().__init__()
        if kind not in ("relu", "gelu"):
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind

    def forward(self, x):
        self._x = x
        return pointwise(x, self.kind)

    def backward(self, dy):
        if self.kind == "relu":
            return dy * (self._x > 0)
        return dy * gelu_grad(self._x)


class LayerNorm(Module):
    def __init__(self, c, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.scale = Param(np.ones(c))
        self.shift = Param(np.zeros(c))

    def forward(self, x):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + self.eps)
        xhat = xc * inv
        self._xhat, self._inv = xhat, inv
        return xhat * self.scale.value + self.shift.value

    def backward(self, dy):
        xhat, inv = self._xhat, self._inv
        c = xhat.shape[-1]
        self.scale.grad += (dy * xhat).reshape(-1, c).sum(axis=0)
        self.shift.grad += dy.reshape(-1, c).sum(axis=0)
        g = dy * self.scale.value
        return inv * (g - g.mean(axis=-1, keepdims=True)
                      - xhat * (g * xhat).mean(axis=-1, keepdims=True))


def softmax_rows(s):
    z = s - s.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_rows_backward(a, da):
    return a * (da - (da * a).sum(axis=-1, keepdims=True))


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        self.layers = []
        for i, layer in enumerate(layers):
            self.layers.append(self.add_module(str(i), layer))

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy
