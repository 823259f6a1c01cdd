"""Finite-difference gradient checks for every layer and composite block."""

import numpy as np

from .gradcheck import fd_gradcheck
from .losses import LossWeights, dft2, focal_frequency_loss, total_loss
from .maformer import (
    MaFormer, ModelConfig, MsfaConv, MsfaPool, PeriodicBranch, Stmc, SwinBlock,
    WindowAttention,
)
from .msfa import MsfaPattern, sample_mask
from .nn import (
    Activation, Conv1x1, Conv2d, ConvTranspose2d, Dense, LayerNorm, softmax_rows,
    softmax_rows_backward,
)

LAYER_TOL = 1e-4
NETWORK_TOL = 1e-3


def _jitter_biases(module, rng, scale=0.05):
    # zero biases put ReLU inputs exactly on the kink (e.g. the MWP class (0, 0))
    for name, p in module.named_params():
        if name.endswith(("bias", "b1")):
            p.value[...] = rng.choice([-1.0, 1.0], p.shape) * rng.uniform(scale, 2 * scale, p.shape)


class _Stateless:
    def named_params(self):
        return iter(())

    def zero_grad(self):
        pass


class _Softmax(_Stateless):
    def forward(self, x):
        self._a = softmax_rows(x)
        return self._a

    def backward(self, dy):
        return softmax_rows_backward(self._a, dy)


class _TotalLoss(_Stateless):
    """Joint loss as a function of the high-pass prediction.

    The focal weight is treated as a constant by the analytic gradient, so the
    finite-difference check uses ``ffl_alpha=0`` here; :class:`_FrozenFfl`
    covers the weighted case.
    """

    def __init__(self, rng, shape=(1, 8, 8, 4), weights=LossWeights(ffl_alpha=0.0)):
        self.low = rng.uniform(0.2, 0.8, shape)
        self.ref = rng.uniform(0.2, 0.8, shape)
        self.mask = sample_mask(shape[1], shape[2], MsfaPattern.default(2))
        self.weights = weights

    def forward(self, high):
        terms, self._grad = total_loss(self.low, high, self.ref, self.mask, self.weights)
        return np.asarray(terms.total)

    def backward(self, dy):
        return self._grad * dy


class _FrozenFfl(_Stateless):
    """Focal frequency loss with the weight fixed at the base point ``x0``."""

    def __init__(self, ref, x0, alpha=1.0):
        self.ref = ref
        diff = np.moveaxis(x0 - ref, -1, -3)
        self.w = np.abs(dft2(diff)) ** alpha
        self._grad = focal_frequency_loss(x0, ref, alpha)[1]

    def forward(self, x):
        m, n, c = x.shape[-3:]
        dF = dft2(np.moveaxis(x - self.ref, -1, -3))
        return np.asarray(np.sum(self.w * np.abs(dF) ** 2) / (m * n) / (c * x.shape[0]))

    def backward(self, dy):
        return self._grad * dy


def _cases(rng):
    cfg4 = ModelConfig(bands=4, width=8, period=4, window=4, depths=(1, 1, 1, 1), heads=2,
                       mlp_ratio=2)
    x = lambda *s: rng.standard_normal(s)
    relu_in = x(2, 3, 5)
    yield "conv2d", Conv2d(2, 3, 3, rng, padding=1, std=None), x(1, 2, 6, 6), {}
    yield "conv2d_stride2", Conv2d(2, 4, 2, rng, stride=2, bias=False, std=None), x(1, 2, 6, 6), {}
    yield "conv2d_circular", Conv2d(2, 2, 3, rng, padding=1, padding_mode="circular", std=None), \
        x(1, 2, 5, 5), {}
    yield "conv_transpose2d", ConvTranspose2d(4, 2, 2, rng, std=None), x(1, 4, 3, 3), {}
    yield "conv1x1", Conv1x1(3, 4, rng, std=None), x(2, 3, 4, 4), {}
    yield "dense", Dense(5, 3, rng, std=None), x(2, 4, 5), {}
    yield "relu", Activation("relu"), relu_in, {"input_mask": np.abs(relu_in) > 1e-3}
    yield "gelu", Activation("gelu"), x(2, 3, 5), {}
    yield "layer_norm", LayerNorm(6), x(3, 4, 6), {}
    yield "softmax_rows", _Softmax(), x(3, 5, 7), {}
    yield "msfa_conv", MsfaConv(2, 3, 4, rng, k=8, std=None), x(1, 2, 8, 8), {}
    yield "msfa_conv_circular", MsfaConv(2, 2, 2, rng, k=3, padding_mode="circular", std=None), \
        x(1, 2, 6, 6), {}
    yield "msfa_pool", MsfaPool(4), x(1, 3, 8, 16), {}
    yield "periodic_branch", PeriodicBranch(4, cfg4, rng), x(1, 4, 8, 8), {}
    yield "window_attention", WindowAttention(4, 4, 2, rng, std=None), x(2, 16, 4), {}
    yield "swin_block", SwinBlock(4, cfg4, rng, shift=2), x(1, 4, 8, 8), {}
    yield "stmc", Stmc(8, cfg4, rng, shift=2), x(1, 8, 8, 8), {}
    yield "total_loss", _TotalLoss(rng), rng.uniform(-0.2, 0.2, (1, 8, 8, 4)), {}
    ref, x0 = rng.uniform(0, 1, (2, 8, 8, 3)), rng.uniform(0, 1, (2, 8, 8, 3))
    yield "ffl_frozen_weight", _FrozenFfl(ref, x0), x0, {}


def micro_network():
    cfg = ModelConfig(bands=4, width=8, period=2, window=4, depths=(1, 1, 1, 1), heads=4,
                      seed=3)
    return MaFormer(cfg)


def run_suite(seed=0, include_network=True, n_probe=16, network_probe=3):
    """Yield ``(name, report)`` for every check."""
    rng = np.random.default_rng(seed)
    for name, module, x, kw in _cases(rng):
        if hasattr(module, "_params"):
            _jitter_biases(module, rng)
        yield name, fd_gradcheck(module, x, tol=LAYER_TOL, n_probe=n_probe, rng=rng, **kw)
    if include_network:
        net = micro_network()
        _jitter_biases(net, rng)
        y = rng.uniform(0, 1, (1, 1, 32, 32))
        yield "maformer_micro", fd_gradcheck(net, y, tol=NETWORK_TOL, n_probe=network_probe, rng=rng)
