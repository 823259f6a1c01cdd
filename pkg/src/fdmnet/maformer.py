"""MaFormer: U-Net of blocks mixing a filter-array-periodic convolution branch
with a shifted-window self-attention branch, used to predict the high-pass
part of a hyperspectral cube from its mosaic.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .lowpass import LowpassConfig, reconstruct_lowpass
from .msfa import MosaicImage, SizingError
from .nn import (
    INIT_STD, Activation, Conv1x1, Conv2d, ConvTranspose2d, Dense, LayerNorm,
    Module, Param, ShapeError, _pad, _pads, _unpad_adjoint, normal, softmax_rows,
    softmax_rows_backward,
)


@dataclass(frozen=True)
class ModelConfig:
    bands: int = 16
    width: int = 0  # 0 means 2 * bands
    period: int = 4
    window: int = 8
    depths: tuple = (2, 2, 2, 2)
    heads: int = 4
    mlp_ratio: int = 4
    mwp_hidden: int = 16
    kernel: int = 8
    init_std: float = 0.0  # 0 means 1/sqrt(fan_in)
    head_std: float = 1e-4  # output conv starts near zero so the low-pass estimate passes through
    seed: int = 0

    def __post_init__(self):
        if len(self.depths) != 4 or min(self.depths) < 1:
            raise ValueError("depths needs four stage counts, each >= 1")
        if self.base_width % 2:
            raise ValueError("base width must be even (the block splits channels in half)")
        if self.init_std < 0 or self.head_std <= 0:
            raise ValueError("init_std must be >= 0 and head_std > 0")
        if (self.base_width // 2) % self.heads:
            raise ValueError(f"half width {self.base_width // 2} not divisible by {self.heads} heads")

    @property
    def base_width(self):
        return self.width or 2 * self.bands

    def stage_width(self, s):
        return self.base_width * 2 ** s

    @classmethod
    def micro(cls, **kw):
        base = dict(bands=16, width=8, period=4, window=4, depths=(1, 1, 1, 1))
        base.update(kw)
        return cls(**base)


# ------------------------------------------------------------- MSFA conv --


def relative_position_encoding(p):
    """(p*p, 2) array of (m/p, n/p); row index is the class m*p + n."""
    m, n = np.meshgrid(np.arange(p), np.arange(p), indexing="ij")
    return np.stack([m.ravel(), n.ravel()], axis=1) / p


def position_classes(h, w, p):
    i, j = np.meshgrid(np.arange(h) % p, np.arange(w) % p, indexing="ij")
    return (i * p + j).ravel()


class WeightPredictor(Module):
    """Two 1x1 convolutions with a ReLU between, applied to the relative
    position encoding. Emits one k x k spatial modulation per class."""

    def __init__(self, p, k, hidden, rng, std=INIT_STD):
        super().__init__()
        self.p, self.k = p, k
        self.w1 = Param(normal(rng, (hidden, 2), std, 2))
        self.b1 = Param(np.zeros(hidden))
        self.w2 = Param(normal(rng, (k * k, hidden), std, hidden))
        # start at an all-ones modulation so MSFA-Conv begins as a plain conv
        self.b2 = Param(np.ones(k * k))

    def forward(self, r=None):
        r = relative_position_encoding(self.p) if r is None else r
        self._r = r
        self._h = r @ self.w1.value.T + self.b1.value
        self._a = np.maximum(self._h, 0.0)
        return self._a @ self.w2.value.T + self.b2.value

    def backward(self, dmod):
        self.w2.grad += dmod.T @ self._a
        self.b2.grad += dmod.sum(axis=0)
        dh = (dmod @ self.w2.value) * (self._h > 0)
        self.w1.grad += dh.T @ self._r
        self.b1.grad += dh.sum(axis=0)
        return dh @ self.w1.value


def mwp_predict(r, wp):
    """Kernel table (p*p, k, k) for encoding ``r`` using predictor ``wp``."""
    return wp.forward(r).reshape(-1, wp.k, wp.k)


class MsfaConv(Module):
    """Spatially varying k x k convolution.

    The kernel at output pixel (i, j) is a learned channel-mixing kernel
    multiplied tap-by-tap with the predicted modulation for the pixel's
    relative position (i mod p, j mod p).
    """

    def __init__(self, cin, cout, p, rng, k=8, hidden=16, bias=True,
                 padding_mode="zeros", std=INIT_STD, weight_std=0.0):
        super().__init__()
        self.p, self.k, self.padding_mode = p, k, padding_mode
        self.weight = Param(normal(rng, (cout, cin, k, k), weight_std or std, cin * k * k))
        self.has_bias = bias
        if bias:
            self.bias = Param(np.zeros(cout))
        self.mwp = WeightPredictor(p, k, hidden, rng, std)
        self.modulation_override = None

    def modulation(self):
        kk = self.k * self.k
        if self.modulation_override is not None:
            return np.broadcast_to(self.modulation_override, (self.p * self.p, kk))
        return self.mwp.forward()

    def forward(self, x):
        b, c, h, w = x.shape
        p, k, o = self.p, self.k, self.weight.shape[0]
        if h % p or w % p:
            raise SizingError(f"MSFA-Conv input {h}x{w} not divisible by period {p}")
        if c != self.weight.shape[1]:
            raise ShapeError(f"MSFA-Conv expects {self.weight.shape[1]} channels, got {c}")
        mod = self.modulation()
        xp = _pad(x, _pads("same", k), self.padding_mode)
        wm = self.weight.value.reshape(o, c, k * k)
        ho, wo = h // p, w // p
        out = np.empty((b, o, h, w), dtype=x.dtype)
        cols = []
        # pixels of one relative-position class share one effective kernel
        for cls, (m, n) in enumerate(_classes(p)):
            cl = _kernels.im2col(xp[:, :, m:, n:], k, p, ho, wo).reshape(b, c * k * k, ho * wo)
            eff = (wm * mod[cls]).reshape(o, -1)
            out[:, :, m::p, n::p] = np.matmul(eff, cl).reshape(b, o, ho, wo)
            cols.append(cl)
        if self.has_bias:
            out += self.bias.value[:, None, None]
        self._cache = (x.shape, xp.shape, cols, mod)
        return out

    def backward(self, dy):
        (b, c, h, w), xp_shape, cols, mod = self._cache
        hp, wp = xp_shape[2:]
        p, k, o = self.p, self.k, self.weight.shape[0]
        ho, wo = h // p, w // p
        wm = self.weight.value.reshape(o, c, k * k)
        dwm = np.zeros_like(wm)
        dmod = np.zeros((p * p, k * k))
        dxp = np.zeros((b, c, hp, wp), dtype=dy.dtype)
        if self.has_bias:
            self.bias.grad += dy.sum(axis=(0, 2, 3))
        for cls, (m, n) in enumerate(_classes(p)):
            dyl = np.ascontiguousarray(dy[:, :, m::p, n::p]).reshape(b, o, ho * wo)
            deff = np.tensordot(dyl, cols[cls], axes=([0, 2], [0, 2])).reshape(o, c, k * k)
            dwm += deff * mod[cls]
            dmod[cls] = np.einsum("oct,oct->t", deff, wm)
            eff = (wm * mod[cls]).reshape(o, -1)
            dcl = np.matmul(eff.T, dyl).reshape(b, c, k * k, ho * wo)
            dxp[:, :, m:, n:] += _kernels.col2im(dcl, k, p, ho, wo, hp - m, wp - n)
        self.weight.grad += dwm.reshape(self.weight.shape)
        if self.modulation_override is None:
            self.mwp.backward(dmod)
        return _unpad_adjoint(dxp, _pads("same", k), h, w, self.padding_mode)


def _classes(p):
    return [(m, n) for m in range(p) for n in range(p)]


# ---------------------------------------------------------- MSFA pooling --


def msfa_pool(x, p):
    """out(i, j) = mean of x(i + p*s, j + p*t) over in-range s, t >= 0,
    cropped to half the spatial extents."""
    h, w = x.shape[-2:]
    if h % (2 * p) or w % (2 * p):
        raise SizingError(f"MSFA pooling needs extents divisible by {2 * p}, got {h}x{w}")
    return _kernels.msfa_pool(x, p)


class MsfaPool(Module):
    def __init__(self, p):
        super().__init__()
        self.p = p

    def forward(self, x):
        self._hw = x.shape[-2:]
        return msfa_pool(x, self.p)

    def backward(self, dy):
        return _kernels.msfa_pool_backward(dy, self.p, *self._hw)


class Upsample2x(Module):
    def forward(self, x):
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, dy):
        b, c, h, w = dy.shape
        return dy.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class ResConv(Module):
    """x + conv3x3(relu(conv3x3(x)))."""

    def __init__(self, c, rng, std=INIT_STD):
        super().__init__()
        self.conv1 = Conv2d(c, c, 3, rng, padding=1, std=std)
        self.act = Activation("relu")
        self.conv2 = Conv2d(c, c, 3, rng, padding=1, std=std)

    def forward(self, x):
        return x + self.conv2.forward(self.act.forward(self.conv1.forward(x)))

    def backward(self, dy):
        return dy + self.conv1.backward(self.act.backward(self.conv2.backward(dy)))


class PeriodicBranch(Module):
    def __init__(self, c, cfg, rng):
        super().__init__()
        self.conv = MsfaConv(c, c, cfg.period, rng, k=cfg.kernel, hidden=cfg.mwp_hidden,
                             std=cfg.init_std or None)
        self.pool = MsfaPool(cfg.period)
        self.rconv1 = ResConv(c, rng, cfg.init_std or None)
        self.rconv2 = ResConv(c, rng, cfg.init_std or None)
        self.up = Upsample2x()
        self._seq = (self.conv, self.pool, self.rconv1, self.rconv2, self.up)

    def forward(self, x):
        for layer in self._seq:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self._seq):
            dy = layer.backward(dy)
        return dy


# ------------------------------------------------------ window attention --


def window_partition(x, k, shift=0):
    """(B, H, W, C) -> (B * H/k * W/k, k*k, C), cyclically shifted by -shift first."""
    b, h, w, c = x.shape
    if h % k or w % k:
        raise SizingError(f"window size {k} does not divide extents {h}x{w}")
    if shift:
        x = np.roll(x, (-shift, -shift), axis=(1, 2))
    x = x.reshape(b, h // k, k, w // k, k, c).transpose(0, 1, 3, 2, 4, 5)
    return x.reshape(-1, k * k, c)


def window_reverse(win, k, h, w, shift=0):
    c = win.shape[-1]
    b = win.shape[0] // ((h // k) * (w // k))
    x = win.reshape(b, h // k, w // k, k, k, c).transpose(0, 1, 3, 2, 4, 5).reshape(b, h, w, c)
    if shift:
        x = np.roll(x, (shift, shift), axis=(1, 2))
    return x


class WindowAttention(Module):
    """Multi-head self-attention inside each window with a learnable
    (k*k) x (k*k) bias added to the logits, shared by all heads."""

    def __init__(self, c, k, heads, rng, std=INIT_STD):
        super().__init__()
        if c % heads:
            raise ShapeError(f"{c} channels not divisible by {heads} heads")
        self.heads, self.k = heads, k
        self.wq = Param(normal(rng, (c, c), std, c))
        self.wk = Param(normal(rng, (c, c), std, c))
        self.wv = Param(normal(rng, (c, c), std, c))
        self.bias_table = Param(normal(rng, (k * k, k * k), INIT_STD if std is None else std))
        self.proj = Dense(c, c, rng, std=std)

    def _split(self, t):
        n, L, c = t.shape
        return t.reshape(n, L, self.heads, c // self.heads).transpose(0, 2, 1, 3)

    def _merge(self, t):
        n, h, L, d = t.shape
        return t.transpose(0, 2, 1, 3).reshape(n, L, h * d)

    def attention_weights(self, xw):
        """(windows, heads, L, L) row-stochastic attention matrix."""
        q = self._split(xw @ self.wq.value)
        kk = self._split(xw @ self.wk.value)
        scale = 1.0 / np.sqrt(q.shape[-1])
        return softmax_rows(q @ kk.transpose(0, 1, 3, 2) * scale + self.bias_table.value)

    def forward(self, xw):
        n, L, c = xw.shape
        if L != self.k * self.k:
            raise ShapeError(f"windows hold {L} tokens, expected {self.k * self.k}")
        q = self._split(xw @ self.wq.value)
        kk = self._split(xw @ self.wk.value)
        v = self._split(xw @ self.wv.value)
        scale = 1.0 / np.sqrt(q.shape[-1])
        a = softmax_rows(q @ kk.transpose(0, 1, 3, 2) * scale + self.bias_table.value)
        o = self._merge(a @ v)
        self._cache = (xw, q, kk, v, a, scale)
        return self.proj.forward(o)

    def backward(self, dy):
        xw, q, kk, v, a, scale = self._cache
        do = self._split(self.proj.backward(dy))
        da = do @ v.transpose(0, 1, 3, 2)
        dv = a.transpose(0, 1, 3, 2) @ do
        ds = softmax_rows_backward(a, da)
        self.bias_table.grad += ds.sum(axis=(0, 1))
        dq = ds @ kk * scale
        dk = ds.transpose(0, 1, 3, 2) @ q * scale
        x2 = xw.reshape(-1, xw.shape[-1])
        dx = np.zeros_like(xw)
        for w, g in ((self.wq, dq), (self.wk, dk), (self.wv, dv)):
            g = self._merge(g)
            w.grad += x2.T @ g.reshape(-1, g.shape[-1])
            dx += g @ w.value.T
        return dx


class SwinBlock(Module):
    """x + WindowAttn(LN(x)), then + MLP(LN(.)); input and output are NCHW."""

    def __init__(self, c, cfg, rng, shift=0):
        super().__init__()
        self.k, self.shift = cfg.window, shift
        self.norm1 = LayerNorm(c)
        self.attn = WindowAttention(c, cfg.window, cfg.heads, rng, cfg.init_std or None)
        self.norm2 = LayerNorm(c)
        self.fc1 = Dense(c, c * cfg.mlp_ratio, rng, std=cfg.init_std or None)
        self.act = Activation("gelu")
        self.fc2 = Dense(c * cfg.mlp_ratio, c, rng, std=cfg.init_std or None)

    def forward(self, x):
        t = x.transpose(0, 2, 3, 1)
        h, w = t.shape[1:3]
        self._hw = (h, w)
        win = window_partition(self.norm1.forward(t), self.k, self.shift)
        y = t + window_reverse(self.attn.forward(win), self.k, h, w, self.shift)
        z = y + self.fc2.forward(self.act.forward(self.fc1.forward(self.norm2.forward(y))))
        return np.ascontiguousarray(z.transpose(0, 3, 1, 2))

    def backward(self, dz):
        h, w = self._hw
        dz = dz.transpose(0, 2, 3, 1)
        dy = dz + self.norm2.backward(self.fc1.backward(self.act.backward(self.fc2.backward(dz))))
        dwin = self.attn.backward(window_partition(dy, self.k, self.shift))
        dt = dy + self.norm1.backward(window_reverse(dwin, self.k, h, w, self.shift))
        return np.ascontiguousarray(dt.transpose(0, 3, 1, 2))


# ------------------------------------------------------------------ STMC --


class Stmc(Module):
    """1x1 projection, channel split, periodic and window-attention branches
    in parallel, concatenation, 1x1 fusion."""

    def __init__(self, c, cfg, rng, shift=0):
        super().__init__()
        self.half = c // 2
        self.proj = Conv1x1(c, c, rng, std=cfg.init_std or None)
        self.periodic = PeriodicBranch(self.half, cfg, rng)
        self.nonlocal_ = SwinBlock(self.half, cfg, rng, shift)
        self.fuse = Conv1x1(c, c, rng, std=cfg.init_std or None)

    def forward(self, x):
        x0 = self.proj.forward(x)
        xp = self.periodic.forward(np.ascontiguousarray(x0[:, :self.half]))
        xn = self.nonlocal_.forward(np.ascontiguousarray(x0[:, self.half:]))
        return self.fuse.forward(np.concatenate([xp, xn], axis=1))

    def backward(self, dy):
        d = self.fuse.backward(dy)
        dx0 = np.concatenate([
            self.periodic.backward(np.ascontiguousarray(d[:, :self.half])),
            self.nonlocal_.backward(np.ascontiguousarray(d[:, self.half:])),
        ], axis=1)
        return self.proj.backward(dx0)


class StmcStack(Module):
    def __init__(self, c, n, cfg, rng):
        super().__init__()
        half_k = cfg.window // 2
        self.blocks = [self.add_module(str(j), Stmc(c, cfg, rng, shift=half_k if j % 2 else 0))
                       for j in range(n)]

    def forward(self, x):
        for blk in self.blocks:
            x = blk.forward(x)
        return x

    def backward(self, dy):
        for blk in reversed(self.blocks):
            dy = blk.backward(dy)
        return dy


# --------------------------------------------------------------- network --


class MaFormer(Module):
    """Mosaic (B, 1, M, N) -> high-pass cube estimate (B, C, M, N)."""

    def __init__(self, cfg: ModelConfig, rng=None):
        super().__init__()
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.cfg = cfg
        w = cfg.stage_width
        std = cfg.init_std or None
        self.stem = MsfaConv(1, w(0), cfg.period, rng, k=cfg.kernel, hidden=cfg.mwp_hidden, std=std)
        self.enc = [self.add_module(f"enc{s}", StmcStack(w(s), cfg.depths[s], cfg, rng))
                    for s in range(3)]
        self.down = [self.add_module(f"down{s}", Conv2d(w(s), w(s + 1), 2, rng, stride=2,
                                                        bias=False, std=std))
                     for s in range(3)]
        self.bottleneck = StmcStack(w(3), cfg.depths[3], cfg, rng)
        self.up = [self.add_module(f"up{s}", ConvTranspose2d(w(s + 1), w(s), 2, rng, std=std))
                   for s in range(3)]
        self.dec = [self.add_module(f"dec{s}", StmcStack(w(s), cfg.depths[s], cfg, rng))
                    for s in range(3)]
        self.head = MsfaConv(w(0), cfg.bands, cfg.period, rng, k=cfg.kernel,
                             hidden=cfg.mwp_hidden, std=cfg.init_std or INIT_STD,
                             weight_std=cfg.head_std)

    def check_extents(self, m, n):
        cfg = self.cfg
        for s in range(4):
            hs, ws = m >> s, n >> s
            if (hs << s) != m or (ws << s) != n:
                raise SizingError(f"stage {s}: extents {m}x{n} not divisible by {2 ** s}")
            if hs % cfg.window or ws % cfg.window:
                raise SizingError(f"stage {s}: window {cfg.window} does not divide {hs}x{ws}")
            if hs % (2 * cfg.period) or ws % (2 * cfg.period):
                raise SizingError(f"stage {s}: MSFA pooling needs {hs}x{ws} divisible by "
                                  f"{2 * cfg.period}")

    def forward(self, y):
        self.check_extents(*y.shape[-2:])
        x = self.stem.forward(y)
        skips = []
        for s in range(3):
            x = self.enc[s].forward(x)
            skips.append(x)
            x = self.down[s].forward(x)
        x = self.bottleneck.forward(x)
        for s in reversed(range(3)):
            x = self.up[s].forward(x) + skips[s]
            x = self.dec[s].forward(x)
        return self.head.forward(x)

    def backward(self, dy):
        d = self.head.backward(dy)
        dskips = [None] * 3
        for s in range(3):
            d = self.dec[s].backward(d)
            dskips[s] = d
            d = self.up[s].backward(d)
        d = self.bottleneck.backward(d)
        for s in reversed(range(3)):
            d = self.down[s].backward(d) + dskips[s]
            d = self.enc[s].backward(d)
        return self.stem.backward(d)

    def load_arrays(self, arrays):
        own = self.param_dict()
        missing = sorted(set(own) - set(arrays))
        extra = sorted(set(arrays) - set(own))
        wrong = [f"{n}: {arrays[n].shape} vs {own[n].shape}" for n in own
                 if n in arrays and arrays[n].shape != own[n].shape]
        if missing or extra or wrong:
            raise ShapeError("checkpoint does not match model: "
                             f"missing={missing[:5]} extra={extra[:5]} shape diffs={wrong[:5]}")
        for n, p in own.items():
            p.value = arrays[n].astype(p.value.dtype).copy()
            p.zero_grad()


def cube_batch_to_nchw(x):
    return np.ascontiguousarray(np.moveaxis(x, -1, -3))


def nchw_to_cube_batch(x):
    return np.ascontiguousarray(np.moveaxis(x, -3, -1))


def maformer_forward(mos: MosaicImage, model: MaFormer):
    y = mos.data[None, None].astype(np.float64)
    return nchw_to_cube_batch(model.forward(y))[0]


def fdmnet_forward(mos: MosaicImage, model: MaFormer, lowcfg=LowpassConfig(), clamp=True):
    """Low-pass reconstruction plus the learned high-pass residual."""
    out = reconstruct_lowpass(mos, lowcfg) + maformer_forward(mos, model)
    return np.clip(out, 0.0, 1.0) if clamp else out
