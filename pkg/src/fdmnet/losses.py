"""Joint spatial/frequency training loss.

Cubes are (..., M, N, C): spatial axes are -3 and -2, bands last. Every
loss returns ``(value, grad)`` where ``grad`` is d value / d pred. Leading
batch axes are averaged over.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossWeights:
    alpha1: float = 0.1
    alpha2: float = 1.0
    alpha3: float = 1.0
    ffl_alpha: float = 1.0
    literal_l1s: bool = False

    def __post_init__(self):
        ws = (self.alpha1, self.alpha2, self.alpha3)
        if min(ws) < 0 or max(ws) == 0:
            raise ValueError("loss weights must be nonnegative and not all zero")


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")


def _batch_count(x):
    return int(np.prod(x.shape[:-3])) if x.ndim > 3 else 1


def dft2(img):
    """2-D DFT with the 1/(MN) forward normalization, over axes (-2, -1)."""
    img = np.asarray(img, dtype=np.float64)
    m, n = img.shape[-2:]
    return np.fft.fft2(img, axes=(-2, -1)) / (m * n)


def dft2_direct(img):
    """O(M^2 N^2) reference evaluation of :func:`dft2` for a single image."""
    img = np.asarray(img, dtype=np.float64)
    m, n = img.shape
    x = np.arange(m)[:, None]
    y = np.arange(n)[None, :]
    out = np.empty((m, n), dtype=complex)
    for u in range(m):
        for v in range(n):
            out[u, v] = np.sum(img * np.exp(-2j * np.pi * (u * x / m + v * y / n)))
    return out / (m * n)


def focal_frequency_loss(pred, ref, alpha=1.0):
    """Mean over bands (and batch) of (1/MN) sum w |dF|^2 with w = |dF|^alpha.

    The weight w is held constant when differentiating.
    """
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    _same_shape(pred, ref)
    m, n, c = pred.shape[-3:]
    diff = np.moveaxis(pred - ref, -1, -3)  # (..., C, M, N)
    dF = dft2(diff)
    mag = np.abs(dF)
    w = mag ** alpha
    nimg = c * _batch_count(pred)
    value = float(np.sum(w * mag * mag) / (m * n) / nimg)
    # d/df sum w |A f|^2 = 2 Re(A^H (w A f)), and A^H g = ifft2(g) for A = fft2 / MN
    grad = 2.0 * np.real(np.fft.ifft2(w * dF, axes=(-2, -1))) / (m * n) / nimg
    return value, np.moveaxis(grad, -3, -1)


def l1_masked(pred, ref, mask, literal=False):
    """Sum of |ref - pred| on sampled entries divided by M*N (one sample per pixel).

    ``literal=True`` evaluates mean |ref - pred * mask| over all entries instead.
    """
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    _same_shape(pred, ref)
    mask = np.broadcast_to(mask, pred.shape)
    m, n, c = pred.shape[-3:]
    nb = _batch_count(pred)
    if literal:
        r = ref - pred * mask
        count = r.size
        return float(np.abs(r).sum() / count), -np.sign(r) * mask / count
    r = (ref - pred) * mask
    denom = m * n * nb
    return float(np.abs(r).sum() / denom), -np.sign(r) * mask / denom


def l1_full(pred_low, pred_high, ref):
    pred = np.asarray(pred_low, dtype=np.float64) + pred_high
    _same_shape(pred, np.asarray(ref))
    r = ref - pred
    return float(np.abs(r).mean()), -np.sign(r) / r.size


@dataclass
class LossTerms:
    total: float
    l1s: float
    ffl: float
    l1c: float


def total_loss(pred_low, pred_high, ref, mask, weights=LossWeights()):
    """Weighted joint loss; gradient is with respect to ``pred_high`` only."""
    pred = pred_low + pred_high
    l1s, g1 = l1_masked(pred, ref, mask, weights.literal_l1s)
    ffl, g2 = focal_frequency_loss(pred, ref, weights.ffl_alpha)
    l1c, g3 = l1_full(pred_low, pred_high, ref)
    total = weights.alpha1 * l1s + weights.alpha2 * ffl + weights.alpha3 * l1c
    grad = weights.alpha1 * g1 + weights.alpha2 * g2 + weights.alpha3 * g3
    return LossTerms(total, l1s, ffl, l1c), grad
