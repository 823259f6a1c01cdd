"""Reconstruction quality metrics for M x N x C cubes with values in [0, 1]."""

import numpy as np
from scipy.ndimage import correlate

PSNR_CAP = 100.0
SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
MRAE_EPS = 1e-6


def _check(pred, ref):
    pred = np.asarray(pred, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if pred.shape != ref.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {ref.shape}")
    return pred, ref


def psnr(pred, ref):
    pred, ref = _check(pred, ref)
    mse = float(np.mean((pred - ref) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return float(10.0 * np.log10(1.0 / mse))


def _gaussian_window(size=SSIM_WIN, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-x ** 2 / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def ssim_band(x, y, data_range=1.0):
    win = _gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def filt(a):
        return correlate(a, win, mode="reflect")

    mx, my = filt(x), filt(y)
    vx = filt(x * x) - mx * mx
    vy = filt(y * y) - my * my
    cxy = filt(x * y) - mx * my
    smap = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    pad = (SSIM_WIN - 1) // 2
    if x.shape[0] > 2 * pad and x.shape[1] > 2 * pad:
        smap = smap[pad:-pad, pad:-pad]
    return float(smap.mean())


def ssim(pred, ref):
    pred, ref = _check(pred, ref)
    return float(np.mean([ssim_band(pred[:, :, k], ref[:, :, k]) for k in range(ref.shape[2])]))


def sam(pred, ref):
    """Mean spectral angle in radians; pixels where either spectrum is zero are skipped."""
    pred, ref = _check(pred, ref)
    a = pred.reshape(-1, pred.shape[-1])
    b = ref.reshape(-1, ref.shape[-1])
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    ok = (na > 0) & (nb > 0)
    if not np.any(ok):
        return 0.0
    ua = a[ok] / na[ok, None]
    ub = b[ok] / nb[ok, None]
    # half-angle form stays accurate near 0 and pi, unlike arccos of the cosine
    ang = 2.0 * np.arctan2(np.linalg.norm(ua - ub, axis=1), np.linalg.norm(ua + ub, axis=1))
    return float(np.mean(ang))


def mrae(pred, ref):
    pred, ref = _check(pred, ref)
    return float(np.mean(np.abs(ref - pred) / (ref + MRAE_EPS)))


def metrics(pred, ref):
    return {"psnr": psnr(pred, ref), "ssim": ssim(pred, ref),
            "sam": sam(pred, ref), "mrae": mrae(pred, ref)}
