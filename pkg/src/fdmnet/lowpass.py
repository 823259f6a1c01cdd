"""Low-pass cube reconstruction from a mosaic: per-band sinc upsampling
followed by a guided filter steered by the first band.

Each band's sparse sub-grid is placed at its true offset (m, n) inside the
period cell, so every interpolant passes through the measured samples.
"""

from dataclasses import dataclass

import numpy as np

from .msfa import MosaicImage, band_extract


@dataclass(frozen=True)
class LowpassConfig:
    mode: str = "fourier_zero_pad"
    lanczos_n: int = 3
    gf_radius: int = 2
    gf_eps: float = 1e-4

    def __post_init__(self):
        if self.mode not in ("fourier_zero_pad", "lanczos"):
            raise ValueError(f"unknown low-pass mode {self.mode!r}")
        if self.lanczos_n < 1 or self.gf_radius < 1 or self.gf_eps <= 0:
            raise ValueError("need lanczos_n >= 1, gf_radius >= 1, gf_eps > 0")


def _require_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} contains non-finite values")


# ------------------------------------------------------- fourier zero pad --


def _zero_pad_axis(spec, n_out, axis):
    n = spec.shape[axis]
    spec = np.moveaxis(spec, axis, 0)
    out = np.zeros((n_out,) + spec.shape[1:], dtype=complex)
    if n % 2:
        half = (n + 1) // 2
        out[:half] = spec[:half]
        if n > 1:
            out[n_out - (n - half):] = spec[half:]
    else:
        half = n // 2
        out[:half] = spec[:half]
        out[n_out - half + 1:] += spec[half + 1:]
        # split the Nyquist bin between the +/- frequencies so the result stays real
        out[half] += spec[half] / 2
        out[n_out - half] += spec[half] / 2
    return np.moveaxis(out, 0, axis)


def fourier_zero_pad_upsample(sub, factor):
    """Band-limited interpolation of a 2-D grid by an integer factor.

    Output pixel (factor*s, factor*t) coincides with input sample (s, t).
    """
    if factor < 1:
        raise ValueError("factor must be >= 1")
    sub = np.asarray(sub, dtype=np.float64)
    _require_finite(sub, "subimage")
    h, w = sub.shape
    spec = np.fft.fft2(sub)
    spec = _zero_pad_axis(spec, h * factor, 0)
    spec = _zero_pad_axis(spec, w * factor, 1)
    up = np.fft.ifft2(spec) * factor * factor
    if np.max(np.abs(up.imag), initial=0.0) > 1e-9 * max(1.0, np.max(np.abs(sub))):
        raise ArithmeticError("zero-padded spectrum lost Hermitian symmetry")
    return up.real


# ---------------------------------------------------------------- lanczos --


def lanczos_kernel(t, n):
    """Windowed sinc: sinc(t) * sinc(t / n) on |t| < n, 1 at t = 0, 0 outside."""
    t = np.asarray(t, dtype=np.float64)
    out = np.sinc(t) * np.sinc(t / n)
    return np.where(np.abs(t) < n, out, 0.0)


def _tent(t):
    return np.maximum(1.0 - np.abs(t), 0.0)


def _interp_matrix(n_coarse, factor, offset, kernel, support):
    """Rows map coarse samples to fine positions; row sums renormalized to 1.

    Fine pixel i sits at coarse coordinate (i - offset) / factor. Taps that
    fall outside the coarse grid are dropped before renormalization.
    """
    pos = (np.arange(n_coarse * factor) - offset) / factor
    taps = np.arange(n_coarse)
    d = pos[:, None] - taps[None, :]
    wts = np.where(np.abs(d) < support, kernel(d), 0.0)
    sums = wts.sum(axis=1, keepdims=True)
    # a position whose only taps vanish (can't happen with support >= 1) falls back to nearest
    bad = np.abs(sums[:, 0]) < 1e-12
    if np.any(bad):
        nearest = np.clip(np.rint(pos[bad]).astype(int), 0, n_coarse - 1)
        wts[bad] = 0.0
        wts[bad, nearest] = 1.0
        sums = wts.sum(axis=1, keepdims=True)
    return wts / sums


def lanczos_interpolate(sub, factor, n=3, offset=(0, 0)):
    sub = np.asarray(sub, dtype=np.float64)
    _require_finite(sub, "subimage")
    if n < 1:
        raise ValueError("lanczos lobes must be >= 1")
    rows = _interp_matrix(sub.shape[0], factor, offset[0], lambda d: lanczos_kernel(d, n), n)
    cols = _interp_matrix(sub.shape[1], factor, offset[1], lambda d: lanczos_kernel(d, n), n)
    return rows @ sub @ cols.T


def bilinear_interpolate(sub, factor, offset=(0, 0)):
    """Separable linear interpolation, replicating edge samples outward."""
    sub = np.asarray(sub, dtype=np.float64)
    rows = _interp_matrix(sub.shape[0], factor, offset[0], _tent, 1.0)
    cols = _interp_matrix(sub.shape[1], factor, offset[1], _tent, 1.0)
    return rows @ sub @ cols.T


# ---------------------------------------------------------- guided filter --


def box_mean(img, r):
    """Mean over the (2r+1)^2 window, truncated at the image border."""
    def box_sum(a):
        c = np.cumsum(np.cumsum(np.pad(a, ((1, 0), (1, 0))), axis=0), axis=1)
        h, w = a.shape
        i0 = np.clip(np.arange(h) - r, 0, h)
        i1 = np.clip(np.arange(h) + r + 1, 0, h)
        j0 = np.clip(np.arange(w) - r, 0, w)
        j1 = np.clip(np.arange(w) + r + 1, 0, w)
        return (c[i1][:, j1] - c[i0][:, j1] - c[i1][:, j0] + c[i0][:, j0])

    return box_sum(img) / box_sum(np.ones_like(img))


def guided_filter(src, guide, r=2, eps=1e-4):
    src = np.asarray(src, dtype=np.float64)
    guide = np.asarray(guide, dtype=np.float64)
    if src.shape != guide.shape:
        raise ValueError(f"input {src.shape} and guide {guide.shape} differ")
    _require_finite(src, "filter input")
    _require_finite(guide, "guide")
    # centre the guide: cov/var are unchanged and box means lose less precision
    guide = guide - guide.mean()
    mean_i = box_mean(guide, r)
    mean_p = box_mean(src, r)
    cov_ip = box_mean(guide * src, r) - mean_i * mean_p
    var_i = box_mean(guide * guide, r) - mean_i * mean_i
    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    return box_mean(a, r) * guide + box_mean(b, r)


# ----------------------------------------------------------- pipelines ----


def _band_offsets(pattern):
    return [pattern.positions(k)[0] for k in range(pattern.bands)]


def upsample_bands(mos: MosaicImage, cfg=LowpassConfig()):
    """Per-band sinc interpolation of the de-interleaved mosaic, M x N x C."""
    p = mos.pattern.p
    subs = band_extract(mos)
    out = np.empty(mos.shape + (len(subs),))
    for k, (sub, off) in enumerate(zip(subs, _band_offsets(mos.pattern))):
        if cfg.mode == "fourier_zero_pad":
            # the interpolant is periodic, so a cyclic shift places the samples exactly
            out[:, :, k] = np.roll(fourier_zero_pad_upsample(sub, p), off, axis=(0, 1))
        else:
            out[:, :, k] = lanczos_interpolate(sub, p, cfg.lanczos_n, off)
    return out


def reconstruct_lowpass(mos: MosaicImage, cfg=LowpassConfig()):
    up = upsample_bands(mos, cfg)
    guide = up[:, :, 0]
    out = np.empty_like(up)
    for k in range(up.shape[2]):
        out[:, :, k] = guided_filter(up[:, :, k], guide, cfg.gf_radius, cfg.gf_eps)
    return np.clip(out, 0.0, 1.0)


def bilinear_demosaic(mos: MosaicImage):
    """Baseline: independent bilinear interpolation of every band's samples."""
    p = mos.pattern.p
    subs = band_extract(mos)
    out = np.empty(mos.shape + (len(subs),))
    for k, (sub, off) in enumerate(zip(subs, _band_offsets(mos.pattern))):
        out[:, :, k] = bilinear_interpolate(sub, p, off)
    return out
