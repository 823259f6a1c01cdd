"""Synthetic hyperspectral scenes with controllable spatial-frequency content."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SceneSpec:
    m: int = 64
    n: int = 64
    bands: int = 16
    base: float = 0.45
    smooth_amplitude: float = 0.25
    n_waves: int = 4
    max_freq: int = 3  # cycles per image along each axis
    detail_amplitude: float = 0.2
    n_shapes: int = 12
    noise: float = 0.0
    seed: int = 0


@dataclass
class Scene:
    cube: np.ndarray
    smooth: np.ndarray
    detail: np.ndarray


def _spectral_curve(rng, bands, roughness=3):
    """Random smooth positive gain curve over the band axis, values in [0.2, 1]."""
    t = np.linspace(0, 1, bands)
    curve = np.zeros(bands)
    for f in range(1, roughness + 1):
        curve += rng.normal() / f * np.cos(np.pi * f * t + rng.uniform(0, 2 * np.pi))
    curve -= curve.min()
    if curve.max() > 0:
        curve /= curve.max()
    return 0.2 + 0.8 * curve


def smooth_component(spec, rng):
    """Sum of integer-frequency 2-D cosines; periodic over the M x N grid, so its
    spectrum is confined to |frequency| <= max_freq along each axis."""
    m, n, c = spec.m, spec.n, spec.bands
    x = np.arange(m)[:, None, None] / m
    y = np.arange(n)[None, :, None] / n
    out = np.full((m, n, c), spec.base)
    if spec.smooth_amplitude == 0 or spec.n_waves == 0:
        return out
    amp = spec.smooth_amplitude / spec.n_waves
    for _ in range(spec.n_waves):
        fx, fy = rng.integers(-spec.max_freq, spec.max_freq + 1, size=2)
        if fx == 0 and fy == 0:
            fx = 1
        phase0 = rng.uniform(0, 2 * np.pi)
        ramp = rng.uniform(-0.3, 0.3)  # per-band phase increment
        gains = _spectral_curve(rng, c)
        phase = phase0 + ramp * np.arange(c)
        out += amp * gains * np.cos(2 * np.pi * (fx * x + fy * y) + phase)
    return out


def detail_component(spec, rng):
    """Axis-aligned rectangles sharing one layout across bands, with
    band-dependent signed gains."""
    m, n, c = spec.m, spec.n, spec.bands
    out = np.zeros((m, n, c))
    if spec.detail_amplitude == 0 or spec.n_shapes == 0:
        return out
    for _ in range(spec.n_shapes):
        h = rng.integers(2, max(3, m // 3))
        w = rng.integers(2, max(3, n // 3))
        i0 = rng.integers(0, m - h + 1)
        j0 = rng.integers(0, n - w + 1)
        gains = _spectral_curve(rng, c) * rng.choice([-1.0, 1.0])
        out[i0:i0 + h, j0:j0 + w, :] += spec.detail_amplitude * gains / np.sqrt(spec.n_shapes / 4)
    return out


def generate(spec: SceneSpec):
    """Deterministic scene for ``spec.seed``; cube = clip(smooth + detail + noise)."""
    rng = np.random.default_rng(spec.seed)
    smooth = smooth_component(spec, rng)
    detail = detail_component(spec, rng)
    cube = smooth + detail
    if spec.noise > 0:
        cube = cube + rng.normal(0.0, spec.noise, size=cube.shape)
    return Scene(np.clip(cube, 0.0, 1.0), smooth, detail)


def spectrum_energy_above(img, bound):
    """Fraction of (non-DC) energy at frequencies with |f| > bound on either axis."""
    F = np.fft.fft2(img - img.mean())
    fm = np.abs(np.fft.fftfreq(img.shape[0], 1.0 / img.shape[0]))
    fn = np.abs(np.fft.fftfreq(img.shape[1], 1.0 / img.shape[1]))
    outside = (fm[:, None] > bound) | (fn[None, :] > bound)
    total = np.sum(np.abs(F) ** 2)
    if total == 0:
        return 0.0
    return float(np.sum(np.abs(F[outside]) ** 2) / total)
