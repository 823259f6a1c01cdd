"""Multispectral filter array sampling model."""

from dataclasses import dataclass

import numpy as np


class SizingError(ValueError):
    """Image extents are not compatible with the filter-array period."""


class PatternError(ValueError):
    pass


@dataclass(frozen=True)
class MsfaPattern:
    """A p x p grid assigning one spectral band to every pixel of a period cell.

    ``band_at`` is stored as nested tuples so the pattern is hashable and
    immutable; use :attr:`grid` for an array view.
    """

    band_at: tuple
    bands: int

    def __init__(self, band_at, bands=None):
        grid = np.asarray(band_at, dtype=np.int64)
        if grid.ndim != 2 or grid.shape[0] != grid.shape[1] or grid.shape[0] < 1:
            raise PatternError(f"pattern grid must be square p x p, got shape {grid.shape}")
        if bands is None:
            bands = int(grid.max()) + 1
        if bands < 1:
            raise PatternError("pattern needs at least one band")
        if grid.min() < 0 or grid.max() >= bands:
            raise PatternError(f"band indices must lie in [0, {bands})")
        if grid.size >= bands and len(np.unique(grid)) != bands:
            missing = sorted(set(range(bands)) - set(np.unique(grid).tolist()))
            raise PatternError(f"pattern never samples bands {missing}")
        object.__setattr__(self, "band_at", tuple(tuple(int(v) for v in row) for row in grid))
        object.__setattr__(self, "bands", int(bands))

    @classmethod
    def default(cls, p=4):
        """Row-major layout: band k sits at (k // p, k % p)."""
        return cls(np.arange(p * p).reshape(p, p), bands=p * p)

    @property
    def p(self):
        return len(self.band_at)

    @property
    def grid(self):
        return np.array(self.band_at, dtype=np.int64)

    def positions(self, band):
        """All (m, n) offsets inside the period cell that sample ``band``."""
        return [(m, n) for m in range(self.p) for n in range(self.p) if self.band_at[m][n] == band]

    def check_extents(self, m, n):
        if m % self.p or n % self.p:
            raise SizingError(f"extents {m}x{n} are not divisible by the pattern period {self.p}")


@dataclass(frozen=True, eq=False)
class MosaicImage:
    data: np.ndarray
    pattern: MsfaPattern

    def __post_init__(self):
        if self.data.ndim != 2:
            raise SizingError(f"mosaic must be 2-D, got shape {self.data.shape}")
        self.pattern.check_extents(*self.data.shape)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("mosaic contains non-finite values")

    @property
    def shape(self):
        return self.data.shape


def check_cube(cube, pattern=None):
    cube = np.asarray(cube)
    if cube.ndim != 3:
        raise SizingError(f"cube must be M x N x C, got shape {cube.shape}")
    if not np.all(np.isfinite(cube)):
        raise ValueError("cube contains non-finite values")
    if pattern is not None:
        pattern.check_extents(cube.shape[0], cube.shape[1])
        if cube.shape[2] != pattern.bands:
            raise SizingError(f"cube has {cube.shape[2]} bands, pattern expects {pattern.bands}")
    return cube


def band_index_map(m, n, pattern):
    """M x N array of the band sampled at each pixel."""
    pattern.check_extents(m, n)
    return np.tile(pattern.grid, (m // pattern.p, n // pattern.p))


def mosaic(cube, pattern):
    cube = check_cube(cube, pattern)
    m, n, _ = cube.shape
    idx = band_index_map(m, n, pattern)
    data = np.take_along_axis(cube, idx[:, :, None], axis=2)[:, :, 0]
    return MosaicImage(np.ascontiguousarray(data), pattern)


def sample_mask(m, n, pattern):
    idx = band_index_map(m, n, pattern)
    mask = np.zeros((m, n, pattern.bands))
    np.put_along_axis(mask, idx[:, :, None], 1.0, axis=2)
    return mask


def relative_position_map(m, n, p):
    """M x N x 2 integer array holding (i mod p, j mod p) for every pixel."""
    if p < 1:
        raise ValueError("period must be positive")
    ii, jj = np.meshgrid(np.arange(m) % p, np.arange(n) % p, indexing="ij")
    return np.stack([ii, jj], axis=-1)


def band_extract(mos):
    """De-interleave a mosaic into C subimages of size (M/p) x (N/p).

    Bands sampled more than once per period cell are averaged.
    """
    pat = mos.pattern
    p = pat.p
    cells = mos.data.reshape(mos.shape[0] // p, p, mos.shape[1] // p, p)
    subs = []
    for k in range(pat.bands):
        pos = pat.positions(k)
        if not pos:
            raise PatternError(f"pattern has no sample for band {k}")
        subs.append(np.mean([cells[:, m, :, n] for m, n in pos], axis=0))
    return np.stack(subs)


def band_interleave(subs, pattern):
    """Inverse of :func:`band_extract` for patterns whose bands are unique."""
    subs = np.asarray(subs)
    c, hs, ws = subs.shape
    p = pattern.p
    cells = np.empty((hs, p, ws, p), dtype=subs.dtype)
    for m in range(p):
        for n in range(p):
            cells[:, m, :, n] = subs[pattern.band_at[m][n]]
    return MosaicImage(cells.reshape(hs * p, ws * p), pattern)
