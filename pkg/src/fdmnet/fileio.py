"""Cube (.hsic) and mosaic (.mosa) containers, and false-colour export.

HSIC: ``HSIC 1 <M> <N> <C>\\n`` then C*M*N little-endian float32, band-major.
MOSA: ``MOSA 1 <M> <N> <p>\\n``, one line of p*p band indices, then M*N
little-endian float32, row-major.
"""

import numpy as np

from .msfa import MosaicImage, MsfaPattern, PatternError


class FormatError(ValueError):
    pass


class HeaderError(FormatError):
    pass


class PayloadLengthError(FormatError):
    pass


class BandIndexError(FormatError):
    pass


def _read_line(buf, pos):
    end = buf.find(b"\n", pos)
    if end < 0:
        raise HeaderError("header line is not newline-terminated")
    return buf[pos:end].decode("ascii", errors="replace"), end + 1


def _parse_header(line, magic):
    parts = line.split()
    if len(parts) != 5 or parts[0] != magic or parts[1] != "1":
        raise HeaderError(f"expected '{magic} 1 <a> <b> <c>', got {line!r}")
    try:
        dims = [int(v) for v in parts[2:]]
    except ValueError:
        raise HeaderError(f"non-integer dimension in header {line!r}") from None
    if min(dims) <= 0:
        raise HeaderError(f"dimensions must be positive, got {dims}")
    return dims


def _payload(buf, pos, count):
    need = 4 * count
    have = len(buf) - pos
    if have != need:
        raise PayloadLengthError(f"payload has {have} bytes, expected {need}")
    return np.frombuffer(buf, dtype="<f4", count=count, offset=pos)


def save_hsic(path, cube):
    cube = np.asarray(cube)
    if cube.ndim != 3 or min(cube.shape) == 0:
        raise HeaderError(f"cube must be a non-empty M x N x C array, got {cube.shape}")
    m, n, c = cube.shape
    payload = np.ascontiguousarray(np.moveaxis(cube, 2, 0), dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(f"HSIC 1 {m} {n} {c}\n".encode("ascii") + payload)


def load_hsic(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    line, pos = _read_line(buf, 0)
    m, n, c = _parse_header(line, "HSIC")
    data = _payload(buf, pos, m * n * c).reshape(c, m, n)
    return np.moveaxis(data, 0, 2).astype(np.float64)


def save_mosa(path, mos: MosaicImage):
    m, n = mos.shape
    p = mos.pattern.p
    idx = " ".join(str(v) for row in mos.pattern.band_at for v in row)
    head = f"MOSA 1 {m} {n} {p}\n{idx}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(head + np.ascontiguousarray(mos.data, dtype="<f4").tobytes())


def load_mosa(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    line, pos = _read_line(buf, 0)
    m, n, p = _parse_header(line, "MOSA")
    line, pos = _read_line(buf, pos)
    try:
        idx = [int(v) for v in line.split()]
    except ValueError:
        raise HeaderError(f"band index line is not integers: {line!r}") from None
    if len(idx) != p * p:
        raise HeaderError(f"expected {p * p} band indices, got {len(idx)}")
    if min(idx) < 0 or max(idx) >= p * p:
        raise BandIndexError(f"band indices must lie in [0, {p * p}), got {idx}")
    try:
        pattern = MsfaPattern(np.reshape(idx, (p, p)))
    except PatternError as exc:
        raise BandIndexError(str(exc)) from None
    if m % p or n % p:
        raise HeaderError(f"extents {m}x{n} not divisible by period {p}")
    data = _payload(buf, pos, m * n).reshape(m, n).astype(np.float64)
    return MosaicImage(data, pattern)


def to_uint8(x):
    """[0, 1] -> [0, 255], rounding half up."""
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def export_falsecolor(cube, path, bands=(2, 11, 16)):
    """Write an 8-bit RGB image from three 1-based band indices (R, G, B).

    The format follows the extension: ``.png`` or ``.ppm``.
    """
    from PIL import Image

    cube = np.asarray(cube)
    c = cube.shape[2]
    if len(bands) != 3 or any(not 1 <= b <= c for b in bands):
        raise BandIndexError(f"need three band indices in 1..{c}, got {bands}")
    suffix = str(path).lower().rsplit(".", 1)[-1]
    if suffix not in ("png", "ppm"):
        raise FormatError(f"unsupported image extension .{suffix}; use .png or .ppm")
    rgb = to_uint8(cube[:, :, [b - 1 for b in bands]])
    Image.fromarray(rgb, mode="RGB").save(path, format=suffix.upper())
    return rgb
