"""Binary parameter checkpoints.

Layout (all integers little-endian)::

    b"FDMCKPT1"
    u32 header length, header bytes (UTF-8 ``key=value`` lines)
    repeated until EOF:
        u32 name length, name bytes (UTF-8)
        u32 rank, rank x u64 extents
        prod(extents) x f64 payload
"""

import struct

import numpy as np

MAGIC = b"FDMCKPT1"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, named_arrays, header=""):
    chunks = [MAGIC]
    hb = header.encode("utf-8")
    chunks.append(struct.pack("<I", len(hb)) + hb)
    for name, arr in named_arrays.items():
        arr = np.asarray(arr, dtype="<f8")
        nb = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(nb)) + nb)
        chunks.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(np.ascontiguousarray(arr).tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path):
    """Return ``(header_text, {name: float64 array})`` preserving record order."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:8]!r}")
    pos = 8

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated at byte {pos}")
        out = buf[pos:pos + n]
        pos += n
        return out

    (hlen,) = struct.unpack("<I", take(4))
    header = take(hlen).decode("utf-8")
    arrays = {}
    while pos < len(buf):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        count = int(np.prod(shape)) if rank else 1
        arrays[name] = np.frombuffer(take(8 * count), dtype="<f8").reshape(shape).astype(np.float64)
    return header, arrays
