"""Hot inner loops with a numba path and a pure-numpy fallback.

The backend is picked once at import time. Set ``FDMNET_DISABLE_NUMBA=1``
to force the numpy path (also used automatically when numba is missing).
Both paths produce identical results; ``use_backend`` switches at runtime
for tests and benchmarks.
"""

import contextlib
import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

_DISABLED = os.environ.get("FDMNET_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")


# ---------------------------------------------------------------- numpy ----


def im2col_numpy(xp, k, stride, ho, wo):
    """(B, C, Hp, Wp) padded input -> (B, C, k*k, ho*wo) patch matrix."""
    b, c = xp.shape[:2]
    out = np.empty((b, c, k * k, ho * wo), dtype=xp.dtype)
    for u in range(k):
        for v in range(k):
            tap = xp[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride]
            out[:, :, u * k + v, :] = tap.reshape(b, c, ho * wo)
    return out


def col2im_numpy(cols, k, stride, ho, wo, hp, wp):
    """Adjoint of im2col: scatter-add patches back onto the padded grid."""
    b, c = cols.shape[:2]
    out = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    for u in range(k):
        for v in range(k):
            out[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] += (
                cols[:, :, u * k + v, :].reshape(b, c, ho, wo))
    return out


def msfa_pool_numpy(x, p):
    b, c, h, w = x.shape
    g = x.reshape(b, c, h // p, p, w // p, p)
    s = np.flip(np.cumsum(np.flip(g, axis=2), axis=2), axis=2)
    s = np.flip(np.cumsum(np.flip(s, axis=4), axis=4), axis=4)
    s = s.reshape(b, c, h, w)[:, :, :h // 2, :w // 2]
    return s / _pool_counts(h, w, p, x.dtype)


def msfa_pool_backward_numpy(g, p, h, w):
    b, c = g.shape[:2]
    full = np.zeros((b, c, h, w), dtype=g.dtype)
    full[:, :, :h // 2, :w // 2] = g / _pool_counts(h, w, p, g.dtype)
    full = full.reshape(b, c, h // p, p, w // p, p)
    full = np.cumsum(np.cumsum(full, axis=2), axis=4)
    return full.reshape(b, c, h, w)


def _pool_counts(h, w, p, dtype):
    # number of lattice points (i + p*s, j + p*t) that stay inside the grid
    ri = (h - 1 - np.arange(h // 2)) // p + 1
    rj = (w - 1 - np.arange(w // 2)) // p + 1
    return np.outer(ri, rj).astype(dtype)


# ---------------------------------------------------------------- numba ----

if HAS_NUMBA:

    @njit(cache=True)
    def im2col_numba(xp, k, stride, ho, wo):
        b_, c_ = xp.shape[0], xp.shape[1]
        out = np.empty((b_, c_, k * k, ho * wo), dtype=xp.dtype)
        for b in range(b_):
            for c in range(c_):
                for u in range(k):
                    for v in range(k):
                        t = u * k + v
                        for i in range(ho):
                            row = i * stride + u
                            base = i * wo
                            for j in range(wo):
                                out[b, c, t, base + j] = xp[b, c, row, j * stride + v]
        return out

    @njit(cache=True)
    def col2im_numba(cols, k, stride, ho, wo, hp, wp):
        b_, c_ = cols.shape[0], cols.shape[1]
        out = np.zeros((b_, c_, hp, wp), dtype=cols.dtype)
        for b in range(b_):
            for c in range(c_):
                for u in range(k):
                    for v in range(k):
                        t = u * k + v
                        for i in range(ho):
                            row = i * stride + u
                            base = i * wo
                            for j in range(wo):
                                out[b, c, row, j * stride + v] += cols[b, c, t, base + j]
        return out

    @njit(cache=True)
    def _msfa_pool_nb(x, p):
        # suffix sums along the lattice, rows first then columns, like the numpy path
        b_, c_, h, w = x.shape
        ho, wo = h // 2, w // 2
        s = x.copy()
        out = np.empty((b_, c_, ho, wo), dtype=x.dtype)
        for b in range(b_):
            for c in range(c_):
                for i in range(h - p - 1, -1, -1):
                    for j in range(w):
                        s[b, c, i, j] += s[b, c, i + p, j]
                for i in range(h):
                    for j in range(w - p - 1, -1, -1):
                        s[b, c, i, j] += s[b, c, i, j + p]
                for i in range(ho):
                    ni = (h - 1 - i) // p + 1
                    for j in range(wo):
                        out[b, c, i, j] = s[b, c, i, j] / (ni * ((w - 1 - j) // p + 1))
        return out

    @njit(cache=True)
    def _msfa_pool_backward_nb(g, p, h, w):
        b_, c_, ho, wo = g.shape
        out = np.zeros((b_, c_, h, w), dtype=g.dtype)
        for b in range(b_):
            for c in range(c_):
                for i in range(ho):
                    ni = (h - 1 - i) // p + 1
                    for j in range(wo):
                        out[b, c, i, j] = g[b, c, i, j] / (ni * ((w - 1 - j) // p + 1))
                for i in range(p, h):
                    for j in range(w):
                        out[b, c, i, j] += out[b, c, i - p, j]
                for i in range(h):
                    for j in range(p, w):
                        out[b, c, i, j] += out[b, c, i, j - p]
        return out

    def msfa_pool_numba(x, p):
        return _msfa_pool_nb(np.ascontiguousarray(x), p)

    def msfa_pool_backward_numba(g, p, h, w):
        return _msfa_pool_backward_nb(np.ascontiguousarray(g), p, h, w)


# ------------------------------------------------------------- dispatch ----

_IMPLS = {
    "numpy": {
        "im2col": im2col_numpy,
        "col2im": col2im_numpy,
        "msfa_pool": msfa_pool_numpy,
        "msfa_pool_backward": msfa_pool_backward_numpy,
    },
}
if HAS_NUMBA:
    _IMPLS["numba"] = {
        "im2col": lambda xp, k, s, ho, wo: im2col_numba(np.ascontiguousarray(xp), k, s, ho, wo),
        "col2im": lambda cols, k, s, ho, wo, hp, wp: col2im_numba(
            np.ascontiguousarray(cols), k, s, ho, wo, hp, wp),
        "msfa_pool": msfa_pool_numba,
        "msfa_pool_backward": msfa_pool_backward_numba,
    }

_active = "numba" if HAS_NUMBA and not _DISABLED else "numpy"


def backend():
    return _active


def available_backends():
    return tuple(_IMPLS)


@contextlib.contextmanager
def use_backend(name):
    global _active
    if name not in _IMPLS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    prev, _active = _active, name
    try:
        yield
    finally:
        _active = prev


def im2col(xp, k, stride, ho, wo):
    return _IMPLS[_active]["im2col"](xp, k, stride, ho, wo)


def col2im(cols, k, stride, ho, wo, hp, wp):
    return _IMPLS[_active]["col2im"](cols, k, stride, ho, wo, hp, wp)


def msfa_pool(x, p):
    return _IMPLS[_active]["msfa_pool"](x, p)


def msfa_pool_backward(g, p, h, w):
    return _IMPLS[_active]["msfa_pool_backward"](g, p, h, w)
