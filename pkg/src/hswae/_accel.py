"""Hot convolution kernels: numba-compiled loops with a pure-numpy fallback.

The backend is chosen once at import from the ``HSWAE_NUMBA`` environment
variable (``0`` disables numba) and can be switched at runtime with
:func:`set_backend`. Both backends produce identical ``im2col`` output; the
``col2im`` scatter-add may differ in the last bit because the summation
order differs.
"""
from __future__ import annotations

import os
import warnings

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def decorator(func):
            return func

        return decorator


def conv_out_size(size: int, kernel: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - kernel) // stride + 1


# ---------------------------------------------------------------------------
# numpy path
# ---------------------------------------------------------------------------


def _im2col_numpy(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, : (oh - 1) * stride + 1 : stride, : (ow - 1) * stride + 1 : stride]
    # (n, c, oh, ow, kh, kw) -> (n, oh, ow, c, kh, kw)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * kh * kw)


def _col2im_numpy(cols, n, c, h, w, kh, kw, stride, pad):
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    cols = cols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


# ---------------------------------------------------------------------------
# numba path
# ---------------------------------------------------------------------------


@njit(cache=True)
def _patch_offsets(c, hp, wp, kh, kw):
    # flat offset of every (channel, ki, kj) patch element relative to the window's corner
    off = np.empty(c * kh * kw, np.int64)
    q = 0
    for ch in range(c):
        for i in range(kh):
            for j in range(kw):
                off[q] = (ch * hp + i) * wp + j
                q += 1
    return off


@njit(cache=True)
def _im2col_kernel(xp, kh, kw, stride, oh, ow, cols):
    # xp is already zero-padded, so every window read is in bounds
    n, c, hp, wp = xp.shape
    xf = xp.reshape(-1)
    off = _patch_offsets(c, hp, wp, kh, kw)
    k = off.size
    for b in range(n):
        for oi in range(oh):
            for oj in range(ow):
                row = (b * oh + oi) * ow + oj
                base = (b * c * hp + oi * stride) * wp + oj * stride
                for q in range(k):
                    cols[row, q] = xf[base + off[q]]


@njit(cache=True)
def _col2im_kernel(cols, kh, kw, stride, oh, ow, outp):
    n, c, hp, wp = outp.shape
    of = outp.reshape(-1)
    off = _patch_offsets(c, hp, wp, kh, kw)
    k = off.size
    for b in range(n):
        for oi in range(oh):
            for oj in range(ow):
                row = (b * oh + oi) * ow + oj
                base = (b * c * hp + oi * stride) * wp + oj * stride
                for q in range(k):
                    of[base + off[q]] += cols[row, q]


def _im2col_numba(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    xp = np.ascontiguousarray(np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x)
    cols = np.empty((n * oh * ow, c * kh * kw), dtype=x.dtype)
    _im2col_kernel(xp, kh, kw, stride, oh, ow, cols)
    return cols


def _col2im_numba(cols, n, c, h, w, kh, kw, stride, pad):
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    # rows past the last window stay zero; cover the full padded extent touched by windows
    hp = max(h + 2 * pad, (oh - 1) * stride + kh)
    wp = max(w + 2 * pad, (ow - 1) * stride + kw)
    outp = np.zeros((n, c, hp, wp), dtype=cols.dtype)
    _col2im_kernel(np.ascontiguousarray(cols), kh, kw, stride, oh, ow, outp)
    return np.ascontiguousarray(outp[:, :, pad : pad + h, pad : pad + w])


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_IMPLS = {
    "numpy": (_im2col_numpy, _col2im_numpy),
    "numba": (_im2col_numba, _col2im_numba),
}

_backend = "numpy"


def set_backend(name: str) -> None:
    """Select ``"numba"`` or ``"numpy"`` kernels for subsequent calls."""
    global _backend
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; expected one of {sorted(_IMPLS)}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    _backend = name


def get_backend() -> str:
    return _backend


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Unfold ``x`` (N, C, H, W) into patch rows of shape (N*OH*OW, C*kh*kw)."""
    return _IMPLS[_backend][0](x, kh, kw, stride, pad)


def col2im(cols: np.ndarray, shape: tuple, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add patch rows back into an (N, C, H, W) array; adjoint of :func:`im2col`."""
    n, c, h, w = shape
    return _IMPLS[_backend][1](cols, n, c, h, w, kh, kw, stride, pad)


def _initial_backend() -> str:
    flag = os.environ.get("HSWAE_NUMBA", "1").strip().lower()
    if flag in ("0", "false", "no", "off"):
        return "numpy"
    if not HAVE_NUMBA:
        warnings.warn("numba not importable; using numpy convolution kernels")
        return "numpy"
    return "numba"


set_backend(_initial_backend())
