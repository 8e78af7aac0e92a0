"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The numba path is the default. Set BREATHSENSE_NO_NUMBA=1 to force the
numpy implementations (same results, different speed); the flag is read
once at import time. ``benchmarks/bench_kernels.py`` compares both paths.

All kernels are dtype-agnostic (float32 for production, float64 for
gradient verification).
"""

import os

import numpy as np

_FLAG = os.environ.get("BREATHSENSE_NO_NUMBA", "")
NUMBA_DISABLED = _FLAG not in ("", "0")

try:
    if NUMBA_DISABLED:
        raise ImportError("numba disabled by BREATHSENSE_NO_NUMBA")
    os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy implementations

def _np_conv2d_forward(x, w):
    """3x3 cross-correlation, stride 1, zero padding 1. x:(N,C,H,W) w:(O,C,3,3)."""
    n, c, h, wd = x.shape
    xp = np.zeros((n, c, h + 2, wd + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    return np.einsum("nchwuv,ocuv->nohw", win, w, optimize=True)


def _np_conv2d_backward_weights(x, dy):
    n, c, h, wd = x.shape
    xp = np.zeros((n, c, h + 2, wd + 2), dtype=x.dtype)
    xp[:, :, 1:-1, 1:-1] = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    return np.einsum("nchwuv,nohw->ocuv", win, dy, optimize=True)


def _np_maxpool2d_forward(x):
    n, c, h, wd = x.shape
    ho, wo = h // 2, wd // 2
    xc = x[:, :, : ho * 2, : wo * 2]
    blocks = xc.reshape(n, c, ho, 2, wo, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, ho, wo, 4)
    arg = flat.argmax(axis=4).astype(np.uint8)
    out = np.take_along_axis(flat, arg[..., None].astype(np.intp), axis=4)[..., 0]
    return out, arg


def _np_maxpool2d_backward(dy, arg, h, w):
    n, c, ho, wo = dy.shape
    dxf = np.zeros((n, c, ho, wo, 4), dtype=dy.dtype)
    np.put_along_axis(dxf, arg[..., None].astype(np.intp), dy[..., None], axis=4)
    dx = np.zeros((n, c, h, w), dtype=dy.dtype)
    blocks = dxf.reshape(n, c, ho, wo, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dx[:, :, : ho * 2, : wo * 2] = blocks.reshape(n, c, ho * 2, wo * 2)
    return dx


def _np_polyphase_resample(x, filters, up, down, center):
    """Windowed-sinc polyphase resample. filters:(up, taps)."""
    taps = filters.shape[1]
    n = x.shape[0]
    n_out = int(round(n * up / down))
    pos = np.arange(n_out, dtype=np.int64) * down + center
    phase = pos % up
    m0 = pos // up
    idx = m0[:, None] - np.arange(taps, dtype=np.int64)[None, :]
    valid = (idx >= 0) & (idx < n)
    gathered = np.where(valid, x[np.clip(idx, 0, n - 1)], 0.0)
    return np.einsum("kt,kt->k", gathered, filters[phase]).astype(x.dtype)


# ---------------------------------------------------------------------------
# numba implementations

if HAVE_NUMBA:

    @njit(cache=True, parallel=True)
    def _nb_conv2d_forward(x, w):
        n, ci, h, wd = x.shape
        co = w.shape[0]
        out = np.zeros((n, co, h, wd), dtype=x.dtype)
        for b in prange(n):
            for o in range(co):
                for i in range(h):
                    for j in range(wd):
                        acc = 0.0
                        for c in range(ci):
                            for u in range(3):
                                ii = i + u - 1
                                if ii < 0 or ii >= h:
                                    continue
                                for v in range(3):
                                    jj = j + v - 1
                                    if 0 <= jj < wd:
                                        acc += x[b, c, ii, jj] * w[o, c, u, v]
                        out[b, o, i, j] = acc
        return out

    @njit(cache=True, parallel=True)
    def _nb_conv2d_backward_weights(x, dy):
        n, ci, h, wd = x.shape
        co = dy.shape[1]
        dw = np.zeros((co, ci, 3, 3), dtype=x.dtype)
        for o in prange(co):
            for c in range(ci):
                for u in range(3):
                    for v in range(3):
                        acc = 0.0
                        for b in range(n):
                            for i in range(h):
                                ii = i + u - 1
                                if ii < 0 or ii >= h:
                                    continue
                                for j in range(wd):
                                    jj = j + v - 1
                                    if 0 <= jj < wd:
                                        acc += x[b, c, ii, jj] * dy[b, o, i, j]
                        dw[o, c, u, v] = acc
        return dw

    @njit(cache=True, parallel=True)
    def _nb_maxpool2d_forward(x):
        n, c, h, wd = x.shape
        ho, wo = h // 2, wd // 2
        out = np.empty((n, c, ho, wo), dtype=x.dtype)
        arg = np.empty((n, c, ho, wo), dtype=np.uint8)
        for b in prange(n):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        best = x[b, ch, 2 * i, 2 * j]
                        code = np.uint8(0)
                        for u in range(2):
                            for v in range(2):
                                val = x[b, ch, 2 * i + u, 2 * j + v]
                                if val > best:
                                    best = val
                                    code = np.uint8(2 * u + v)
                        out[b, ch, i, j] = best
                        arg[b, ch, i, j] = code
        return out, arg

    @njit(cache=True, parallel=True)
    def _nb_maxpool2d_backward(dy, arg, h, w):
        n, c, ho, wo = dy.shape
        dx = np.zeros((n, c, h, w), dtype=dy.dtype)
        for b in prange(n):
            for ch in range(c):
                for i in range(ho):
                    for j in range(wo):
                        code = arg[b, ch, i, j]
                        u = code // 2
                        v = code % 2
                        dx[b, ch, 2 * i + u, 2 * j + v] = dy[b, ch, i, j]
        return dx

    @njit(cache=True)
    def _nb_polyphase_resample(x, filters, up, down, center):
        taps = filters.shape[1]
        n = x.shape[0]
        n_out = int(round(n * up / down))
        y = np.zeros(n_out, dtype=x.dtype)
        for k in range(n_out):
            pos = k * down + center
            p = pos % up
            m0 = pos // up
            acc = 0.0
            for t in range(taps):
                m = m0 - t
                if 0 <= m < n:
                    acc += filters[p, t] * x[m]
            y[k] = acc
        return y

    conv2d_forward = _nb_conv2d_forward
    conv2d_backward_weights = _nb_conv2d_backward_weights
    maxpool2d_forward = _nb_maxpool2d_forward
    maxpool2d_backward = _nb_maxpool2d_backward
    polyphase_resample = _nb_polyphase_resample
else:
    conv2d_forward = _np_conv2d_forward
    conv2d_backward_weights = _np_conv2d_backward_weights
    maxpool2d_forward = _np_maxpool2d_forward
    maxpool2d_backward = _np_maxpool2d_backward
    polyphase_resample = _np_polyphase_resample


def conv2d_backward_input(dy, w):
    """dL/dx of the 3x3 same-padding correlation: correlate dy with rotated kernels."""
    w_rot = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv2d_forward(dy, w_rot)
