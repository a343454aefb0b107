"""Hot numeric kernels with numba acceleration and a pure-numpy fallback.

Set MPLT_NO_NUMBA=1 to force the numpy path (useful on machines where JIT
compilation is unwanted, and for benchmarking one path against the other).
Both paths compute identical float64 results.
"""

import os

import numpy as np

_WANT_NUMBA = os.environ.get("MPLT_NO_NUMBA", "0") not in ("1", "true", "yes")

if _WANT_NUMBA:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover
        HAS_NUMBA = False
else:
    HAS_NUMBA = False


# ---------------------------------------------------------------------------
# pure-numpy reference implementations
# ---------------------------------------------------------------------------

def _conv1d_fwd_np(x, w, b, pad):
    c_out, c_in, k = w.shape
    length = x.shape[1]
    xp = np.zeros((c_in, length + 2 * pad), dtype=x.dtype)
    xp[:, pad:pad + length] = x
    y = np.empty((c_out, length), dtype=x.dtype)
    for o in range(c_out):
        acc = np.full(length, b[o], dtype=x.dtype)
        for i in range(c_in):
            for t in range(k):
                acc += w[o, i, t] * xp[i, t:t + length]
        y[o] = acc
    return y


def _conv1d_bwd_np(x, w, gy, pad):
    c_out, c_in, k = w.shape
    length = x.shape[1]
    xp = np.zeros((c_in, length + 2 * pad), dtype=x.dtype)
    xp[:, pad:pad + length] = x
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    gb = gy.sum(axis=1)
    for o in range(c_out):
        for i in range(c_in):
            for t in range(k):
                gw[o, i, t] += np.dot(xp[i, t:t + length], gy[o])
                gxp[i, t:t + length] += w[o, i, t] * gy[o]
    return gxp[:, pad:pad + length], gw, gb


def _im2col_np(x, k, pad):
    c, h, w = x.shape
    xp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, pad:pad + h, pad:pad + w] = x
    cols = np.empty((c * k * k, h * w), dtype=x.dtype)
    idx = 0
    for ci in range(c):
        for dy in range(k):
            for dx in range(k):
                cols[idx] = xp[ci, dy:dy + h, dx:dx + w].reshape(-1)
                idx += 1
    return cols

def _col2im_np(cols, c, h, w, k, pad):
    gxp = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    idx = 0
    for ci in range(c):
        for dy in range(k):
            for dx in range(k):
                gxp[ci, dy:dy + h, dx:dx + w] += cols[idx].reshape(h, w)
                idx += 1
    return gxp[:, pad:pad + h, pad:pad + w]


def _bilinear_crop_np(frame, x0, y0, scale, out_size, fill):
    h, w, c = frame.shape
    out = np.empty((out_size, out_size, c), dtype=frame.dtype)
    for v in range(out_size):
        sy = y0 + (v + 0.5) * scale - 0.5
        for u in range(out_size):
            sx = x0 + (u + 0.5) * scale - 0.5
            ix = int(np.floor(sx))
            iy = int(np.floor(sy))
            fx = sx - ix
            fy = sy - iy
            for ch in range(c):
                acc = 0.0
                for (jy, jx, wt) in ((iy, ix, (1 - fy) * (1 - fx)),
                                     (iy, ix + 1, (1 - fy) * fx),
                                     (iy + 1, ix, fy * (1 - fx)),
                                     (iy + 1, ix + 1, fy * fx)):
                    if 0 <= jy < h and 0 <= jx < w:
                        acc += wt * frame[jy, jx, ch]
                    else:
                        acc += wt * fill[ch]
                out[v, u, ch] = acc
    return out


# ---------------------------------------------------------------------------
# numba-compiled variants
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _conv1d_fwd_nb(x, w, b, pad):
        c_out, c_in, k = w.shape
        length = x.shape[1]
        y = np.empty((c_out, length), dtype=x.dtype)
        for o in range(c_out):
            for p in range(length):
                acc = b[o]
                for i in range(c_in):
                    for t in range(k):
                        s = p + t - pad
                        if 0 <= s < length:
                            acc += w[o, i, t] * x[i, s]
                y[o, p] = acc
        return y

    @njit(cache=True)
    def _conv1d_bwd_nb(x, w, gy, pad):
        c_out, c_in, k = w.shape
        length = x.shape[1]
        gx = np.zeros_like(x)
        gw = np.zeros_like(w)
        gb = np.zeros(c_out, dtype=x.dtype)
        for o in range(c_out):
            for p in range(length):
                g = gy[o, p]
                gb[o] += g
                for i in range(c_in):
                    for t in range(k):
                        s = p + t - pad
                        if 0 <= s < length:
                            gw[o, i, t] += g * x[i, s]
                            gx[i, s] += g * w[o, i, t]
        return gx, gw, gb

    @njit(cache=True)
    def _im2col_nb(x, k, pad):
        c, h, w = x.shape
        cols = np.zeros((c * k * k, h * w), dtype=x.dtype)
        for ci in range(c):
            for dy in range(k):
                for dx in range(k):
                    row = (ci * k + dy) * k + dx
                    for y in range(h):
                        sy = y + dy - pad
                        if sy < 0 or sy >= h:
                            continue
                        for xx in range(w):
                            sx = xx + dx - pad
                            if 0 <= sx < w:
                                cols[row, y * w + xx] = x[ci, sy, sx]
        return cols

    @njit(cache=True)
    def _col2im_nb(cols, c, h, w, k, pad):
        gx = np.zeros((c, h, w), dtype=cols.dtype)
        for ci in range(c):
            for dy in range(k):
                for dx in range(k):
                    row = (ci * k + dy) * k + dx
                    for y in range(h):
                        sy = y + dy - pad
                        if sy < 0 or sy >= h:
                            continue
                        for xx in range(w):
                            sx = xx + dx - pad
                            if 0 <= sx < w:
                                gx[ci, sy, sx] += cols[row, y * w + xx]
        return gx

    @njit(cache=True)
    def _bilinear_crop_nb(frame, x0, y0, scale, out_size, fill):
        h, w, c = frame.shape
        out = np.empty((out_size, out_size, c), dtype=frame.dtype)
        for v in range(out_size):
            sy = y0 + (v + 0.5) * scale - 0.5
            iy = int(np.floor(sy))
            fy = sy - iy
            for u in range(out_size):
                sx = x0 + (u + 0.5) * scale - 0.5
                ix = int(np.floor(sx))
                fx = sx - ix
                for ch in range(c):
                    acc = 0.0
                    for corner in range(4):
                        jy = iy + corner // 2
                        jx = ix + corner % 2
                        wy = fy if corner // 2 == 1 else 1.0 - fy
                        wx = fx if corner % 2 == 1 else 1.0 - fx
                        if 0 <= jy < h and 0 <= jx < w:
                            acc += wy * wx * frame[jy, jx, ch]
                        else:
                            acc += wy * wx * fill[ch]
                    out[v, u, ch] = acc
        return out


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------

def conv1d_forward(x, w, b, pad):
    if HAS_NUMBA:
        return _conv1d_fwd_nb(x, w, b, pad)
    return _conv1d_fwd_np(x, w, b, pad)


def conv1d_backward(x, w, gy, pad):
    if HAS_NUMBA:
        return _conv1d_bwd_nb(x, w, gy, pad)
    return _conv1d_bwd_np(x, w, gy, pad)


def im2col(x, k, pad):
    if HAS_NUMBA:
        return _im2col_nb(x, k, pad)
    return _im2col_np(x, k, pad)


def col2im(cols, c, h, w, k, pad):
    if HAS_NUMBA:
        return _col2im_nb(cols, c, h, w, k, pad)
    return _col2im_np(cols, c, h, w, k, pad)


def bilinear_crop(frame, x0, y0, scale, out_size, fill):
    frame = np.ascontiguousarray(frame, dtype=np.float64)
    fill = np.ascontiguousarray(fill, dtype=np.float64)
    if HAS_NUMBA:
        return _bilinear_crop_nb(frame, float(x0), float(y0), float(scale),
                                 int(out_size), fill)
    return _bilinear_crop_np(frame, float(x0), float(y0), float(scale),
                             int(out_size), fill)
