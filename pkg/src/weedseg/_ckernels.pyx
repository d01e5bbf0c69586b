# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels.  Mirrors ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport floor

cnp.import_array()

NAME = "cython"


def label_components(mask, int connectivity=4):
    cdef const cnp.uint8_t[:, ::1] m = np.ascontiguousarray(mask, dtype=np.uint8)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] labels = labels_arr
    cdef cnp.int32_t[::1] queue = np.empty(max(h * w, 1), dtype=np.int32)
    cdef int dys[8]
    cdef int dxs[8]
    cdef int nn, t
    if connectivity == 4:
        nn = 4
        dys[:4] = [-1, 1, 0, 0]
        dxs[:4] = [0, 0, -1, 1]
    elif connectivity == 8:
        nn = 8
        dys[:8] = [-1, -1, -1, 0, 0, 1, 1, 1]
        dxs[:8] = [-1, 0, 1, -1, 1, -1, 0, 1]
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    cdef Py_ssize_t r, c, y, x, yy, xx, head, tail
    cdef int count = 0
    cdef int p
    for r in range(h):
        for c in range(w):
            if m[r, c] == 0 or labels[r, c] != 0:
                continue
            count += 1
            labels[r, c] = count
            head = 0
            tail = 0
            queue[tail] = <int>(r * w + c)
            tail += 1
            while head < tail:
                p = queue[head]
                head += 1
                y = p // w
                x = p - y * w
                for t in range(nn):
                    yy = y + dys[t]
                    xx = x + dxs[t]
                    if 0 <= yy < h and 0 <= xx < w and m[yy, xx] != 0 and labels[yy, xx] == 0:
                        labels[yy, xx] = count
                        queue[tail] = <int>(yy * w + xx)
                        tail += 1
    return labels_arr, count


def _im2col(const floating[:, :, :, ::1] x, floating[:, :, ::1] cols, int k, int pad):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t ho = h + 2 * pad - k + 1, wo = w + 2 * pad - k + 1
    cdef Py_ssize_t b, ch, i, j, y, xx, sy, sx, row
    for b in range(n):
        for ch in range(c):
            for i in range(k):
                for j in range(k):
                    row = (ch * k + i) * k + j
                    for y in range(ho):
                        sy = y + i - pad
                        for xx in range(wo):
                            sx = xx + j - pad
                            if 0 <= sy < h and 0 <= sx < w:
                                cols[b, row, y * wo + xx] = x[b, ch, sy, sx]
                            else:
                                cols[b, row, y * wo + xx] = 0


def im2col(x, int k, int pad):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    ho, wo = h + 2 * pad - k + 1, w + 2 * pad - k + 1
    cols = np.empty((n, c * k * k, ho * wo), dtype=x.dtype)
    _im2col(x, cols, k, pad)
    return cols


def _col2im(const floating[:, :, ::1] cols, floating[:, :, :, ::1] out, int k, int pad):
    # accumulate in (i, j) order so sums match the numpy fallback bit for bit
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], hp = out.shape[2], wp = out.shape[3]
    cdef Py_ssize_t ho = hp - k + 1, wo = wp - k + 1
    cdef Py_ssize_t b, ch, i, j, y, xx, row
    for b in range(n):
        for ch in range(c):
            for i in range(k):
                for j in range(k):
                    row = (ch * k + i) * k + j
                    for y in range(ho):
                        for xx in range(wo):
                            out[b, ch, y + i, xx + j] += cols[b, row, y * wo + xx]


def col2im(cols, x_shape, int k, int pad):
    n, c, h, w = x_shape
    cols = np.ascontiguousarray(cols).reshape(n, c * k * k, -1)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    _col2im(cols, out, k, pad)
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


def _maxpool(const floating[:, :, :, ::1] x, floating[:, :, :, ::1] y, cnp.uint8_t[:, :, :, ::1] idx):
    cdef Py_ssize_t n = y.shape[0], c = y.shape[1], hp = y.shape[2], wp = y.shape[3]
    cdef Py_ssize_t b, ch, i, j
    cdef floating best, v
    cdef cnp.uint8_t arg
    for b in range(n):
        for ch in range(c):
            for i in range(hp):
                for j in range(wp):
                    best = x[b, ch, 2 * i, 2 * j]
                    arg = 0
                    v = x[b, ch, 2 * i, 2 * j + 1]
                    if v > best:
                        best = v
                        arg = 1
                    v = x[b, ch, 2 * i + 1, 2 * j]
                    if v > best:
                        best = v
                        arg = 2
                    v = x[b, ch, 2 * i + 1, 2 * j + 1]
                    if v > best:
                        best = v
                        arg = 3
                    y[b, ch, i, j] = best
                    idx[b, ch, i, j] = arg


def maxpool2x2(x):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    y = np.empty((n, c, h // 2, w // 2), dtype=x.dtype)
    idx = np.empty((n, c, h // 2, w // 2), dtype=np.uint8)
    _maxpool(x, y, idx)
    return y, idx


def _unpool(const floating[:, :, :, ::1] y, const cnp.uint8_t[:, :, :, ::1] idx, floating[:, :, :, ::1] out):
    cdef Py_ssize_t n = y.shape[0], c = y.shape[1], hp = y.shape[2], wp = y.shape[3]
    cdef Py_ssize_t b, ch, i, j
    cdef int a
    for b in range(n):
        for ch in range(c):
            for i in range(hp):
                for j in range(wp):
                    a = idx[b, ch, i, j]
                    out[b, ch, 2 * i + (a >> 1), 2 * j + (a & 1)] = y[b, ch, i, j]


def unpool2x2(y, idx):
    y = np.ascontiguousarray(y)
    n, c, hp, wp = y.shape
    out = np.zeros((n, c, 2 * hp, 2 * wp), dtype=y.dtype)
    _unpool(y, np.ascontiguousarray(idx, dtype=np.uint8), out)
    return out


def _unpool_back(const floating[:, :, :, ::1] g, const cnp.uint8_t[:, :, :, ::1] idx, floating[:, :, :, ::1] out):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], hp = out.shape[2], wp = out.shape[3]
    cdef Py_ssize_t b, ch, i, j
    cdef int a
    for b in range(n):
        for ch in range(c):
            for i in range(hp):
                for j in range(wp):
                    a = idx[b, ch, i, j]
                    out[b, ch, i, j] = g[b, ch, 2 * i + (a >> 1), 2 * j + (a & 1)]


def unpool2x2_backward(grad, idx):
    grad = np.ascontiguousarray(grad)
    n, c, h, w = grad.shape
    out = np.empty((n, c, h // 2, w // 2), dtype=grad.dtype)
    _unpool_back(grad, np.ascontiguousarray(idx, dtype=np.uint8), out)
    return out


def bilinear_sample(img, xs, ys, double eps=1e-6):
    cdef const double[:, ::1] im = np.ascontiguousarray(img, dtype=np.float64)
    xs_arr = np.asarray(xs, dtype=np.float64)
    shape = xs_arr.shape
    cdef const double[::1] xv = np.ascontiguousarray(xs_arr).ravel()
    cdef const double[::1] yv = np.ascontiguousarray(np.asarray(ys, dtype=np.float64)).ravel()
    cdef Py_ssize_t h = im.shape[0], w = im.shape[1], m = xv.shape[0], t
    vals_arr = np.zeros(m, dtype=np.float64)
    valid_arr = np.zeros(m, dtype=np.bool_)
    cdef double[::1] vals = vals_arr
    cdef cnp.npy_bool[::1] valid = valid_arr
    cdef double x, y, fx, fy, top, bot
    cdef Py_ssize_t x0, y0, x1, y1
    for t in range(m):
        x = xv[t]
        y = yv[t]
        if not (x >= -eps and x <= w - 1 + eps and y >= -eps and y <= h - 1 + eps):
            continue
        valid[t] = 1
        if x < 0.0:
            x = 0.0
        elif x > w - 1.0:
            x = w - 1.0
        if y < 0.0:
            y = 0.0
        elif y > h - 1.0:
            y = h - 1.0
        x0 = <Py_ssize_t>floor(x)
        y0 = <Py_ssize_t>floor(y)
        fx = x - x0
        fy = y - y0
        x1 = x0 + 1 if x0 + 1 < w else w - 1
        y1 = y0 + 1 if y0 + 1 < h else h - 1
        top = (1.0 - fx) * im[y0, x0] + fx * im[y0, x1]
        bot = (1.0 - fx) * im[y1, x0] + fx * im[y1, x1]
        vals[t] = (1.0 - fy) * top + fy * bot
    return vals_arr.reshape(shape), valid_arr.reshape(shape)
