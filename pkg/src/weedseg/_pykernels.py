"""Pure-Python/numpy reference kernels.

Same signatures and bit-identical results as the compiled ``_ckernels``
module; used whenever the extension is not built.
"""

from collections import deque

import numpy as np

NAME = "python"


def label_components(mask, connectivity=4):
    """Label foreground pixels of a binary raster.

    Labels start at 1 and are numbered in raster order of each component's
    first pixel.  Returns ``(labels, count)`` with ``labels`` int32.
    """
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    if connectivity == 4:
        nbrs = ((-1, 0), (1, 0), (0, -1), (0, 1))
    elif connectivity == 8:
        nbrs = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    h, w = mask.shape
    fg = mask.tolist()
    labels = [[0] * w for _ in range(h)]
    count = 0
    for r in range(h):
        row = fg[r]
        for c in range(w):
            if not row[c] or labels[r][c]:
                continue
            count += 1
            labels[r][c] = count
            queue = deque([(r, c)])
            while queue:
                y, x = queue.popleft()
                for dy, dx in nbrs:
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and fg[yy][xx] and not labels[yy][xx]:
                        labels[yy][xx] = count
                        queue.append((yy, xx))
    return np.array(labels, dtype=np.int32).reshape(h, w), count


def im2col(x, k, pad):
    """Unfold ``(N, C, H, W)`` into ``(N, C*k*k, Ho*Wo)`` patches (stride 1)."""
    n, c, h, w = x.shape
    ho, wo = h + 2 * pad - k + 1, w + 2 * pad - k + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((n, c, k, k, ho, wo), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j] = xp[:, :, i : i + ho, j : j + wo]
    return cols.reshape(n, c * k * k, ho * wo)


def col2im(cols, x_shape, k, pad):
    """Adjoint of :func:`im2col`; overlapping patches are summed."""
    n, c, h, w = x_shape
    ho, wo = h + 2 * pad - k + 1, w + 2 * pad - k + 1
    cols = cols.reshape(n, c, k, k, ho, wo)
    out = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + ho, j : j + wo] += cols[:, :, i, j]
    if pad:
        out = out[:, :, pad:-pad, pad:-pad]
    return np.ascontiguousarray(out)


def maxpool2x2(x):
    """2x2 max pooling; ties go to the first cell in row-major window order.

    Returns ``(pooled, idx)`` where ``idx`` (uint8, 0..3) is the argmax
    position inside each window.
    """
    n, c, h, w = x.shape
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1)
    pooled = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(pooled), idx.astype(np.uint8)


def unpool2x2(y, idx):
    """Place each pooled value at its recorded window position; zeros elsewhere."""
    n, c, hp, wp = y.shape
    win = np.zeros((n, c, hp, wp, 4), dtype=y.dtype)
    np.put_along_axis(win, idx[..., None].astype(np.intp), y[..., None], axis=-1)
    out = win.reshape(n, c, hp, wp, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * hp, 2 * wp)
    return np.ascontiguousarray(out)


def unpool2x2_backward(grad, idx):
    """Gather the gradient at each window's recorded position."""
    n, c, h, w = grad.shape
    win = grad.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out)


def bilinear_sample(img, xs, ys, eps=1e-6):
    """Sample ``img`` at float coordinates; out-of-bounds samples are 0.

    Returns ``(values, valid)``.  A coordinate is valid when it lies within
    ``[0, W-1] x [0, H-1]`` up to ``eps``.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    h, w = img.shape
    valid = (xs >= -eps) & (xs <= w - 1 + eps) & (ys >= -eps) & (ys <= h - 1 + eps)
    xc = np.clip(xs, 0.0, w - 1.0)
    yc = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    fx = xc - x0
    fy = yc - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = (1.0 - fx) * img[y0, x0] + fx * img[y0, x1]
    bot = (1.0 - fx) * img[y1, x0] + fx * img[y1, x1]
    vals = (1.0 - fy) * top + fy * bot
    return np.where(valid, vals, 0.0), valid
