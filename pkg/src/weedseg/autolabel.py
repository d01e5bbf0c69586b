"""Automatic ground-truth masks from NDVI for single-species plots.

Pipeline: Gaussian blur, unsharp sharpening, Otsu threshold, then removal of
connected blobs below a minimum pixel count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _backend
from .errors import DegenerateImageError, InvariantError, ShapeMismatchError
from .imgcore import BG, CROP, WEED, BandImage, LabelMask


@dataclass(frozen=True)
class AutolabelConfig:
    blur_sigma: float = 1.2
    sharpen_amount: float = 1.0
    min_blob_pixels: int = 300
    vegetation_class: int = CROP
    connectivity: int = 4
    num_bins: int = 256

    def __post_init__(self):
        if not self.blur_sigma > 0:
            raise InvariantError(f"blur_sigma must be > 0, got {self.blur_sigma}")
        if self.min_blob_pixels < 1:
            raise InvariantError(f"min_blob_pixels must be >= 1, got {self.min_blob_pixels}")
        if self.vegetation_class not in (CROP, WEED):
            raise InvariantError(f"vegetation_class must be 1 or 2, got {self.vegetation_class}")
        if self.connectivity not in (4, 8):
            raise InvariantError(f"connectivity must be 4 or 8, got {self.connectivity}")


def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = math.ceil(3 * sigma)
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _convolve_axis(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = len(kernel) // 2
    pad = [(0, 0)] * a.ndim
    pad[axis] = (r, r)
    # 'symmetric' repeats the edge sample, so every input sample keeps total weight 1
    ap = np.pad(a, pad, mode="symmetric")
    n = a.shape[axis]
    out = np.zeros_like(a)
    for i, w in enumerate(kernel):
        out += w * np.take(ap, np.arange(i, i + n), axis=axis)
    return out


def gaussian_filter(arr: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian on a raw 2-D array (radius ceil(3 sigma), mirrored edges)."""
    if not sigma > 0:
        raise InvariantError(f"sigma must be > 0, got {sigma}")
    k = gaussian_kernel(sigma)
    if len(k) // 2 >= min(arr.shape):
        raise InvariantError(f"blur radius {len(k) // 2} too large for image {arr.shape}")
    return _convolve_axis(_convolve_axis(np.asarray(arr, dtype=np.float64), k, 0), k, 1)


def gaussian_blur(img: BandImage, sigma: float) -> BandImage:
    return img.with_data(gaussian_filter(img.data, sigma))


def unsharp_sharpen(img: BandImage, blurred: BandImage, amount: float) -> BandImage:
    """``clamp(img + amount * (img - blurred), -1, 1)``."""
    if img.shape != blurred.shape:
        raise ShapeMismatchError(f"image {img.shape} vs blurred {blurred.shape}")
    out = img.data + amount * (img.data - blurred.data)
    return img.with_data(np.clip(out, -1.0, 1.0))


def histogram_bins(data: np.ndarray, num_bins: int = 256) -> tuple[np.ndarray, float, float]:
    """Bin index per sample over the data's own ``[min, max]``.

    Returns ``(indices, lo, bin_width)``.  The maximum lands in the last bin.
    """
    lo = float(data.min())
    hi = float(data.max())
    if hi <= lo:
        raise DegenerateImageError("degenerate histogram: image is constant")
    width = (hi - lo) / num_bins
    idx = np.floor((data - lo) / width).astype(np.int64)
    return np.clip(idx, 0, num_bins - 1), lo, width


def otsu_bin(hist: np.ndarray) -> int:
    """Split index ``k`` maximizing between-class variance of a histogram.

    Class 0 holds bins ``[0, k)``, class 1 holds ``[k, len)``.  Scores are
    compared exactly in integer arithmetic; ties resolve to the lowest ``k``.
    Using bin indices instead of bin centres leaves the argmax unchanged
    (affine map).
    """
    counts = [int(c) for c in hist]
    total_n = sum(counts)
    total_s = sum(i * c for i, c in enumerate(counts))
    best_k, best = None, None
    n0 = s0 = 0
    for k in range(1, len(counts)):
        n0 += counts[k - 1]
        s0 += (k - 1) * counts[k - 1]
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_s - s0
        # N^2 * sigma_b^2 = (s0*n1 - s1*n0)^2 / (n0*n1)
        score = Fraction((s0 * n1 - s1 * n0) ** 2, n0 * n1)
        if best is None or score > best:
            best_k, best = k, score
    if best_k is None:
        raise DegenerateImageError("degenerate histogram: a single occupied bin")
    return best_k


def otsu_threshold(img: BandImage, num_bins: int = 256) -> float:
    """Otsu threshold as a bin edge value; foreground is ``value >= threshold``."""
    idx, lo, width = histogram_bins(img.data, num_bins)
    hist = np.bincount(idx.ravel(), minlength=num_bins)
    k = otsu_bin(hist)
    return lo + k * width


def otsu_foreground(img: BandImage, num_bins: int = 256) -> np.ndarray:
    """Boolean above-threshold mask, decided on bin indices (no float edge ambiguity)."""
    idx, _, _ = histogram_bins(img.data, num_bins)
    k = otsu_bin(np.bincount(idx.ravel(), minlength=num_bins))
    return idx >= k


def label_components(mask: np.ndarray, connectivity: int = 4) -> tuple[np.ndarray, int]:
    if connectivity not in (4, 8):
        raise InvariantError(f"connectivity must be 4 or 8, got {connectivity}")
    return _backend.kernels.label_components(np.asarray(mask, dtype=bool).view(np.uint8), connectivity)


def connected_components(mask: np.ndarray, connectivity: int = 4) -> list[np.ndarray]:
    """Maximal connected foreground pixel sets.

    Each component is an ``(n, 2)`` array of ``(row, col)`` in raster
    order; components are ordered by their first pixel.
    """
    labels, count = label_components(mask, connectivity)
    flat = labels.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_labels = flat[order]
    bounds = np.searchsorted(sorted_labels, np.arange(1, count + 2))
    w = labels.shape[1]
    comps = []
    for i in range(count):
        pix = order[bounds[i] : bounds[i + 1]]
        comps.append(np.stack([pix // w, pix % w], axis=1))
    return comps


def remove_small_blobs(mask: np.ndarray, min_pixels: int, connectivity: int = 4) -> np.ndarray:
    labels, count = label_components(mask, connectivity)
    sizes = np.bincount(labels.ravel(), minlength=count + 1)
    keep = sizes >= min_pixels
    keep[0] = False
    return keep[labels]


def generate_mask(ndvi: BandImage, cfg: AutolabelConfig = AutolabelConfig()) -> LabelMask:
    """Label the vegetation of a single-species plot from its NDVI."""
    if ndvi.data.min() < -1.0 - 1e-9 or ndvi.data.max() > 1.0 + 1e-9:
        raise InvariantError("NDVI samples outside [-1, 1]")
    blurred = gaussian_blur(ndvi, cfg.blur_sigma)
    sharpened = unsharp_sharpen(blurred, gaussian_blur(blurred, cfg.blur_sigma), cfg.sharpen_amount)
    fg = otsu_foreground(sharpened, cfg.num_bins)
    fg = remove_small_blobs(fg, cfg.min_blob_pixels, cfg.connectivity)
    labels = np.where(fg, cfg.vegetation_class, BG).astype(np.uint8)
    return LabelMask(labels)
