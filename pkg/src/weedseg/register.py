"""Band-to-band registration: undistortion, correlation-based rigid
estimation, warping and common-region cropping.

Coordinates are ``(x, y) = (column, row)``.  A :class:`Transform2D` maps a
reference-frame point ``p`` to the moving image as
``R(theta) (p - c) + c + t`` with ``c`` the image centre, i.e. the moving
image is the reference rotated by ``theta`` about its centre and then shifted
by ``t``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _backend
from .autolabel import gaussian_filter
from .errors import (
    DegenerateImageError,
    EmptyIntersectionError,
    InvariantError,
    NoSimilarityError,
    SchemaError,
    ShapeMismatchError,
)
from .imgcore import BandImage, MultispectralFrame

DEFAULT_SEARCH_RADIUS = 16
DEFAULT_MIN_CONFIDENCE = 0.2
SMALL_IMAGE_SIDE = 64


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvariantError("focal lengths must be positive")

    @classmethod
    def centered(cls, width: int, height: int, focal: float | None = None, k1: float = 0.0, k2: float = 0.0):
        f = float(focal if focal is not None else max(width, height))
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0, k1, k2)


@dataclass(frozen=True)
class Transform2D:
    tx: float = 0.0
    ty: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        for name in ("tx", "ty", "theta"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (-math.pi < self.theta <= math.pi):
            raise InvariantError(f"theta must lie in (-pi, pi], got {self.theta}")

    @property
    def is_identity(self) -> bool:
        return self.tx == 0 and self.ty == 0 and self.theta == 0

    @property
    def degrees(self) -> float:
        return math.degrees(self.theta)


def _center(shape) -> tuple[float, float]:
    h, w = shape
    return (w - 1) / 2.0, (h - 1) / 2.0


def map_points(t: Transform2D, xs, ys, shape):
    """Reference-frame points -> moving-image points."""
    cx, cy = _center(shape)
    c, s = math.cos(t.theta), math.sin(t.theta)
    dx, dy = xs - cx, ys - cy
    return c * dx - s * dy + cx + t.tx, s * dx + c * dy + cy + t.ty


def _grid(shape):
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return xs, ys


def warp_to_reference(data: np.ndarray, t: Transform2D) -> tuple[np.ndarray, np.ndarray]:
    """Resample a moving image into reference coordinates (bilinear, zero fill).

    Returns ``(warped, valid)``.
    """
    if t.is_identity:
        return np.array(data, dtype=np.float64), np.ones(data.shape, dtype=bool)
    xs, ys = _grid(data.shape)
    mx, my = map_points(t, xs, ys, data.shape)
    return _backend.kernels.bilinear_sample(data, mx, my)


def apply_transform(data: np.ndarray, t: Transform2D) -> np.ndarray:
    """Produce the moving image from a reference image (inverse of warp_to_reference)."""
    if t.is_identity:
        return np.array(data, dtype=np.float64)
    cx, cy = _center(data.shape)
    c, s = math.cos(t.theta), math.sin(t.theta)
    xs, ys = _grid(data.shape)
    dx, dy = xs - cx - t.tx, ys - cy - t.ty
    rx, ry = c * dx + s * dy + cx, -s * dx + c * dy + cy
    return _backend.kernels.bilinear_sample(data, rx, ry)[0]


def undistort(img: BandImage, k: CameraIntrinsics) -> BandImage:
    """Remove radial lens distortion.

    Each output (undistorted) pixel is looked up in the input at
    ``x_d = x_u (1 + k1 r^2 + k2 r^4)`` in normalized coordinates.
    """
    if k.k1 == 0 and k.k2 == 0:
        return BandImage(img.data.copy(), img.band)
    xs, ys = _grid(img.shape)
    xn = (xs - k.cx) / k.fx
    yn = (ys - k.cy) / k.fy
    r2 = xn * xn + yn * yn
    scale = 1.0 + k.k1 * r2 + k.k2 * r2 * r2
    xd = xn * scale * k.fx + k.cx
    yd = yn * scale * k.fy + k.cy
    vals, _ = _backend.kernels.bilinear_sample(img.data, xd, yd)
    # the principal point itself is a fixed point of the model
    return BandImage(vals, img.band)


def gradient_magnitude(data: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """Edge-strength image; correlates across bands whose contrast is inverted."""
    sm = gaussian_filter(data, sigma)
    gy, gx = np.gradient(sm)
    return np.hypot(gx, gy)


def _ncc(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
    if den == 0.0:
        return -1.0
    return float((a * b).sum()) / den


def ncc_at(ref: np.ndarray, mov: np.ndarray, dx: int, dy: int, mov_valid=None, min_overlap: float = 0.25) -> float:
    """Zero-normalized cross-correlation of ``ref(p)`` against ``mov(p + (dx, dy))``
    over their overlap."""
    h, w = ref.shape
    x0, x1 = max(0, -dx), min(w, w - dx)
    y0, y1 = max(0, -dy), min(h, h - dy)
    return _window_ncc(ref, mov, dx, dy, (y0, y1, x0, x1), mov_valid, min_overlap)


def _window_ncc(ref, mov, dx, dy, win, mov_valid=None, min_overlap=0.25):
    y0, y1, x0, x1 = win
    h, w = ref.shape
    if x1 - x0 <= 1 or y1 - y0 <= 1 or (x1 - x0) * (y1 - y0) < min_overlap * h * w:
        return -1.0
    a = ref[y0:y1, x0:x1]
    b = mov[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
    if mov_valid is not None:
        m = mov_valid[y0 + dy : y1 + dy, x0 + dx : x1 + dx]
        if m.sum() < min_overlap * h * w:
            return -1.0
        a, b = a[m], b[m]
    return _ncc(a, b)


# Border pixels skipped when scoring a 3x3 neighbourhood; keeps zero-filled
# strips at the moving image's edge out of every neighbour's window.
_NEIGHBOUR_MARGIN = 2


def _neighbourhood(ref, mov, dx, dy, mov_valid=None) -> np.ndarray:
    """NCC at offsets ``(dx+i, dy+j)``, ``i, j in {-1, 0, 1}``, all over one
    shared reference window.  Indexed ``[j + 1, i + 1]``."""
    h, w = ref.shape
    m = _NEIGHBOUR_MARGIN
    win = (max(0, -dy) + m, min(h, h - dy) - m, max(0, -dx) + m, min(w, w - dx) - m)
    out = np.full((3, 3), -1.0)
    for j in (-1, 0, 1):
        for i in (-1, 0, 1):
            out[j + 1, i + 1] = _window_ncc(ref, mov, dx + i, dy + j, win, mov_valid)
    return out


def _phase_peak(ref: np.ndarray, mov: np.ndarray, radius: int) -> tuple[int, int]:
    f = np.fft.rfft2(ref - ref.mean())
    g = np.fft.rfft2(mov - mov.mean())
    cross = g * np.conj(f)
    cross /= np.maximum(np.abs(cross), 1e-15)
    corr = np.fft.irfft2(cross, s=ref.shape)
    h, w = ref.shape
    # restrict the peak search to the configured radius (wrapped offsets)
    ry = np.r_[0 : min(radius, h - 1) + 1, max(h - radius, 1) : h]
    rx = np.r_[0 : min(radius, w - 1) + 1, max(w - radius, 1) : w]
    sub = corr[np.ix_(ry, rx)]
    iy, ix = np.unravel_index(int(np.argmax(sub)), sub.shape)
    dy, dx = int(ry[iy]), int(rx[ix])
    if dy > h // 2:
        dy -= h
    if dx > w // 2:
        dx -= w
    return dx, dy


def _climb(ref, mov, dx, dy, radius, mov_valid):
    """Greedy integer hill-climb on NCC; returns the peak and its neighbourhood."""
    for _ in range(4 * radius + 4):
        nb = _neighbourhood(ref, mov, dx, dy, mov_valid)
        j, i = np.unravel_index(int(np.argmax(nb)), nb.shape)
        nx, ny = dx + i - 1, dy + j - 1
        if (i, j) == (1, 1) or nb[j, i] <= nb[1, 1] or abs(nx) > radius or abs(ny) > radius:
            return dx, dy, nb
        dx, dy = nx, ny
    return dx, dy, nb


def _exhaustive_peak(ref, mov, radius, mov_valid):
    best = (-3.0, 0, 0)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            s = ncc_at(ref, mov, dx, dy, mov_valid)
            if s > best[0]:
                best = (s, dx, dy)
    return best[1], best[2]


def _parabolic(sm: float, s0: float, sp: float) -> float:
    den = sm - 2.0 * s0 + sp
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (sm - sp) / den, -0.5, 0.5))


def _translation(ref, mov, radius, min_confidence, method, mov_valid=None):
    if ref.shape != mov.shape:
        raise ShapeMismatchError(f"reference {ref.shape} vs moving {mov.shape}")
    if np.ptp(ref) == 0 or np.ptp(mov if mov_valid is None else mov[mov_valid]) == 0:
        raise DegenerateImageError("cannot correlate a constant image")
    if method == "auto":
        method = "ncc" if min(ref.shape) < SMALL_IMAGE_SIDE else "phase"
    if method == "phase":
        dx, dy = _phase_peak(ref, mov, radius)
    elif method == "ncc":
        dx, dy = _exhaustive_peak(ref, mov, radius, mov_valid)
    else:
        raise InvariantError(f"unknown correlation method {method!r}")
    dx, dy, nb = _climb(ref, mov, dx, dy, radius, mov_valid)
    peak = float(nb[1, 1])
    if peak < min_confidence:
        raise NoSimilarityError(f"no similarity: correlation peak {peak:.3f} < {min_confidence}")
    fx = _parabolic(nb[1, 0], peak, nb[1, 2])
    fy = _parabolic(nb[0, 1], peak, nb[2, 1])
    return dx + fx, dy + fy, peak


def _prepare(img: BandImage, prefilter: str | None) -> np.ndarray:
    if prefilter in (None, "none"):
        return img.data
    if prefilter == "gradient":
        return gradient_magnitude(img.data)
    raise InvariantError(f"unknown prefilter {prefilter!r}")


def estimate_translation(
    ref: BandImage,
    mov: BandImage,
    search_radius: int = DEFAULT_SEARCH_RADIUS,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
    method: str = "auto",
    prefilter: str | None = None,
) -> Transform2D:
    """Translation ``t`` with ``mov(p + t) ~ ref(p)``.

    The integer peak comes from phase correlation (or exhaustive NCC on
    images under 64 px a side), is polished by an NCC hill-climb and refined
    to subpixel by a parabola through the NCC peak and its neighbours.

    Raises
    ------
    DegenerateImageError
        Either image has zero variance.
    NoSimilarityError
        The NCC peak is below ``min_confidence``.
    """
    if ref.shape != mov.shape:
        raise ShapeMismatchError(f"reference {ref.shape} vs moving {mov.shape}")
    tx, ty, _ = _translation(_prepare(ref, prefilter), _prepare(mov, prefilter), search_radius, min_confidence, method)
    return Transform2D(tx, ty, 0.0)


def correlation_score(ref: BandImage, mov: BandImage, t: Transform2D, prefilter: str | None = None) -> float:
    """NCC between the reference and the moving image warped back by ``t``."""
    warped, valid = warp_to_reference(_prepare(mov, prefilter), t)
    a = _prepare(ref, prefilter)
    return _ncc(a[valid], warped[valid])


def angle_grid(angle_search=(-3.0, 3.0, 0.25)) -> np.ndarray:
    lo, hi, step = angle_search
    if step <= 0 or hi < lo:
        return np.empty(0)
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(n)


def estimate_rigid(
    ref: BandImage,
    mov: BandImage,
    angle_search=(-3.0, 3.0, 0.25),
    search_radius: int = DEFAULT_SEARCH_RADIUS,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
    method: str = "auto",
    prefilter: str | None = None,
) -> Transform2D:
    """Grid search over rotation (degrees ``(lo, hi, step)``), translation per angle.

    The best grid angle is refined by a parabola through its neighbours'
    scores.  An empty angle range degrades to :func:`estimate_translation`.
    """
    angles = angle_grid(angle_search)
    if angles.size == 0:
        return estimate_translation(ref, mov, search_radius, min_confidence, method, prefilter)
    a = _prepare(ref, prefilter)
    m = _prepare(mov, prefilter)
    h, w = a.shape
    xs, ys = _grid(a.shape)
    cx, cy = _center(a.shape)

    def at_angle(deg):
        th = math.radians(deg)
        c, s = math.cos(th), math.sin(th)
        # derotated moving image: d(q) = mov(R (q - c) + c) = ref(q - R^-1 t)
        dx, dy = xs - cx, ys - cy
        d, valid = _backend.kernels.bilinear_sample(m, c * dx - s * dy + cx, s * dx + c * dy + cy)
        try:
            sx, sy, peak = _translation(a, d, search_radius, -1.0, method, valid)
        except DegenerateImageError:
            return -2.0, 0.0, 0.0
        return peak, c * sx - s * sy, s * sx + c * sy

    results = [at_angle(float(deg)) for deg in angles]
    scores = np.array([r[0] for r in results])
    i = int(np.argmax(scores))
    best_deg = float(angles[i])
    if 0 < i < len(angles) - 1:
        step = float(angles[1] - angles[0])
        best_deg += step * _parabolic(scores[i - 1], scores[i], scores[i + 1])
    peak, tx, ty = at_angle(best_deg) if best_deg != angles[i] else results[i]
    if peak < results[i][0]:
        best_deg, (peak, tx, ty) = float(angles[i]), results[i]
    if peak < min_confidence:
        raise NoSimilarityError(f"no similarity: correlation peak {peak:.3f} < {min_confidence}")
    return Transform2D(tx, ty, math.radians(best_deg))


def _largest_valid_rect(valid: np.ndarray) -> tuple[int, int, int, int] | None:
    """Shrink the bounding box of ``valid`` until it contains only valid pixels.

    Returns ``(y0, y1, x0, x1)`` half-open, or None.
    """
    rows = np.flatnonzero(valid.any(axis=1))
    cols = np.flatnonzero(valid.any(axis=0))
    if rows.size == 0:
        return None
    y0, y1, x0, x1 = rows[0], rows[-1] + 1, cols[0], cols[-1] + 1
    while y0 < y1 and x0 < x1:
        sub = valid[y0:y1, x0:x1]
        if sub.all():
            return int(y0), int(y1), int(x0), int(x1)
        bad = {
            "top": (~sub[0]).sum(),
            "bottom": (~sub[-1]).sum(),
            "left": (~sub[:, 0]).sum(),
            "right": (~sub[:, -1]).sum(),
        }
        side = max(bad, key=bad.get)
        if side == "top":
            y0 += 1
        elif side == "bottom":
            y1 -= 1
        elif side == "left":
            x0 += 1
        else:
            x1 -= 1
    return None


def warp_and_crop(frame: MultispectralFrame, transforms: dict, margin: int = 0, return_rect: bool = False):
    """Resample every non-reference band into the first band's coordinates and
    crop to the region where all bands have data, shrunk by ``margin``.

    With ``return_rect`` the crop ``(y0, y1, x0, x1)`` in reference
    coordinates is returned alongside the frame.
    """
    ref = frame.bands[0]
    warped = [ref.data]
    valid = np.ones(ref.shape, dtype=bool)
    for b in frame.bands[1:]:
        if b.band not in transforms:
            raise SchemaError(f"no transform for band {b.band!r}")
        data, ok = warp_to_reference(b.data, transforms[b.band])
        warped.append(data)
        valid &= ok
    rect = _largest_valid_rect(valid)
    if rect is None:
        raise EmptyIntersectionError("bands share no valid region")
    y0, y1, x0, x1 = rect
    y0, y1, x0, x1 = y0 + margin, y1 - margin, x0 + margin, x1 - margin
    if y1 <= y0 or x1 <= x0:
        raise EmptyIntersectionError(f"margin {margin} leaves an empty common region")
    bands = tuple(BandImage(d[y0:y1, x0:x1], b.band) for d, b in zip(warped, frame.bands))
    out = MultispectralFrame(bands, frame.frame_id)
    return (out, (y0, y1, x0, x1)) if return_rect else out


@dataclass
class RigCalibration:
    """Persisted per-rig registration (computed once, applied to every frame)."""

    reference: str
    transforms: dict = field(default_factory=dict)
    intrinsics: CameraIntrinsics | None = None
    search: dict = field(default_factory=dict)
    margin: int = 0

    VERSION = 1

    def to_json(self) -> dict:
        return {
            "version": self.VERSION,
            "reference": self.reference,
            "bands": {k: asdict(v) for k, v in sorted(self.transforms.items())},
            "intrinsics": asdict(self.intrinsics) if self.intrinsics else None,
            "search": self.search,
            "margin": self.margin,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RigCalibration":
        try:
            if int(obj["version"]) != cls.VERSION:
                raise SchemaError(f"unsupported rig calibration version {obj['version']}")
            intr = obj.get("intrinsics")
            return cls(
                reference=obj["reference"],
                transforms={k: Transform2D(**v) for k, v in obj["bands"].items()},
                intrinsics=CameraIntrinsics(**intr) if intr else None,
                search=dict(obj.get("search", {})),
                margin=int(obj.get("margin", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed rig calibration: {exc}") from None

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "RigCalibration":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))

    def apply(self, frame: MultispectralFrame, return_rect: bool = False):
        if self.intrinsics is not None:
            frame = MultispectralFrame(tuple(undistort(b, self.intrinsics) for b in frame.bands), frame.frame_id)
        order = [self.reference] + [n for n in frame.band_names if n != self.reference]
        frame = MultispectralFrame(tuple(frame[n] for n in order), frame.frame_id)
        return warp_and_crop(frame, self.transforms, self.margin, return_rect)


def calibrate_rig(
    frame: MultispectralFrame,
    reference: str | None = None,
    intrinsics: CameraIntrinsics | None = None,
    angle_search=(-3.0, 3.0, 0.25),
    search_radius: int = DEFAULT_SEARCH_RADIUS,
    min_confidence: float = DEFAULT_MIN_CONFIDENCE,
    prefilter: str | None = "gradient",
    margin: int = 0,
) -> RigCalibration:
    """Estimate every band's transform against the reference band once."""
    reference = reference or frame.band_names[0]
    if intrinsics is not None:
        frame = MultispectralFrame(tuple(undistort(b, intrinsics) for b in frame.bands), frame.frame_id)
    ref = frame[reference]
    transforms = {}
    for b in frame.bands:
        if b.band == reference:
            continue
        transforms[b.band] = estimate_rigid(ref, b, angle_search, search_radius, min_confidence, prefilter=prefilter)
    search = {
        "angle_search": list(angle_search),
        "search_radius": search_radius,
        "min_confidence": min_confidence,
        "prefilter": prefilter,
    }
    return RigCalibration(reference, transforms, intrinsics, search, margin)
