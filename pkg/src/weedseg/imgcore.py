"""Raster value types, NDVI and colour rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BandTagError, InvariantError, ShapeMismatchError

NIR = "NIR"
RED = "Red"
NDVI = "NDVI"

BG, CROP, WEED = 0, 1, 2
CLASS_NAMES = ("bg", "crop", "weed")
NUM_CLASSES = 3

# Channel order fed to the network.
NETWORK_BANDS = (NIR, RED, NDVI)

# bg -> blue, crop -> red, weed -> green
CLASS_COLORS = np.array([[0, 0, 255], [255, 0, 0], [0, 255, 0]], dtype=np.uint8)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BandImage:
    """Single-band float raster, row-major ``(height, width)``."""

    data: np.ndarray
    band: str = "Other"

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InvariantError(f"band image must be 2-D, got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise InvariantError(f"band image must be at least 1x1, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise InvariantError(f"band {self.band!r} contains non-finite samples")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray) -> "BandImage":
        return BandImage(data, self.band)


@dataclass(frozen=True)
class MultispectralFrame:
    bands: tuple[BandImage, ...]
    frame_id: str = ""

    def __post_init__(self):
        bands = tuple(self.bands)
        if not bands:
            raise InvariantError("frame must hold at least one band")
        names = [b.band for b in bands]
        if len(set(names)) != len(names):
            raise InvariantError(f"duplicate band names in frame: {names}")
        shape = bands[0].shape
        for b in bands[1:]:
            if b.shape != shape:
                raise ShapeMismatchError(
                    f"band {b.band!r} has shape {b.shape}, expected {shape}"
                )
        object.__setattr__(self, "bands", bands)

    @property
    def shape(self) -> tuple[int, int]:
        return self.bands[0].shape

    @property
    def band_names(self) -> list[str]:
        return [b.band for b in self.bands]

    def __getitem__(self, name: str) -> BandImage:
        for b in self.bands:
            if b.band == name:
                return b
        raise BandTagError(f"frame {self.frame_id!r} has no {name!r} band (has {self.band_names})")

    def __contains__(self, name: str) -> bool:
        return name in self.band_names

    def stack(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Return the selected bands as a ``(C, H, W)`` float array."""
        names = self.band_names if names is None else list(names)
        return np.stack([self[n].data for n in names])


@dataclass(frozen=True)
class LabelMask:
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2 or labels.shape[0] < 1 or labels.shape[1] < 1:
            raise InvariantError(f"label mask must be a non-empty 2-D array, got {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= NUM_CLASSES):
            bad = np.unique(labels[(labels < 0) | (labels >= NUM_CLASSES)])
            raise InvariantError(f"label values outside {{0,1,2}}: {bad.tolist()}")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape


@dataclass(frozen=True)
class ProbabilityMap:
    """Per-pixel class probabilities stored as ``(num_classes, H, W)``."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 3 or probs.shape[0] < 1:
            raise InvariantError(f"probabilities must be (C, H, W), got {probs.shape}")
        if not np.all(np.isfinite(probs)) or probs.min() < 0:
            raise InvariantError("probabilities must be finite and non-negative")
        total = probs.sum(axis=0)
        if np.abs(total - 1.0).max() > 1e-5:
            raise InvariantError(
                f"per-pixel probabilities must sum to 1 (max deviation {np.abs(total - 1).max():.3g})"
            )
        object.__setattr__(self, "probs", _frozen(probs))

    @property
    def num_classes(self) -> int:
        return self.probs.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape[1:]


def compute_ndvi(nir: BandImage, red: BandImage) -> BandImage:
    """(NIR - Red) / (NIR + Red), with 0 wherever the denominator is 0."""
    if nir.band != NIR or red.band != RED:
        raise BandTagError(f"expected ({NIR}, {RED}) bands, got ({nir.band}, {red.band})")
    if nir.shape != red.shape:
        raise ShapeMismatchError(f"NIR shape {nir.shape} != Red shape {red.shape}")
    num = nir.data - red.data
    den = nir.data + red.data
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den != 0)
    return BandImage(out, NDVI)


def quantize_unit(x: np.ndarray) -> np.ndarray:
    """Map [0, 1] to 0..255 rounding half up."""
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def render_mask(mask: LabelMask) -> np.ndarray:
    """Colour-code a label mask as an ``(H, W, 3)`` uint8 RGB image."""
    return CLASS_COLORS[mask.labels]


def render_probability(pm: ProbabilityMap) -> np.ndarray:
    """R = P(crop), G = P(weed), B = P(bg), each scaled to 0..255."""
    if pm.num_classes != NUM_CLASSES:
        raise InvariantError(f"render_probability needs 3 classes, got {pm.num_classes}")
    p = pm.probs
    return np.stack([quantize_unit(p[CROP]), quantize_unit(p[WEED]), quantize_unit(p[BG])], axis=-1)


def frame_from_arrays(arrays: Iterable[np.ndarray], names: Sequence[str], frame_id: str = "") -> MultispectralFrame:
    return MultispectralFrame(tuple(BandImage(a, n) for a, n in zip(arrays, names)), frame_id)


def network_input(frame: MultispectralFrame, in_channels: int) -> np.ndarray:
    """Pick the first ``in_channels`` of [NIR, Red, NDVI] from a frame.

    NDVI is derived on the fly when the frame lacks it.
    """
    names = NETWORK_BANDS[:in_channels]
    if in_channels > len(NETWORK_BANDS):
        # Extra channels beyond the standard three come from the frame's own order.
        names = tuple(frame.band_names[:in_channels])
    planes = []
    for n in names:
        if n in frame:
            planes.append(frame[n].data)
        elif n == NDVI:
            planes.append(compute_ndvi(frame[NIR], frame[RED]).data)
        else:
            raise BandTagError(f"frame {frame.frame_id!r} has no {n} band")
    return np.stack(planes)
