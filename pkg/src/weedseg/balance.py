"""Median frequency-of-appearance class weights.

For each class ``c``::

    foa[c] = total_pixels[c] / present_image_pixels[c]
    w[c]   = median(foa) / foa[c]

where ``present_image_pixels[c]`` sums the sizes of all images in which
``c`` occurs at least once.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .errors import InvariantError, MissingClassError, SchemaError
from .imgcore import CLASS_NAMES, NUM_CLASSES, LabelMask


@dataclass(frozen=True)
class DatasetStats:
    total_pixels: tuple[int, ...]
    present_image_pixels: tuple[int, ...]
    image_count: int

    def __post_init__(self):
        tp = tuple(int(v) for v in self.total_pixels)
        pp = tuple(int(v) for v in self.present_image_pixels)
        if len(tp) != len(pp):
            raise InvariantError("per-class count vectors differ in length")
        if min(tp + pp + (self.image_count,)) < 0:
            raise InvariantError("counts must be non-negative")
        for c, (t, p) in enumerate(zip(tp, pp)):
            if t > p:
                raise InvariantError(f"class {c}: total_pixels {t} exceeds present_image_pixels {p}")
        object.__setattr__(self, "total_pixels", tp)
        object.__setattr__(self, "present_image_pixels", pp)

    def __add__(self, other: "DatasetStats") -> "DatasetStats":
        return DatasetStats(
            tuple(a + b for a, b in zip(self.total_pixels, other.total_pixels)),
            tuple(a + b for a, b in zip(self.present_image_pixels, other.present_image_pixels)),
            self.image_count + other.image_count,
        )

    def to_json(self) -> dict:
        return {
            "total_pixels": list(self.total_pixels),
            "present_image_pixels": list(self.present_image_pixels),
            "image_count": self.image_count,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetStats":
        try:
            return cls(tuple(obj["total_pixels"]), tuple(obj["present_image_pixels"]), int(obj["image_count"]))
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed dataset stats: {exc}") from None


@dataclass(frozen=True)
class ClassWeights:
    w: tuple[float, ...]
    foa: tuple[float, ...]
    median_foa: float

    def __post_init__(self):
        object.__setattr__(self, "w", tuple(float(v) for v in self.w))
        object.__setattr__(self, "foa", tuple(float(v) for v in self.foa))
        object.__setattr__(self, "median_foa", float(self.median_foa))
        if any(not v > 0 for v in self.w):
            raise InvariantError(f"class weights must be positive, got {self.w}")

    @classmethod
    def uniform(cls, num_classes: int = NUM_CLASSES) -> "ClassWeights":
        return cls((1.0,) * num_classes, (1.0,) * num_classes, 1.0)

    def as_array(self) -> np.ndarray:
        return np.array(self.w, dtype=np.float64)

    def to_json(self) -> dict:
        return {"w": list(self.w), "foa": list(self.foa), "median_foa": self.median_foa}

    @classmethod
    def from_json(cls, obj: dict) -> "ClassWeights":
        try:
            return cls(tuple(obj["w"]), tuple(obj["foa"]), obj["median_foa"])
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"malformed class weights: {exc}") from None


def mask_stats(mask: LabelMask, num_classes: int = NUM_CLASSES) -> DatasetStats:
    counts = np.bincount(mask.labels.ravel(), minlength=num_classes)[:num_classes]
    size = mask.labels.size
    present = tuple(size if n > 0 else 0 for n in counts)
    return DatasetStats(tuple(int(n) for n in counts), present, 1)


def accumulate_stats(masks: Iterable[LabelMask], num_classes: int = NUM_CLASSES) -> DatasetStats:
    total = None
    for m in masks:
        s = mask_stats(m, num_classes)
        total = s if total is None else total + s
    if total is None:
        raise InvariantError("accumulate_stats needs at least one mask")
    return total


def compute_class_weights(stats: DatasetStats) -> ClassWeights:
    absent = [c for c, t in enumerate(stats.total_pixels) if t == 0]
    if absent:
        names = [CLASS_NAMES[c] if c < len(CLASS_NAMES) else str(c) for c in absent]
        raise MissingClassError(f"classes never present in the dataset: {', '.join(names)}")
    # exact rationals: the median class gets weight exactly 1 and the
    # weights are correctly rounded ratios of integer counts
    foa = [Fraction(t, p) for t, p in zip(stats.total_pixels, stats.present_image_pixels)]
    ordered = sorted(foa)
    n = len(ordered)
    med = ordered[n // 2] if n % 2 else (ordered[n // 2 - 1] + ordered[n // 2]) / 2
    return ClassWeights(tuple(float(med / f) for f in foa), tuple(float(f) for f in foa), float(med))


def save_weights(stats: DatasetStats, weights: ClassWeights, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"version": 1, "stats": stats.to_json(), "weights": weights.to_json()}, fh, indent=2)
        fh.write("\n")


def load_weights(path: str | os.PathLike) -> tuple[DatasetStats, ClassWeights]:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or int(obj.get("version", -1)) != 1:
        raise SchemaError(f"{path}: unsupported stats file version")
    return DatasetStats.from_json(obj["stats"]), ClassWeights.from_json(obj["weights"])
