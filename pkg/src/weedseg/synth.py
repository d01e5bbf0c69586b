"""Synthetic NIR/Red field plots with crop rows and weeds.

Crops are rosettes (disks with a sinusoidal radius) placed along vertical
rows; weeds are random-walk blobs placed between rows with a density scaled
down by the herbicide level.  Default reflectances are invented for
separability: vegetation is bright in NIR and dark in Red, soil in between.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .autolabel import gaussian_filter
from .errors import InvariantError
from .imgcore import BG, CROP, NIR, RED, WEED, BandImage, LabelMask, MultispectralFrame
from .register import Transform2D, apply_transform

# material -> (nir_mean, nir_std, red_mean, red_std); std is plant-to-plant.
# Weeds sit off the soil-crop line in (NIR, Red): darker in NIR but redder-absorbing
# than crop, so no class lies between the other two on every channel.
DEFAULT_REFLECTANCE = {
    "soil": (0.25, 0.02, 0.20, 0.015),
    "crop": (0.70, 0.02, 0.10, 0.008),
    "weed": (0.45, 0.02, 0.03, 0.005),
}

PLOT_TYPES = ("crop", "weed", "mixed")


@dataclass(frozen=True)
class FieldConfig:
    width: int = 128
    height: int = 128
    crop_row_spacing: float = 32.0
    crop_plant_spacing: float = 26.0
    crop_radius_range: tuple[float, float] = (5.0, 8.0)
    crops: bool = True
    weed_density: float = 2.0
    herbicide_level: float = 0.0
    weed_steps: tuple[int, int] = (15, 30)
    weed_brush_range: tuple[float, float] = (3.0, 4.5)
    reflectance: dict = field(default_factory=lambda: dict(DEFAULT_REFLECTANCE))
    soil_texture_sigma: float = 0.03
    band_misalignment: Transform2D = field(default_factory=Transform2D)
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvariantError("field dimensions must be positive")
        if not 0.0 <= self.herbicide_level <= 1.0:
            raise InvariantError(f"herbicide_level must lie in [0, 1], got {self.herbicide_level}")
        for mat in ("soil", "crop", "weed"):
            if mat not in self.reflectance:
                raise InvariantError(f"missing reflectance for {mat}")
            nir, _, red, _ = self.reflectance[mat]
            if not (0 <= nir <= 1 and 0 <= red <= 1):
                raise InvariantError(f"{mat} reflectance means must lie in [0, 1]")
        if self.reflectance["crop"][0] <= self.reflectance["soil"][0]:
            raise InvariantError("crop NIR mean must exceed soil NIR mean")
        if self.crop_row_spacing < 2 * self.crop_radius_range[1]:
            raise InvariantError(
                f"degenerate geometry: row spacing {self.crop_row_spacing} < 2 x max crop radius "
                f"{self.crop_radius_range[1]}"
            )

    def scaled(self, factor: float, **overrides) -> "FieldConfig":
        """Scale every length (not the image size) by ``factor``."""
        lo, hi = self.crop_radius_range
        blo, bhi = self.weed_brush_range
        slo, shi = self.weed_steps
        return replace(
            self,
            crop_row_spacing=self.crop_row_spacing * factor,
            crop_plant_spacing=self.crop_plant_spacing * factor,
            crop_radius_range=(lo * factor, hi * factor),
            weed_brush_range=(blo * factor, bhi * factor),
            weed_steps=(int(round(slo * factor)), int(round(shi * factor))),
            weed_density=self.weed_density / factor**2,
            **overrides,
        )


def plot_config(template: FieldConfig, plot_type: str, seed: int) -> FieldConfig:
    """Herbicide treatment per plot: max -> crop only, none -> weeds only,
    medium -> mixed."""
    if plot_type == "crop":
        return replace(template, crops=True, herbicide_level=1.0, seed=seed)
    if plot_type == "weed":
        return replace(template, crops=False, herbicide_level=0.0, seed=seed)
    if plot_type == "mixed":
        return replace(template, crops=True, herbicide_level=0.5, seed=seed)
    raise InvariantError(f"unknown plot type {plot_type!r}")


def _row_centres(cfg: FieldConfig, rng) -> np.ndarray:
    first = cfg.crop_row_spacing / 2 + rng.uniform(-0.15, 0.15) * cfg.crop_row_spacing
    return np.arange(first, cfg.width, cfg.crop_row_spacing)


def _draw_crops(cfg, rng, rows, yy, xx, label, nir, red):
    lo, hi = cfg.crop_radius_range
    n_mean, n_std, r_mean, r_std = cfg.reflectance["crop"]
    for xc in rows:
        y = rng.uniform(0, cfg.crop_plant_spacing)
        while y < cfg.height + hi:
            cx = xc + rng.uniform(-1.5, 1.5)
            cy = y + rng.uniform(-2.0, 2.0)
            radius = rng.uniform(lo, hi)
            lobes = int(rng.integers(5, 8))
            phase = rng.uniform(0, 2 * math.pi)
            dx, dy = xx - cx, yy - cy
            rad = radius * (1.0 + 0.2 * np.sin(lobes * np.arctan2(dy, dx) + phase))
            inside = dx * dx + dy * dy <= rad * rad
            label[inside] = CROP
            nir[inside] = rng.normal(n_mean, n_std)
            red[inside] = rng.normal(r_mean, r_std)
            y += cfg.crop_plant_spacing


def _draw_weeds(cfg, rng, rows, yy, xx, label, nir, red):
    expected = cfg.weed_density * (1.0 - cfg.herbicide_level) * cfg.width * cfg.height / 1000.0
    count = int(rng.poisson(expected)) if expected > 0 else 0
    n_mean, n_std, r_mean, r_std = cfg.reflectance["weed"]
    keep_out = cfg.crop_radius_range[1] + cfg.weed_brush_range[1] + 1.0
    for _ in range(count):
        # rejection-sample a seed point between the crop rows
        for _ in range(50):
            x0 = rng.uniform(0, cfg.width)
            y0 = rng.uniform(0, cfg.height)
            if not cfg.crops or rows.size == 0 or np.min(np.abs(rows - x0)) > keep_out:
                break
        else:
            continue
        steps = int(rng.integers(cfg.weed_steps[0], cfg.weed_steps[1] + 1))
        ang = rng.uniform(0, 2 * math.pi, size=steps)
        px = x0 + np.cumsum(np.r_[0.0, np.cos(ang[1:])])
        py = y0 + np.cumsum(np.r_[0.0, np.sin(ang[1:])])
        brush = rng.uniform(*cfg.weed_brush_range)
        r = int(math.ceil(brush)) + 1
        blob = np.zeros(label.shape, dtype=bool)
        for x, y in zip(px, py):
            ys = slice(max(0, int(y) - r), min(cfg.height, int(y) + r + 2))
            xs = slice(max(0, int(x) - r), min(cfg.width, int(x) + r + 2))
            blob[ys, xs] |= (xx[ys, xs] - x) ** 2 + (yy[ys, xs] - y) ** 2 <= brush * brush
        blob &= label != CROP
        label[blob] = WEED
        nir[blob] = rng.normal(n_mean, n_std)
        red[blob] = rng.normal(r_mean, r_std)


def generate_field(cfg: FieldConfig, frame_id: str = "") -> tuple[MultispectralFrame, LabelMask]:
    """Render one plot.  The truth mask lives in the NIR (reference) frame;
    the Red band is moved by ``cfg.band_misalignment``."""
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.height, cfg.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    s_nir, _, s_red, _ = cfg.reflectance["soil"]
    texture = rng.standard_normal((h, w))
    if min(h, w) > 12:
        texture = gaussian_filter(texture, 1.5)
        texture /= max(texture.std(), 1e-12)
    nir = s_nir + cfg.soil_texture_sigma * texture
    red = s_red + 0.8 * cfg.soil_texture_sigma * texture
    label = np.full((h, w), BG, dtype=np.uint8)
    rows = _row_centres(cfg, rng)
    if cfg.crops:
        _draw_crops(cfg, rng, rows, yy, xx, label, nir, red)
    _draw_weeds(cfg, rng, rows, yy, xx, label, nir, red)
    nir = nir + cfg.noise_sigma * rng.standard_normal((h, w))
    red = red + cfg.noise_sigma * rng.standard_normal((h, w))
    nir = np.clip(nir, 0.0, 1.0)
    red = np.clip(red, 0.0, 1.0)
    red = np.clip(apply_transform(red, cfg.band_misalignment), 0.0, 1.0)
    frame = MultispectralFrame((BandImage(nir, NIR), BandImage(red, RED)), frame_id)
    return frame, LabelMask(label)


def derive_seed(seed: int, *keys) -> int:
    """Stable per-frame seed from a master seed and identifying keys."""
    h = hashlib.sha256(repr((int(seed),) + tuple(keys)).encode()).digest()
    return int.from_bytes(h[:8], "little") >> 1


def generate_dataset(out_dir, template: FieldConfig, counts: dict, seed: int = 0):
    """Write frames, truth masks and a manifest.

    Single-species plots (crop, weed) form the training split; mixed plots
    the test split.  Test entries carry their truth as the evaluation mask;
    training masks are left for the autolabel step.  Returns the manifest.
    """
    from .io import write_band_image, write_label_mask
    from .manifest import DatasetManifest, ManifestEntry

    out = Path(out_dir)
    for sub in ("bands", "truth"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    for plot_type in PLOT_TYPES:
        for k in range(int(counts.get(plot_type, 0))):
            fid = f"{plot_type}_{k:04d}"
            cfg = plot_config(template, plot_type, derive_seed(seed, plot_type, k))
            frame, truth = generate_field(cfg, fid)
            bands = {}
            for b in frame.bands:
                rel = f"bands/{fid}_{b.band.lower()}.pgm"
                write_band_image(b, out / rel, 16)
                bands[b.band] = rel
            truth_rel = f"truth/{fid}.png"
            write_label_mask(truth, out / truth_rel)
            split = "test" if plot_type == "mixed" else "train"
            entries.append(
                ManifestEntry(
                    frame_id=fid,
                    bands=bands,
                    mask=truth_rel if split == "test" else None,
                    split=split,
                    plot_type=plot_type,
                    truth=truth_rel,
                )
            )
    manifest = DatasetManifest(entries, root=out)
    manifest.save(out / "manifest.json")
    return manifest
