"""JSON dataset manifest.

Schema (UTF-8 JSON)::

    {
      "schema_version": "1.0",
      "entries": [
        {
          "frame_id": "crop_0000",
          "bands": {"NIR": "bands/crop_0000_nir.pgm", "Red": "..."},
          "mask": "masks/crop_0000.png" | null,
          "truth": "truth/crop_0000.png" | null,
          "split": "train" | "test",
          "plot_type": "crop" | "weed" | "mixed"
        }
      ]
    }

Paths are relative to the manifest's directory.  ``mask`` is the label used
for training (train split) or evaluation (test split); ``truth`` is an
optional reference label, e.g. from the synthetic generator.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import MissingFileError, SchemaError
from .imgcore import MultispectralFrame
from .io import read_band_image, read_label_mask

SCHEMA_VERSION = "1.0"
SPLITS = ("train", "test")
PLOT_TYPES = ("crop", "weed", "mixed")


@dataclass(frozen=True)
class ManifestEntry:
    frame_id: str
    bands: dict
    mask: str | None = None
    split: str = "train"
    plot_type: str = "mixed"
    truth: str | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise SchemaError(f"entry {self.frame_id!r}: split must be one of {SPLITS}, got {self.split!r}")
        if self.plot_type not in PLOT_TYPES:
            raise SchemaError(f"entry {self.frame_id!r}: unknown plot_type {self.plot_type!r}")
        if not isinstance(self.bands, dict) or not self.bands:
            raise SchemaError(f"entry {self.frame_id!r}: bands must be a non-empty object")

    def to_json(self) -> dict:
        return {
            "frame_id": self.frame_id,
            "bands": dict(self.bands),
            "mask": self.mask,
            "truth": self.truth,
            "split": self.split,
            "plot_type": self.plot_type,
        }


@dataclass
class DatasetManifest:
    entries: list
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        self.root = Path(self.root)
        ids = [e.frame_id for e in self.entries]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise SchemaError(f"duplicate frame ids: {dup}")

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "entries": [e.to_json() for e in self.entries]}

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | os.PathLike, check_files: bool = True) -> "DatasetManifest":
        path = Path(path)
        if not path.is_file():
            raise MissingFileError(f"manifest not found: {path}")
        try:
            obj = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(obj, dict) or "schema_version" not in obj:
            raise SchemaError(f"{path}: missing schema_version")
        major = str(obj["schema_version"]).split(".")[0]
        if major != SCHEMA_VERSION.split(".")[0]:
            raise SchemaError(f"{path}: unsupported manifest schema major version {obj['schema_version']!r}")
        try:
            entries = [
                ManifestEntry(
                    frame_id=str(e["frame_id"]),
                    bands=dict(e["bands"]),
                    mask=e.get("mask"),
                    split=e.get("split", "train"),
                    plot_type=e.get("plot_type", "mixed"),
                    truth=e.get("truth"),
                )
                for e in obj["entries"]
            ]
        except (KeyError, TypeError, AttributeError) as exc:
            raise SchemaError(f"{path}: malformed entry ({exc})") from None
        manifest = cls(entries, root=path.parent)
        if check_files:
            manifest.check_files()
        return manifest

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def check_files(self) -> None:
        for e in self.entries:
            for rel in list(e.bands.values()) + [e.mask, e.truth]:
                if rel is not None and not self.resolve(rel).is_file():
                    raise MissingFileError(f"entry {e.frame_id!r}: missing file {rel}")

    def require_masks(self, split: str) -> None:
        missing = [e.frame_id for e in self.split(split) if e.mask is None]
        if missing:
            raise SchemaError(f"{split} entries without masks: {missing[:5]}{' ...' if len(missing) > 5 else ''}")

    def split(self, name: str) -> list:
        return [e for e in self.entries if e.split == name]

    def load_frame(self, entry: ManifestEntry) -> MultispectralFrame:
        bands = tuple(read_band_image(self.resolve(p), name) for name, p in entry.bands.items())
        return MultispectralFrame(bands, entry.frame_id)

    def load_mask(self, entry: ManifestEntry):
        if entry.mask is None:
            raise SchemaError(f"entry {entry.frame_id!r} has no mask")
        return read_label_mask(self.resolve(entry.mask))

    def load_truth(self, entry: ManifestEntry):
        rel = entry.truth or entry.mask
        if rel is None:
            raise SchemaError(f"entry {entry.frame_id!r} has no truth mask")
        return read_label_mask(self.resolve(rel))

    def updated(self, frame_id: str, **changes) -> None:
        self.entries = [replace(e, **changes) if e.frame_id == frame_id else e for e in self.entries]
