import json
from dataclasses import replace

import numpy as np
import pytest

from weedseg.errors import InvariantError, MissingFileError, SchemaError
from weedseg.imgcore import BG, CROP, NIR, RED, WEED
from weedseg.manifest import DatasetManifest, ManifestEntry
from weedseg.register import Transform2D
from weedseg.synth import FieldConfig, derive_seed, generate_dataset, generate_field, plot_config


def test_generation_is_deterministic():
    cfg = FieldConfig(width=48, height=40, seed=12)
    f1, m1 = generate_field(cfg)
    f2, m2 = generate_field(cfg)
    assert np.array_equal(f1[NIR].data, f2[NIR].data) and np.array_equal(m1.labels, m2.labels)
    assert f1.shape == (40, 48)


def test_plot_types_control_species():
    t = FieldConfig(width=64, height=64)
    _, crop = generate_field(plot_config(t, "crop", 1))
    _, weed = generate_field(plot_config(t, "weed", 1))
    mixed = np.stack([generate_field(plot_config(t, "mixed", s))[1].labels for s in range(5)])
    assert WEED not in crop.labels and CROP in crop.labels
    assert CROP not in weed.labels and WEED in weed.labels
    assert {BG, CROP, WEED} <= set(np.unique(mixed).tolist())
    with pytest.raises(InvariantError):
        plot_config(t, "orchard", 0)


def test_vegetation_spectral_signature():
    frame, truth = generate_field(FieldConfig(seed=2))
    nir, red = frame[NIR].data, frame[RED].data
    veg = truth.labels != BG
    assert nir[veg].mean() > nir[~veg].mean() and red[veg].mean() < red[~veg].mean()


def test_misalignment_moves_red_only():
    base = FieldConfig(width=64, height=64, seed=5, noise_sigma=0.0)
    f0, _ = generate_field(base)
    f1, _ = generate_field(replace(base, band_misalignment=Transform2D(2.0, 0.0)))
    assert np.array_equal(f0[NIR].data, f1[NIR].data)
    assert not np.array_equal(f0[RED].data, f1[RED].data)


def test_degenerate_geometry():
    with pytest.raises(InvariantError, match="degenerate geometry"):
        FieldConfig(crop_row_spacing=10, crop_radius_range=(5, 8))
    with pytest.raises(InvariantError):
        FieldConfig(herbicide_level=1.5)


def test_derive_seed_stable_and_distinct():
    assert derive_seed(0, "crop", 1) == derive_seed(0, "crop", 1)
    assert derive_seed(0, "crop", 1) != derive_seed(0, "crop", 2)
    assert derive_seed(0, "crop", 1) != derive_seed(1, "crop", 1)
    assert 0 <= derive_seed(123, "x") < 2**63


def test_dataset_files_and_manifest(tmp_path):
    m = generate_dataset(tmp_path, FieldConfig(width=32, height=32), {"crop": 2, "weed": 1, "mixed": 1}, seed=3)
    assert [e.frame_id for e in m.entries] == ["crop_0000", "crop_0001", "weed_0000", "mixed_0000"]
    assert [e.split for e in m.entries] == ["train", "train", "train", "test"]
    assert m.entries[0].mask is None and m.entries[-1].mask == m.entries[-1].truth
    loaded = DatasetManifest.load(tmp_path / "manifest.json")
    frame = loaded.load_frame(loaded.entries[0])
    assert frame.band_names == [NIR, RED] and frame.shape == (32, 32)
    a = (tmp_path / "manifest.json").read_bytes()
    generate_dataset(tmp_path, FieldConfig(width=32, height=32), {"crop": 2, "weed": 1, "mixed": 1}, seed=3)
    assert (tmp_path / "manifest.json").read_bytes() == a


def test_manifest_schema_errors(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"schema_version": "2.0", "entries": []}))
    with pytest.raises(SchemaError, match="major version"):
        DatasetManifest.load(p)
    p.write_text("{not json")
    with pytest.raises(SchemaError):
        DatasetManifest.load(p)
    p.write_text(json.dumps({"schema_version": "1.3", "entries": [{"bands": {}}]}))
    with pytest.raises(SchemaError):
        DatasetManifest.load(p)
    with pytest.raises(MissingFileError):
        DatasetManifest.load(tmp_path / "absent.json")


def test_manifest_duplicates_and_missing_files(tmp_path):
    e = ManifestEntry("a", {NIR: "a.pgm"})
    with pytest.raises(SchemaError, match="duplicate"):
        DatasetManifest([e, e])
    m = DatasetManifest([e], root=tmp_path)
    m.save(tmp_path / "m.json")
    with pytest.raises(MissingFileError, match="a.pgm"):
        DatasetManifest.load(tmp_path / "m.json")
    assert DatasetManifest.load(tmp_path / "m.json", check_files=False).entries == [e]


def test_manifest_entry_validation_and_masks():
    with pytest.raises(SchemaError):
        ManifestEntry("a", {NIR: "a"}, split="val")
    with pytest.raises(SchemaError):
        ManifestEntry("a", {NIR: "a"}, plot_type="forest")
    m = DatasetManifest([ManifestEntry("a", {NIR: "a"}), ManifestEntry("b", {NIR: "b"}, mask="b.png")])
    with pytest.raises(SchemaError, match="without masks"):
        m.require_masks("train")
    m.updated("a", mask="a.png")
    m.require_masks("train")
    assert m.entries[0].mask == "a.png"
