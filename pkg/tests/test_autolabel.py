import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from weedseg.autolabel import (
    AutolabelConfig,
    connected_components,
    gaussian_filter,
    gaussian_kernel,
    generate_mask,
    histogram_bins,
    label_components,
    otsu_bin,
    otsu_foreground,
    otsu_threshold,
    remove_small_blobs,
    unsharp_sharpen,
)
from weedseg.errors import DegenerateImageError, InvariantError
from weedseg.imgcore import BG, CROP, NDVI, NIR, RED, WEED, BandImage, compute_ndvi
from weedseg.synth import FieldConfig, generate_field, plot_config

from oracles import brute_otsu


def flood_fill(mask, connectivity):
    """Stack-based flood fill; returns the set of components as frozensets."""
    mask = np.asarray(mask, bool)
    seen = np.zeros_like(mask)
    h, w = mask.shape
    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    comps = set()
    for r in range(h):
        for c in range(w):
            if mask[r, c] and not seen[r, c]:
                stack, comp = [(r, c)], []
                seen[r, c] = True
                while stack:
                    y, x = stack.pop()
                    comp.append((y, x))
                    for dy, dx in steps:
                        yy, xx = y + dy, x + dx
                        if 0 <= yy < h and 0 <= xx < w and mask[yy, xx] and not seen[yy, xx]:
                            seen[yy, xx] = True
                            stack.append((yy, xx))
                comps.add(frozenset(comp))
    return comps


def test_otsu_bimodal_worked_example():
    hist = np.zeros(8, int)
    hist[1] = 10
    hist[6] = 10
    # every split between the modes scores equally; ties go to the lowest k
    assert otsu_bin(hist) == 2
    assert brute_otsu(hist) == 2


def test_otsu_matches_brute_force_random():
    rng = np.random.default_rng(7)
    for _ in range(40):
        hist = rng.integers(0, 50, size=int(rng.integers(2, 40)))
        hist[rng.integers(0, len(hist))] += 1
        if np.count_nonzero(hist) < 2:
            continue
        assert otsu_bin(hist) == brute_otsu(hist)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=2, max_size=24).filter(lambda h: sum(1 for c in h if c) >= 2))
def test_otsu_property(hist):
    assert otsu_bin(np.array(hist)) == brute_otsu(hist)


def test_otsu_single_bin_degenerate():
    with pytest.raises(DegenerateImageError):
        otsu_bin(np.array([0, 5, 0]))


def test_constant_image_degenerate():
    with pytest.raises(DegenerateImageError, match="degenerate histogram"):
        otsu_threshold(BandImage(np.full((8, 8), -0.1), NDVI))


def test_otsu_threshold_and_foreground_agree():
    rng = np.random.default_rng(1)
    high = rng.random((30, 30)) < 0.3
    data = np.where(high, 0.7, 0.1) + rng.normal(0, 0.02, (30, 30))
    img = BandImage(np.clip(data, -1, 1), NDVI)
    t = otsu_threshold(img)
    fg = otsu_foreground(img)
    # the gap between modes is empty, so the lowest split in it wins
    assert data[~high].max() < t <= data[high].min()
    np.testing.assert_array_equal(fg, high)
    np.testing.assert_array_equal(fg, data >= t)


def test_histogram_bins_max_in_last_bin():
    idx, lo, width = histogram_bins(np.array([0.0, 0.5, 1.0]), 4)
    assert idx.tolist() == [0, 2, 3] and lo == 0.0 and width == 0.25


def test_gaussian_kernel_normalized_and_radius():
    k = gaussian_kernel(1.2)
    assert len(k) == 2 * 4 + 1
    assert abs(k.sum() - 1.0) < 1e-15
    np.testing.assert_allclose(k, k[::-1])


def test_gaussian_filter_preserves_mean_and_constants():
    rng = np.random.default_rng(0)
    a = rng.random((20, 17))
    out = gaussian_filter(a, 1.2)
    assert abs(out.mean() - a.mean()) < 1e-12
    np.testing.assert_allclose(gaussian_filter(np.full((9, 9), 0.3), 1.0), 0.3, atol=1e-15)


def test_gaussian_filter_matches_direct_sum():
    # interior pixels against a direct 2-D sum with the outer-product kernel
    rng = np.random.default_rng(2)
    a = rng.random((15, 15))
    k = gaussian_kernel(1.0)
    r = len(k) // 2
    k2 = np.outer(k, k)
    out = gaussian_filter(a, 1.0)
    for y in range(r, 15 - r):
        for x in range(r, 15 - r):
            assert abs(out[y, x] - (a[y - r : y + r + 1, x - r : x + r + 1] * k2).sum()) < 1e-12


def test_gaussian_radius_too_large():
    with pytest.raises(InvariantError):
        gaussian_filter(np.zeros((3, 3)), 2.0)


def test_sharpen_formula_and_clamp():
    img = BandImage(np.array([[0.5, 0.9]]), NDVI)
    blur = BandImage(np.array([[0.4, 0.1]]), NDVI)
    out = unsharp_sharpen(img, blur, 1.0).data
    np.testing.assert_allclose(out, [[0.6, 1.0]])


@pytest.mark.parametrize("connectivity", [4, 8])
def test_components_match_flood_fill(connectivity):
    rng = np.random.default_rng(11)
    for _ in range(10):
        mask = rng.random((23, 19)) < 0.45
        comps = connected_components(mask, connectivity)
        got = {frozenset(map(tuple, c.tolist())) for c in comps}
        assert got == flood_fill(mask, connectivity)


def test_component_labels_raster_order():
    mask = np.array([[0, 1, 0, 1], [1, 1, 0, 0], [0, 0, 0, 1]], bool)
    labels, n = label_components(mask, 4)
    assert n == 3
    assert labels.tolist() == [[0, 1, 0, 2], [1, 1, 0, 0], [0, 0, 0, 3]]
    _, n8 = label_components(np.eye(3, dtype=bool), 8)
    assert n8 == 1


def test_remove_small_blobs_threshold_boundary():
    mask = np.zeros((6, 8), bool)
    mask[0, 0:3] = True  # 3 px
    mask[3:5, 4:6] = True  # 4 px
    out = remove_small_blobs(mask, 4)
    assert out.sum() == 4 and out[3:5, 4:6].all()
    assert remove_small_blobs(mask, 3).sum() == 7


@settings(max_examples=40, deadline=None)
@given(arrays(bool, (12, 12)), st.integers(1, 10))
def test_surviving_blobs_are_large(mask, k):
    out = remove_small_blobs(mask, k)
    assert not np.any(out & ~mask)
    for comp in connected_components(out):
        assert len(comp) >= k


def test_generate_mask_single_species_agreement():
    cfg = plot_config(FieldConfig(), "crop", seed=5)
    frame, truth = generate_field(cfg)
    ndvi = compute_ndvi(frame[NIR], frame[RED])
    mask = generate_mask(ndvi, AutolabelConfig(min_blob_pixels=30, vegetation_class=CROP))
    assert set(np.unique(mask.labels)) <= {BG, CROP}
    assert (mask.labels == truth.labels).mean() >= 0.95


def test_generate_mask_weed_class():
    cfg = plot_config(FieldConfig(), "weed", seed=9)
    frame, truth = generate_field(cfg)
    mask = generate_mask(compute_ndvi(frame[NIR], frame[RED]), AutolabelConfig(min_blob_pixels=30, vegetation_class=WEED))
    assert set(np.unique(mask.labels)) <= {BG, WEED}
    assert (mask.labels == truth.labels).mean() >= 0.95


def test_config_validation():
    with pytest.raises(InvariantError):
        AutolabelConfig(vegetation_class=BG)
    with pytest.raises(InvariantError):
        AutolabelConfig(min_blob_pixels=0)
    with pytest.raises(InvariantError):
        AutolabelConfig(connectivity=6)
