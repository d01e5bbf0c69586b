import math

import numpy as np
import pytest

from weedseg.autolabel import gaussian_filter
from weedseg.errors import (
    DegenerateImageError,
    EmptyIntersectionError,
    InvariantError,
    NoSimilarityError,
    SchemaError,
    ShapeMismatchError,
)
from weedseg.imgcore import NIR, RED, BandImage, MultispectralFrame
from weedseg.register import (
    CameraIntrinsics,
    RigCalibration,
    Transform2D,
    angle_grid,
    apply_transform,
    calibrate_rig,
    correlation_score,
    estimate_rigid,
    estimate_translation,
    map_points,
    ncc_at,
    undistort,
    warp_and_crop,
    warp_to_reference,
)
from weedseg.synth import FieldConfig, generate_field


def texture(rng, size=96, sigma=2.0):
    return gaussian_filter(rng.standard_normal((size, size)), sigma)


def test_integer_shift_exact():
    rng = np.random.default_rng(0)
    ref = texture(rng)
    mov = np.roll(ref, (5, 3), axis=(0, 1))  # mov(p + (3, 5)) == ref(p)
    t = estimate_translation(BandImage(ref), BandImage(mov))
    assert abs(t.tx - 3) < 0.01 and abs(t.ty - 5) < 0.01 and t.theta == 0.0


@pytest.mark.parametrize("method", ["phase", "ncc"])
def test_subpixel_shift(method):
    rng = np.random.default_rng(1)
    ref = texture(rng, 64)
    truth = Transform2D(-7.3, 2.6)
    mov = apply_transform(ref, truth)
    t = estimate_translation(BandImage(ref), BandImage(mov), method=method)
    assert abs(t.tx - truth.tx) < 0.1 and abs(t.ty - truth.ty) < 0.1


def test_phase_and_exhaustive_agree_on_small_images():
    rng = np.random.default_rng(2)
    ref = texture(rng, 48)
    mov = apply_transform(ref, Transform2D(4.0, -6.0))
    a = estimate_translation(BandImage(ref), BandImage(mov), method="phase")
    b = estimate_translation(BandImage(ref), BandImage(mov), method="ncc")
    assert abs(a.tx - b.tx) < 1e-9 and abs(a.ty - b.ty) < 1e-9


def test_ncc_at_matches_direct_overlap():
    rng = np.random.default_rng(3)
    ref = rng.random((20, 24))
    mov = rng.random((20, 24))
    dx, dy = 3, -2
    a = ref[2:20, 0:21].ravel()
    b = mov[0:18, 3:24].ravel()
    expect = np.corrcoef(a, b)[0, 1]
    assert ncc_at(ref, mov, dx, dy) == pytest.approx(expect, abs=1e-12)


def test_rigid_rotation_and_shift():
    rng = np.random.default_rng(4)
    ref = texture(rng)
    truth = Transform2D(2.0, 0.0, math.radians(1.0))
    t = estimate_rigid(BandImage(ref), BandImage(apply_transform(ref, truth)))
    assert abs(t.degrees - 1.0) < 0.25
    assert math.hypot(t.tx - 2.0, t.ty) < 0.5


def test_empty_angle_range_is_translation_only():
    rng = np.random.default_rng(5)
    ref = texture(rng)
    mov = apply_transform(ref, Transform2D(1.5, -2.5))
    t = estimate_rigid(BandImage(ref), BandImage(mov), angle_search=(0, 0, 0))
    assert t.theta == 0.0 and abs(t.tx - 1.5) < 0.1


def test_angle_grid():
    assert angle_grid((-1, 1, 0.5)).tolist() == [-1, -0.5, 0, 0.5, 1]
    assert angle_grid((0, 0, 0)).size == 0
    assert angle_grid((1, -1, 0.5)).size == 0


def test_constant_image_is_degenerate():
    with pytest.raises(DegenerateImageError):
        estimate_translation(BandImage(np.ones((32, 32))), BandImage(np.ones((32, 32))))


def test_unrelated_images_have_no_similarity():
    rng = np.random.default_rng(6)
    a = BandImage(rng.standard_normal((64, 64)))
    b = BandImage(rng.standard_normal((64, 64)))
    with pytest.raises(NoSimilarityError, match="no similarity"):
        estimate_translation(a, b)


def test_shape_mismatch_and_bad_method():
    with pytest.raises(ShapeMismatchError):
        estimate_translation(BandImage(np.eye(8)), BandImage(np.eye(9)))
    rng = np.random.default_rng(0)
    a = BandImage(texture(rng, 32, 1.0))
    with pytest.raises(InvariantError):
        estimate_translation(a, a, method="bogus")
    with pytest.raises(InvariantError):
        estimate_translation(a, a, prefilter="bogus")


def test_warp_inverts_apply_in_interior():
    rng = np.random.default_rng(7)
    ref = texture(rng, 64, 3.0)
    t = Transform2D(2.3, -1.7, math.radians(1.5))
    back, valid = warp_to_reference(apply_transform(ref, t), t)
    inner = valid.copy()
    inner[:6], inner[-6:], inner[:, :6], inner[:, -6:] = False, False, False, False
    # two bilinear resamplings of a smooth texture
    assert np.abs(back[inner] - ref[inner]).max() < 0.02 * np.ptp(ref)


def test_map_points_centre_fixed_under_rotation():
    x, y = map_points(Transform2D(0, 0, 0.3), np.array([4.5]), np.array([3.5]), (8, 10))
    assert x[0] == pytest.approx(4.5) and y[0] == pytest.approx(3.5)


def test_transform_validation():
    with pytest.raises(InvariantError):
        Transform2D(0, 0, 4.0)
    assert Transform2D().is_identity
    assert type(Transform2D(np.float64(1.0)).tx) is float


def test_undistort_identity_is_bit_exact():
    rng = np.random.default_rng(8)
    img = BandImage(rng.random((10, 12)), NIR)
    out = undistort(img, CameraIntrinsics.centered(12, 10))
    assert np.array_equal(out.data, img.data) and out.band == NIR


def test_undistort_keeps_principal_point():
    rng = np.random.default_rng(9)
    img = BandImage(rng.random((11, 11)), NIR)
    out = undistort(img, CameraIntrinsics.centered(11, 11, focal=10.0, k1=0.1, k2=0.01))
    assert out.data[5, 5] == img.data[5, 5]
    assert not np.array_equal(out.data, img.data)


def test_cross_band_calibration_with_gradient_prefilter():
    cfg = FieldConfig(width=128, height=128, seed=3, band_misalignment=Transform2D(3.0, -2.0, math.radians(0.5)))
    frame, _ = generate_field(cfg)
    cal = calibrate_rig(frame, reference=NIR, margin=1)
    t = cal.transforms[RED]
    assert math.hypot(t.tx - 3.0, t.ty + 2.0) < 0.5
    assert abs(t.degrees - 0.5) < 0.25
    aligned = cal.apply(frame)
    assert aligned.band_names == [NIR, RED]
    assert correlation_score(frame[NIR], frame[RED], t, prefilter="gradient") > correlation_score(
        frame[NIR], frame[RED], Transform2D(), prefilter="gradient"
    )


def test_calibration_json_round_trip(tmp_path):
    cal = RigCalibration(NIR, {RED: Transform2D(1.0, 2.0, 0.01)}, CameraIntrinsics.centered(8, 8, 9.0, 0.1), {"r": 16}, 2)
    cal.save(tmp_path / "c.json")
    assert RigCalibration.load(tmp_path / "c.json") == cal


def test_calibration_bad_version():
    with pytest.raises(SchemaError):
        RigCalibration.from_json({"version": 7, "reference": NIR, "bands": {}})


def test_warp_and_crop_region_and_errors():
    rng = np.random.default_rng(10)
    nir = BandImage(rng.random((20, 20)), NIR)
    red = BandImage(rng.random((20, 20)), RED)
    frame = MultispectralFrame((nir, red))
    out, rect = warp_and_crop(frame, {RED: Transform2D(3.0, -2.0)}, return_rect=True)
    y0, y1, x0, x1 = rect
    assert out.shape == (y1 - y0, x1 - x0) == (18, 17)
    np.testing.assert_array_equal(out[NIR].data, nir.data[y0:y1, x0:x1])
    # integer shift: the Red crop is an exact copy of the shifted pixels
    np.testing.assert_allclose(out[RED].data, red.data[y0 - 2 : y1 - 2, x0 + 3 : x1 + 3], atol=1e-12)
    with pytest.raises(SchemaError):
        warp_and_crop(frame, {})
    with pytest.raises(EmptyIntersectionError):
        warp_and_crop(frame, {RED: Transform2D(3.0, -2.0)}, margin=9)
