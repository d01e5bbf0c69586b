import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from weedseg.errors import BandTagError, ImageFormatError, InvariantError, MissingFileError, ShapeMismatchError
from weedseg.imgcore import (
    CLASS_COLORS,
    NDVI,
    NIR,
    RED,
    BandImage,
    LabelMask,
    MultispectralFrame,
    ProbabilityMap,
    compute_ndvi,
    network_input,
    quantize_unit,
    render_mask,
    render_probability,
)
from weedseg.io import (
    read_band_image,
    read_label_mask,
    read_pgm,
    read_rgb,
    write_band_image,
    write_label_mask,
    write_pgm,
    write_rgb,
)


def test_ndvi_worked_values():
    nir = BandImage(np.array([[0.8, 0.3, 0.0]]), NIR)
    red = BandImage(np.array([[0.2, 0.3, 0.0]]), RED)
    out = compute_ndvi(nir, red)
    assert out.band == NDVI
    np.testing.assert_allclose(out.data, [[0.6, 0.0, 0.0]], atol=1e-15)


@given(
    arrays(np.float64, (5, 7), elements=st.floats(0, 1)),
    arrays(np.float64, (5, 7), elements=st.floats(0, 1)),
)
def test_ndvi_bounded(a, b):
    out = compute_ndvi(BandImage(a, NIR), BandImage(b, RED)).data
    assert np.all(out >= -1) and np.all(out <= 1)


def test_ndvi_rejects_wrong_tags_and_shapes():
    a = BandImage(np.ones((3, 3)), NIR)
    with pytest.raises(BandTagError):
        compute_ndvi(a, BandImage(np.ones((3, 3)), NIR))
    with pytest.raises(ShapeMismatchError):
        compute_ndvi(a, BandImage(np.ones((3, 4)), RED))


def test_types_validate():
    with pytest.raises(InvariantError):
        BandImage(np.array([[np.nan]]), NIR)
    with pytest.raises(InvariantError):
        BandImage(np.ones(4), NIR)
    with pytest.raises(InvariantError):
        LabelMask(np.array([[0, 3]]))
    with pytest.raises(InvariantError):
        ProbabilityMap(np.full((3, 2, 2), 0.3))
    with pytest.raises(ShapeMismatchError):
        MultispectralFrame((BandImage(np.ones((2, 2)), NIR), BandImage(np.ones((2, 3)), RED)))
    with pytest.raises(InvariantError):
        MultispectralFrame((BandImage(np.ones((2, 2)), NIR), BandImage(np.ones((2, 2)), NIR)))


def test_values_are_read_only():
    b = BandImage(np.zeros((2, 2)), NIR)
    with pytest.raises(ValueError):
        b.data[0, 0] = 1.0


def test_frame_lookup_missing_band():
    f = MultispectralFrame((BandImage(np.ones((2, 2)), NIR),), "f0")
    with pytest.raises(BandTagError, match="Red"):
        f[RED]


def test_network_input_channel_order_and_ndvi():
    nir = np.full((4, 4), 0.6)
    red = np.full((4, 4), 0.2)
    f = MultispectralFrame((BandImage(red, RED), BandImage(nir, NIR)))
    x = network_input(f, 3)
    assert x.shape == (3, 4, 4)
    np.testing.assert_array_equal(x[0], nir)
    np.testing.assert_array_equal(x[1], red)
    np.testing.assert_allclose(x[2], 0.5)
    assert network_input(f, 1).shape == (1, 4, 4)


def test_quantize_rounds_half_up():
    # 0.5/255 sits exactly between 0 and 1
    assert quantize_unit(np.array([0.5 / 255, 1.5 / 255, 0.0, 1.0])).tolist() == [1, 2, 0, 255]


def test_render_colours():
    m = LabelMask(np.array([[0, 1, 2]]))
    rgb = render_mask(m)
    assert rgb.tolist() == [[[0, 0, 255], [255, 0, 0], [0, 255, 0]]]
    assert CLASS_COLORS.dtype == np.uint8


def test_render_probability_channels():
    p = np.zeros((3, 1, 2))
    p[0, 0, 0] = 1.0
    p[1, 0, 1] = 0.5
    p[2, 0, 1] = 0.5
    rgb = render_probability(ProbabilityMap(p))
    assert rgb[0, 0].tolist() == [0, 0, 255]
    assert rgb[0, 1].tolist() == [128, 128, 0]


@pytest.mark.parametrize("bits", [8, 16])
@pytest.mark.parametrize("ext", [".pgm", ".png"])
def test_band_round_trip_within_quantization(tmp_path, bits, ext):
    rng = np.random.default_rng(3)
    data = rng.random((9, 13))
    path = tmp_path / f"b{ext}"
    write_band_image(BandImage(data, NIR), path, bits)
    back = read_band_image(path, NIR)
    maxval = 255 if bits == 8 else 65535
    assert np.abs(back.data - data).max() <= 0.5 / maxval + 1e-12


def test_ndvi_remap_round_trip(tmp_path):
    data = np.array([[-1.0, -0.25, 0.0, 0.7, 1.0]])
    write_band_image(BandImage(data, NDVI), tmp_path / "n.pgm", 16)
    raster, maxval = read_pgm(tmp_path / "n.pgm")
    assert raster[0, 0] == 0 and raster[0, -1] == 65535 and raster[0, 2] == 32768
    back = read_band_image(tmp_path / "n.pgm", NDVI)
    assert np.abs(back.data - data).max() <= 1.0 / 65535 + 1e-12


def test_pgm_bytes_exact(tmp_path):
    write_pgm(tmp_path / "a.pgm", np.array([[1, 258]], dtype=np.uint16), 65535)
    assert (tmp_path / "a.pgm").read_bytes() == b"P5\n2 1\n65535\n\x00\x01\x01\x02"


def test_pgm_header_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 1\n# another\n255\n\x07\x09")
    raster, maxval = read_pgm(p)
    assert maxval == 255 and raster.tolist() == [[7, 9]]


@pytest.mark.parametrize(
    "payload",
    [
        b"P6\n1 1\n255\n\x00",
        b"P5\n2 2\n255\n\x00",
        b"P5\n0 2\n255\n",
        b"P5\n1 1\n70000\n\x00\x00",
        b"P5\nx 1\n255\n\x00",
    ],
)
def test_pgm_malformed(tmp_path, payload):
    p = tmp_path / "bad.pgm"
    p.write_bytes(payload)
    with pytest.raises(ImageFormatError):
        read_pgm(p)


def test_unknown_format_and_missing(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"hello")
    with pytest.raises(ImageFormatError):
        read_band_image(tmp_path / "x.bin", NIR)
    with pytest.raises(MissingFileError):
        read_band_image(tmp_path / "none.pgm", NIR)


def test_mask_and_rgb_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    m = LabelMask(rng.integers(0, 3, (6, 5)))
    write_label_mask(m, tmp_path / "m.png")
    np.testing.assert_array_equal(read_label_mask(tmp_path / "m.png").labels, m.labels)
    rgb = rng.integers(0, 256, (4, 3, 3), dtype=np.uint8)
    write_rgb(rgb, tmp_path / "r.png")
    np.testing.assert_array_equal(read_rgb(tmp_path / "r.png"), rgb)


def test_mask_rejects_rgb_png(tmp_path):
    write_rgb(np.zeros((2, 2, 3), np.uint8), tmp_path / "r.png")
    with pytest.raises(ImageFormatError):
        read_label_mask(tmp_path / "r.png")


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint16, st.tuples(st.integers(1, 6), st.integers(1, 6))))
def test_pgm16_round_trip_property(tmp_path_factory, raster):
    p = tmp_path_factory.mktemp("pgm") / "r.pgm"
    write_pgm(p, raster, 65535)
    back, maxval = read_pgm(p)
    assert maxval == 65535
    np.testing.assert_array_equal(back, raster)
