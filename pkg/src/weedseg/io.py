"""Band, mask and render file I/O.

Bands go to binary PGM (P5, 8 or 16 bit) or grayscale PNG.  NDVI is stored
affinely remapped from [-1, 1] to [0, 1] and mapped back on read.  Masks are
8-bit grayscale PNGs holding class ids directly.
"""

from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ImageFormatError, InvariantError, MissingFileError
from .imgcore import NDVI, BandImage, LabelMask

_PGM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _parse_pgm_header(buf: bytes) -> tuple[int, int, int, int]:
    """Return ``(width, height, maxval, payload_offset)``."""
    if not buf.startswith(b"P5"):
        raise ImageFormatError("not a binary PGM (missing P5 magic)")
    pos = 2
    values = []
    for _ in range(3):
        m = _PGM_TOKEN.match(buf, pos)
        if m is None:
            raise ImageFormatError("malformed PGM header")
        tok = m.group(1)
        if not tok.isdigit():
            raise ImageFormatError(f"malformed PGM header token {tok!r}")
        values.append(int(tok))
        pos = m.end()
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(buf) or buf[pos : pos + 1] not in (b" ", b"\n", b"\r", b"\t"):
        raise ImageFormatError("malformed PGM header: missing separator before raster")
    width, height, maxval = values
    return width, height, maxval, pos + 1


def read_pgm(path: str | os.PathLike) -> tuple[np.ndarray, int]:
    """Read a P5 PGM; return the integer raster and its maxval."""
    buf = Path(path).read_bytes()
    width, height, maxval, offset = _parse_pgm_header(buf)
    if width < 1 or height < 1:
        raise ImageFormatError(f"PGM dimensions must be positive, got {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise ImageFormatError(f"unsupported PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = buf[offset : offset + need]
    if len(payload) < need:
        raise ImageFormatError(f"truncated PGM payload: {len(payload)} of {need} bytes")
    raster = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return raster.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def write_pgm(path: str | os.PathLike, raster: np.ndarray, maxval: int) -> None:
    raster = np.asarray(raster)
    h, w = raster.shape
    dtype = ">u2" if maxval > 255 else "u1"
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(raster.astype(dtype).tobytes())


def _read_gray_png(path) -> tuple[np.ndarray, int]:
    with Image.open(path) as im:
        if im.format != "PNG":
            raise ImageFormatError(f"{path}: expected PNG, found {im.format}")
        if im.mode == "L":
            return np.asarray(im, dtype=np.uint8), 255
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im)
            if arr.min() < 0 or arr.max() > 65535:
                raise ImageFormatError(f"{path}: sample range exceeds 16 bits")
            return arr.astype(np.uint16), 65535
        raise ImageFormatError(f"{path}: unsupported PNG mode {im.mode!r} (need 8/16-bit grayscale)")


def _check_exists(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise MissingFileError(f"no such file: {p}")
    return p


def read_band_image(path: str | os.PathLike, band: str) -> BandImage:
    """Read an 8/16-bit grayscale PGM or PNG as a band in [0, 1] (NDVI in [-1, 1])."""
    p = _check_exists(path)
    with open(p, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        raster, maxval = read_pgm(p)
    elif magic == b"\x89P":
        raster, maxval = _read_gray_png(p)
    else:
        raise ImageFormatError(f"{p}: unrecognised image format")
    data = raster.astype(np.float64) / maxval
    if band == NDVI:
        data = 2.0 * data - 1.0
    return BandImage(data, band)


def write_band_image(img: BandImage, path: str | os.PathLike, bit_depth: int = 16) -> None:
    """Quantize a band (round half up) and write it as PGM or PNG by extension."""
    if bit_depth not in (8, 16):
        raise ImageFormatError(f"bit depth must be 8 or 16, got {bit_depth}")
    data = img.data
    if data.min() < -1.0 or data.max() > 1.0:
        raise InvariantError(f"band {img.band!r} samples outside [-1, 1]")
    if img.band == NDVI:
        data = (data + 1.0) / 2.0
    maxval = 255 if bit_depth == 8 else 65535
    raster = np.floor(np.clip(data, 0.0, 1.0) * maxval + 0.5)
    raster = raster.astype(np.uint8 if bit_depth == 8 else np.uint16)
    path = Path(path)
    if path.suffix.lower() == ".png":
        Image.fromarray(raster).save(path, format="PNG")
    else:
        write_pgm(path, raster, maxval)


def write_label_mask(mask: LabelMask, path: str | os.PathLike) -> None:
    Image.fromarray(np.ascontiguousarray(mask.labels, dtype=np.uint8)).save(path, format="PNG")


def read_label_mask(path: str | os.PathLike) -> LabelMask:
    p = _check_exists(path)
    raster, maxval = _read_gray_png(p)
    if maxval != 255:
        raise ImageFormatError(f"{p}: label masks must be 8-bit")
    return LabelMask(raster)


def write_rgb(rgb: np.ndarray, path: str | os.PathLike) -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ImageFormatError(f"RGB image must be (H, W, 3), got {rgb.shape}")
    Image.fromarray(rgb).save(path, format="PNG")


def read_rgb(path: str | os.PathLike) -> np.ndarray:
    p = _check_exists(path)
    with Image.open(p) as im:
        if im.mode != "RGB":
            raise ImageFormatError(f"{p}: expected RGB PNG, got mode {im.mode!r}")
        return np.asarray(im, dtype=np.uint8)
