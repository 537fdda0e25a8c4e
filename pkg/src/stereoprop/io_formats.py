"""Bit-exact readers and writers for the dataset file formats.

PFM (Middlebury flavor): ``Pf``/``PF`` magic, ``width height`` line, scale
line whose sign encodes byte order (negative = little-endian), float32
samples stored bottom-up.  KITTI disparity: 16-bit grayscale PNG holding
round(disparity * 256), zero meaning invalid.  Normal maps: 48-bit RGB PNG
with channel = round((n + 1) / 2 * 65535).
"""

from __future__ import annotations

import numpy as np
import cv2

from .errors import (
    DecodeError,
    MalformedHeader,
    NotSixteenBit,
    TruncatedPayload,
    UnsupportedChannelCount,
    ZeroScale,
)
from .grid import DisparityMap, Grid, Mask, NormalMap

_WHITESPACE = b" \t\n\r\f\v"


def _next_token(data: bytes, pos: int) -> tuple:
    while pos < len(data) and data[pos : pos + 1] in _WHITESPACE:
        pos += 1
    start = pos
    while pos < len(data) and data[pos : pos + 1] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise MalformedHeader("unexpected end of header")
    return data[start:pos], pos


def _parse_pfm(data: bytes):
    try:
        magic, pos = _next_token(data, 0)
    except MalformedHeader:
        raise MalformedHeader("empty PFM stream")
    if magic == b"PF":
        channels = 3
    elif magic == b"Pf":
        channels = 1
    else:
        raise MalformedHeader(f"bad PFM magic {magic!r}")
    wtok, pos = _next_token(data, pos)
    htok, pos = _next_token(data, pos)
    stok, pos = _next_token(data, pos)
    try:
        width = int(wtok)
        height = int(htok)
        scale = float(stok)
    except ValueError as exc:
        raise MalformedHeader(f"non-numeric PFM dimensions/scale: {exc}")
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad PFM dimensions {width}x{height}")
    if scale == 0.0:
        raise ZeroScale("PFM scale must be nonzero")
    pos += 1  # single whitespace byte separates header from payload
    count = width * height * channels
    payload = data[pos : pos + 4 * count]
    if len(payload) < 4 * count:
        raise TruncatedPayload(f"expected {4 * count} payload bytes, got {len(payload)}")
    dtype = "<f4" if scale < 0 else ">f4"
    values = np.frombuffer(payload, dtype=dtype, count=count).astype(np.float64)
    return values.reshape(height, width, channels)[::-1], scale


def read_pfm(data: bytes) -> tuple:
    """Decode PFM bytes into a top-down Grid and the stored scale factor.

    Rejects payloads with NaN/Inf samples; use read_pfm_masked for ground
    truth files that mark invalid pixels with infinity.
    """
    rows, scale = _parse_pfm(data)
    if not np.all(np.isfinite(rows)):
        raise MalformedHeader("payload contains non-finite samples; use read_pfm_masked")
    return Grid(rows), scale


def read_pfm_masked(data: bytes) -> tuple:
    """Decode PFM bytes into (Grid, scale, valid Mask).

    Non-finite samples (the Middlebury convention for missing disparities)
    are zeroed and reported through the mask instead.
    """
    rows, scale = _parse_pfm(data)
    finite = np.all(np.isfinite(rows), axis=2)
    rows = np.where(finite[:, :, None], rows, 0.0)
    return Grid(rows), scale, Mask.from_bools(finite)


def write_pfm(grid: Grid, scale: float = -1.0) -> bytes:
    """Encode a 1- or 3-channel grid as PFM; scale sign selects byte order."""
    if grid.channels == 1:
        magic = b"Pf"
    elif grid.channels == 3:
        magic = b"PF"
    else:
        raise UnsupportedChannelCount(f"PFM stores 1 or 3 channels, not {grid.channels}")
    if scale == 0.0:
        raise ZeroScale("PFM scale must be nonzero")
    header = magic + b"\n" + f"{grid.width} {grid.height}\n{scale}\n".encode("ascii")
    dtype = "<f4" if scale < 0 else ">f4"
    payload = grid.data[::-1].astype(dtype).tobytes()
    return header + payload


def _decode_png(data: bytes) -> np.ndarray:
    arr = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise DecodeError("byte stream is not a decodable image")
    return arr


def _encode_png(arr: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".png", arr)
    if not ok:
        raise DecodeError("PNG encoding failed")
    return buf.tobytes()


def read_kitti_disparity(data: bytes) -> tuple:
    """Decode a KITTI disparity PNG into (DisparityMap, valid Mask)."""
    arr = _decode_png(data)
    if arr.dtype != np.uint16:
        raise NotSixteenBit(f"expected 16-bit samples, got {arr.dtype}")
    if arr.ndim != 2:
        raise NotSixteenBit("expected a single-channel grayscale PNG")
    disparity = arr.astype(np.float64) / 256.0
    valid = arr != 0
    return DisparityMap.from_array(disparity), Mask.from_bools(valid)


def write_kitti_disparity(d: DisparityMap, valid: Mask) -> bytes:
    """Encode disparity * 256 as 16-bit PNG; invalid pixels store zero."""
    if d.values.shape != valid.values.shape:
        raise ValueError("disparity and mask dimensions differ")
    samples = np.clip(np.round(d.values * 256.0), 0, 65535).astype(np.uint16)
    samples = np.where(valid.bools, samples, np.uint16(0))
    return _encode_png(samples)


def write_normal_png(normals: NormalMap) -> bytes:
    """Encode unit normals as 48-bit RGB PNG, channel = round((n+1)/2 * 65535)."""
    q = np.clip(np.round((normals.vectors + 1.0) / 2.0 * 65535.0), 0, 65535)
    q = q.astype(np.uint16)
    return _encode_png(q[:, :, ::-1])  # cv2 writes BGR order


def read_normal_png(data: bytes) -> Grid:
    """Decode a 48-bit normal PNG to raw dequantized vectors in [-1, 1].

    Values are within 1/65535 of the encoded normals per channel but not
    exactly unit length; renormalize (NormalMap.from_array(..., True)) when
    the unit invariant is needed.
    """
    arr = _decode_png(data)
    if arr.dtype != np.uint16:
        raise NotSixteenBit(f"expected 16-bit samples, got {arr.dtype}")
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise NotSixteenBit("expected a three-channel PNG")
    rgb = arr[:, :, ::-1].astype(np.float64)
    return Grid(rgb / 65535.0 * 2.0 - 1.0)


def write_mask_png(mask: Mask) -> bytes:
    """Binary mask as 8-bit PNG, 255 for set pixels."""
    return _encode_png((mask.bools * np.uint8(255)))


def read_mask_png(data: bytes) -> Mask:
    arr = _decode_png(data)
    if arr.ndim != 2:
        raise DecodeError("expected a single-channel mask PNG")
    return Mask.from_bools(arr > 0)
