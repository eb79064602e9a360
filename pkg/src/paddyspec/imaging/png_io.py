"""Minimal PNG codec for 8/16-bit grayscale and RGB rasters.

Writing always uses filter type 0 (None) with zlib compression; reading
understands all five scanline filters but rejects palette, alpha, and
interlaced files. 16-bit samples follow the PNG big-endian convention.
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class PngError(ValueError):
    """Unreadable or unsupported PNG content."""


def _chunk(tag: bytes, payload: bytes) -> bytes:
    return (struct.pack(">I", len(payload)) + tag + payload
            + struct.pack(">I", zlib.crc32(tag + payload)))


def write_png(path, arr: np.ndarray) -> None:
    """Write a (H, W) or (H, W, 3) uint8/uint16 array as a PNG file."""
    if arr.ndim == 2:
        color_type = 0
    elif arr.ndim == 3 and arr.shape[2] == 3:
        color_type = 2
    else:
        raise PngError(f"write_png: expected (H, W) or (H, W, 3), got {arr.shape}")
    if arr.dtype == np.uint8:
        depth = 8
    elif arr.dtype == np.uint16:
        depth = 16
    else:
        raise PngError(f"write_png: expected uint8 or uint16, got {arr.dtype}")

    h, w = arr.shape[:2]
    if depth == 16:
        payload = arr.astype(">u2").tobytes()
    else:
        payload = np.ascontiguousarray(arr).tobytes()
    bytes_per_row = w * (1 if color_type == 0 else 3) * (depth // 8)
    rows = np.frombuffer(payload, dtype=np.uint8).reshape(h, bytes_per_row)
    raw = np.concatenate([np.zeros((h, 1), dtype=np.uint8), rows], axis=1).tobytes()

    ihdr = struct.pack(">IIBBBBB", w, h, depth, color_type, 0, 0, 0)
    data = (_SIGNATURE + _chunk(b"IHDR", ihdr)
            + _chunk(b"IDAT", zlib.compress(raw, 6)) + _chunk(b"IEND", b""))
    Path(path).write_bytes(data)


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter(raw: np.ndarray, h: int, stride: int, bpp: int) -> np.ndarray:
    """Reverse per-row filtering; raw is (h, 1 + stride) uint8."""
    out = np.zeros((h, stride), dtype=np.uint8)
    for y in range(h):
        ftype = int(raw[y, 0])
        row = raw[y, 1:].astype(np.int32)
        prev = out[y - 1].astype(np.int32) if y else np.zeros(stride, dtype=np.int32)
        if ftype == 0:
            rec = row
        elif ftype == 1:      # Sub: cumulative within each byte lane
            rec = row.copy()
            for i in range(bpp, stride):
                rec[i] = (rec[i] + rec[i - bpp]) & 0xFF
        elif ftype == 2:      # Up
            rec = (row + prev) & 0xFF
        elif ftype == 3:      # Average
            rec = row.copy()
            for i in range(stride):
                left = rec[i - bpp] if i >= bpp else 0
                rec[i] = (rec[i] + ((left + prev[i]) >> 1)) & 0xFF
        elif ftype == 4:      # Paeth
            rec = row.copy()
            for i in range(stride):
                left = int(rec[i - bpp]) if i >= bpp else 0
                upleft = int(prev[i - bpp]) if i >= bpp else 0
                rec[i] = (rec[i] + _paeth(left, int(prev[i]), upleft)) & 0xFF
        else:
            raise PngError(f"unsupported scanline filter {ftype}")
        out[y] = rec.astype(np.uint8)
    return out


def read_png(path) -> np.ndarray:
    """Read a PNG into a uint8/uint16 array of shape (H, W) or (H, W, 3)."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise PngError(f"cannot read {path}: {exc}") from exc
    if not data.startswith(_SIGNATURE):
        raise PngError(f"{path}: not a PNG file")

    pos = len(_SIGNATURE)
    ihdr = None
    idat = bytearray()
    while pos + 8 <= len(data):
        (length,) = struct.unpack(">I", data[pos:pos + 4])
        tag = data[pos + 4:pos + 8]
        payload = data[pos + 8:pos + 8 + length]
        pos += 12 + length
        if tag == b"IHDR":
            ihdr = struct.unpack(">IIBBBBB", payload)
        elif tag == b"IDAT":
            idat.extend(payload)
        elif tag == b"IEND":
            break
    if ihdr is None:
        raise PngError(f"{path}: missing IHDR chunk")

    w, h, depth, color_type, compression, filt, interlace = ihdr
    if depth not in (8, 16):
        raise PngError(f"{path}: unsupported bit depth {depth} (need 8 or 16)")
    if color_type not in (0, 2):
        raise PngError(f"{path}: unsupported color type {color_type} "
                       "(need grayscale or RGB)")
    if interlace:
        raise PngError(f"{path}: interlaced PNG not supported")

    channels = 1 if color_type == 0 else 3
    bpp = channels * (depth // 8)
    stride = w * bpp
    raw = np.frombuffer(zlib.decompress(bytes(idat)), dtype=np.uint8)
    if raw.size != h * (stride + 1):
        raise PngError(f"{path}: truncated image data")
    rows = _unfilter(raw.reshape(h, stride + 1), h, stride, bpp)

    if depth == 16:
        arr = rows.reshape(h, -1).view(">u2").astype(np.uint16)
        arr = arr.reshape(h, w, channels)
    else:
        arr = rows.reshape(h, w, channels)
    return arr[:, :, 0] if channels == 1 else arr
