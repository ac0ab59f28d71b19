"""Reader/writer for TGRD token-grid files.

Layout, all little-endian, no padding::

    b"TGRD" | u32 version (=1) | u32 height | u32 width | u32 dim | f32 * (h*w*d)
"""
from __future__ import annotations

import os
import struct

import numpy as np

from .errors import TgrdFormatError
from .grid import TokenGrid

MAGIC = b"TGRD"
VERSION = 1
_HEADER = struct.Struct("<4s4I")
HEADER_SIZE = _HEADER.size


def encode(grid: TokenGrid) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, grid.height, grid.width, grid.dim)
    return header + grid.data.astype("<f4", copy=False).tobytes()


def decode(buf: bytes) -> TokenGrid:
    if len(buf) < 4:
        raise TgrdFormatError(f"truncated magic: expected 4 bytes, got {len(buf)}", len(buf))
    if buf[:4] != MAGIC:
        raise TgrdFormatError(f"bad magic {bytes(buf[:4])!r}, expected {MAGIC!r}", 0)
    if len(buf) < HEADER_SIZE:
        raise TgrdFormatError(
            f"truncated header: expected {HEADER_SIZE} bytes, got {len(buf)}", len(buf)
        )
    _, version, height, width, dim = _HEADER.unpack_from(buf)
    if version != VERSION:
        raise TgrdFormatError(f"unsupported version {version}, expected {VERSION}", 4)
    for name, value, offset in (("height", height, 8), ("width", width, 12), ("dim", dim, 16)):
        if value == 0:
            raise TgrdFormatError(f"{name} must be positive", offset)
    expected = HEADER_SIZE + 4 * height * width * dim
    if len(buf) != expected:
        kind = "truncated payload" if len(buf) < expected else "trailing bytes"
        raise TgrdFormatError(
            f"{kind}: expected file length {expected} bytes, actual {len(buf)}",
            min(len(buf), expected),
        )
    values = np.frombuffer(buf, dtype="<f4", offset=HEADER_SIZE)
    return TokenGrid(values.astype(np.float32).reshape(height, width, dim))


def read(path: str | os.PathLike) -> TokenGrid:
    with open(path, "rb") as f:
        return decode(f.read())


def write(path: str | os.PathLike, grid: TokenGrid) -> None:
    with open(path, "wb") as f:
        f.write(encode(grid))
