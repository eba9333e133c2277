"""Binary PPM (P6) and PGM (P5) codecs plus a minimal PNG encoder.

Netpbm keeps datasets readable everywhere and byte-exact across platforms;
PNG is only produced for browsers by the trial service.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np


class CorruptFileError(ValueError):
    """File exists but its magic, header, or payload is malformed."""


def encode_ppm(image: np.ndarray) -> bytes:
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("PPM payload must be (H, W, 3) uint8")
    h, w = image.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + image.tobytes()


def write_ppm(path, image: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_ppm(image))


def encode_pgm(mask: np.ndarray, maxval: int = 4) -> bytes:
    if mask.ndim != 2 or mask.dtype != np.uint8:
        raise ValueError("PGM payload must be (H, W) uint8")
    if mask.max(initial=0) > maxval:
        raise ValueError(f"PGM values exceed maxval {maxval}")
    h, w = mask.shape
    return b"P5\n%d %d\n%d\n" % (w, h, maxval) + mask.tobytes()


def write_pgm(path, mask: np.ndarray, maxval: int = 4) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(mask, maxval))


def _parse_header(data: bytes, path) -> tuple[bytes, int, int, int, int]:
    """Returns (magic, width, height, maxval, payload offset)."""
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise CorruptFileError(f"{path}: not a binary PGM/PPM file")
    magic = data[:2]
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise CorruptFileError(f"{path}: malformed header token {token!r}")
        fields.append(int(token))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = fields
    if w <= 0 or h <= 0 or not 0 < maxval <= 255:
        raise CorruptFileError(f"{path}: bad dimensions {w}x{h} maxval {maxval}")
    return magic, w, h, maxval, pos


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, pos = _parse_header(data, path)
    if magic != b"P6":
        raise CorruptFileError(f"{path}: expected P6, found {magic.decode()}")
    payload = data[pos : pos + w * h * 3]
    if len(payload) != w * h * 3:
        raise CorruptFileError(f"{path}: truncated pixel payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3).copy()


def read_pgm(path) -> tuple[np.ndarray, int]:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, w, h, maxval, pos = _parse_header(data, path)
    if magic != b"P5":
        raise CorruptFileError(f"{path}: expected P5, found {magic.decode()}")
    payload = data[pos : pos + w * h]
    if len(payload) != w * h:
        raise CorruptFileError(f"{path}: truncated pixel payload")
    mask = np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()
    if mask.max(initial=0) > maxval:
        raise CorruptFileError(f"{path}: pixel value exceeds maxval {maxval}")
    return mask, maxval


def encode_png(image: np.ndarray) -> bytes:
    """8-bit RGB PNG with no filtering; enough for browser display."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("PNG payload must be (H, W, 3) uint8")
    h, w = image.shape[:2]

    def chunk(tag: bytes, body: bytes) -> bytes:
        return (
            struct.pack(">I", len(body))
            + tag
            + body
            + struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF)
        )

    ihdr = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    raw = b"".join(b"\x00" + image[r].tobytes() for r in range(h))
    return (
        b"\x89PNG\r\n\x1a\n"
        + chunk(b"IHDR", ihdr)
        + chunk(b"IDAT", zlib.compress(raw, 9))
        + chunk(b"IEND", b"")
    )
