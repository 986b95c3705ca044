"""Minimal binary PGM (P5) reader/writer.

Depth images are stored as 16-bit PGMs (maxval 65535, big-endian sample
order per the PGM convention, values in millimeters); intensity images as
8-bit PGMs.  Comments (#) are allowed anywhere in the header.
"""

import numpy as np

from fingerspell.errors import FormatError


def _read_token(data: bytes, pos: int, path) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    if pos >= n:
        raise FormatError(f"{path}: truncated PGM header")
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    return data[start:pos], pos


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM; returns uint8 (maxval < 256) or uint16."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, pos = _read_token(data, 0, path)
    if magic != b"P5":
        raise FormatError(f"{path}: not a binary PGM (magic {magic!r})")
    fields = []
    for _ in range(3):
        token, pos = _read_token(data, pos, path)
        try:
            fields.append(int(token))
        except ValueError:
            raise FormatError(f"{path}: non-numeric PGM header field {token!r}") from None
    width, height, maxval = fields
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid PGM dimensions/maxval {width}x{height}/{maxval}")
    pos += 1  # single whitespace byte after maxval
    if maxval < 256:
        expected = width * height
        dtype = np.uint8
    else:
        expected = width * height * 2
        dtype = ">u2"
    raw = data[pos : pos + expected]
    if len(raw) != expected:
        raise FormatError(f"{path}: truncated PGM pixel data")
    img = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    return img.astype(np.uint16) if maxval >= 256 else img.copy()


def write_pgm(path, img: np.ndarray) -> None:
    """Write an integer image as binary PGM (8-bit if it is uint8, else 16-bit)."""
    if not np.issubdtype(img.dtype, np.integer):
        raise ValueError("PGM requires an integer image")
    if img.min() < 0:
        raise ValueError("PGM values must be non-negative")
    if img.dtype == np.uint8:
        maxval, payload = 255, img.tobytes()
    else:
        if img.max() > 65535:
            raise ValueError("PGM values must fit 16 bits")
        maxval, payload = 65535, img.astype(">u2").tobytes()
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)
