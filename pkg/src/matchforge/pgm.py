"""Bit-exact binary 8-bit PGM (P5) reader and writer."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def _read_header_tokens(data: bytes):
    """Yield (token, next_offset) skipping whitespace and # comments."""
    i = 0
    n = len(data)
    while True:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        break
    start = i
    while i < n and not data[i : i + 1].isspace():
        i += 1
    if start == i:
        raise ValueError("truncated PGM header")
    return data[start:i], i


def read_pgm_size(path: Path | str) -> tuple[int, int]:
    """Return (width, height) from the header without decoding pixels."""
    with open(path, "rb") as fh:
        data = fh.read(256)
    magic, offset = _read_header_tokens(data)
    if magic != b"P5":
        raise ValueError(f"not a binary PGM file: magic {magic!r}")
    w_tok, consumed = _read_header_tokens(data[offset:])
    offset += consumed
    h_tok, _ = _read_header_tokens(data[offset:])
    return int(w_tok), int(h_tok)


def read_pgm(path: Path | str) -> np.ndarray:
    """Read an 8-bit P5 image into a (height, width) uint8 array."""
    data = Path(path).read_bytes()
    magic, i = _read_header_tokens(data)
    if magic != b"P5":
        raise ValueError(f"not a binary PGM file: magic {magic!r}")
    tokens = []
    offset = i
    for _ in range(3):
        tok, consumed = _read_header_tokens(data[offset:])
        tokens.append(tok)
        offset += consumed
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise ValueError("non-numeric PGM header fields") from None
    if width <= 0 or height <= 0:
        raise ValueError(f"bad PGM dimensions {width}x{height}")
    if not 0 < maxval <= 255:
        raise ValueError(f"only 8-bit PGM supported, maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    if offset >= len(data) or not data[offset : offset + 1].isspace():
        raise ValueError("missing raster separator")
    offset += 1
    expected = width * height
    raster = data[offset:]
    if len(raster) != expected:
        raise ValueError(f"raster size {len(raster)} != {expected}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path: Path | str, image: np.ndarray) -> None:
    """Write a (height, width) uint8 array as binary P5."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D grayscale")
    if img.dtype != np.uint8:
        if np.issubdtype(img.dtype, np.floating):
            img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
        else:
            img = np.clip(img, 0, 255).astype(np.uint8)
    h, w = img.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())
