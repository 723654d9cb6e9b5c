"""Grid containers, elementwise arithmetic, block pooling, and lossless file I/O.

Conventions used throughout the package: arrays are row-major with the origin
at the top-left corner, ``u`` indexes columns and ``v`` indexes rows. Depth
maps are stored as PFM (lossless 32-bit float), images and masks as 16-bit
PGM for visual inspection.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


class PFMError(ValueError):
    """Malformed PFM file. ``offset`` is the byte position of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _frozen(arr: np.ndarray, dtype=np.float64) -> np.ndarray:
    # Always copy so freezing never reaches back into the caller's buffer.
    out = np.array(arr, dtype=dtype, order="C", copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ImageGrid:
    """H×W×C scalar field with values in [0, 1].

    Values are clamped into [0, 1] at construction; non-finite input is
    rejected. Instances are immutable.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"ImageGrid expects H×W×C with C in (1, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ImageGrid values must be finite")
        object.__setattr__(self, "data", _frozen(np.clip(arr, 0.0, 1.0)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class DepthMap:
    """H×W per-pixel depth in meters. All values strictly positive and finite."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"DepthMap expects an H×W array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("DepthMap values must be finite")
        if not np.all(arr > 0.0):
            raise ValueError("DepthMap values must be strictly positive")
        object.__setattr__(self, "data", _frozen(arr))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """H×W mask with every element in {0, 1}."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"BinaryMask expects an H×W array, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("BinaryMask elements must be 0 or 1")
        object.__setattr__(self, "data", _frozen(arr, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def fraction_set(self) -> float:
        return float(self.data.mean())


_ELEMENTWISE_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "min": np.minimum,
}


def elementwise(op: str, a: ImageGrid, b: ImageGrid) -> ImageGrid:
    """Apply ``op`` (add | sub | mul | min) pixelwise to two equal-shape grids.

    The result is re-clamped to [0, 1] by ImageGrid construction.
    """
    if op not in _ELEMENTWISE_OPS:
        raise ValueError(f"unknown elementwise op {op!r}")
    if a.data.shape != b.data.shape:
        raise ValueError(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    return ImageGrid(_ELEMENTWISE_OPS[op](a.data, b.data))


def block_max_pool(m: BinaryMask, s: int) -> BinaryMask:
    """Downsample a mask by factor ``s`` taking the max over each s×s block.

    Input dimensions not divisible by ``s`` are zero-padded first, so a block
    in the output is 1 iff its source block contains at least one 1.
    """
    if s <= 0:
        raise ValueError(f"pooling factor must be >= 1, got {s}")
    if s == 1:
        return m
    h, w = m.height, m.width
    ph = (s - h % s) % s
    pw = (s - w % s) % s
    arr = np.pad(m.data, ((0, ph), (0, pw)), mode="constant")
    hh, ww = arr.shape
    pooled = arr.reshape(hh // s, s, ww // s, s).max(axis=(1, 3))
    return BinaryMask(pooled)


def image_from_mask(m: BinaryMask) -> ImageGrid:
    """View a mask as a single-channel image (for PGM export)."""
    return ImageGrid(m.data.astype(np.float64)[:, :, None])


# ---------------------------------------------------------------------------
# PFM (little-endian, scale -1.0) and 16-bit PGM writers/readers.
# ---------------------------------------------------------------------------


def write_pfm(arr: np.ndarray, path: str | os.PathLike) -> None:
    """Write a 2-D float array as a grayscale PFM file.

    Little-endian (scale -1.0), rows stored bottom-to-top per the PFM
    convention. Values are stored as 32-bit floats.
    """
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"PFM writer expects an H×W array, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(arr).astype("<f4").tobytes())


def read_pfm(path: str | os.PathLike) -> np.ndarray:
    """Read a grayscale PFM file into a float64 H×W array.

    Raises PFMError with the byte offset for malformed headers or truncated
    payloads.
    """
    with open(path, "rb") as f:
        buf = f.read()

    pos = 0

    def next_token() -> tuple[bytes, int]:
        nonlocal pos
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(buf):
            raise PFMError("unexpected end of header", pos)
        start = pos
        while pos < len(buf) and not buf[pos : pos + 1].isspace():
            pos += 1
        return buf[start:pos], start

    magic, off = next_token()
    if magic != b"Pf":
        raise PFMError(f"bad magic {magic!r}, expected b'Pf'", off)
    wtok, off = next_token()
    htok, hoff = next_token()
    try:
        w, h = int(wtok), int(htok)
    except ValueError:
        raise PFMError(f"bad dimensions {wtok!r} {htok!r}", off) from None
    if w <= 0 or h <= 0:
        raise PFMError(f"non-positive dimensions {w}×{h}", off)
    stok, soff = next_token()
    try:
        scale = float(stok)
    except ValueError:
        raise PFMError(f"bad scale {stok!r}", soff) from None
    if scale == 0.0:
        raise PFMError("zero scale", soff)
    # Exactly one whitespace byte separates the header from the payload.
    pos += 1
    expected = w * h * 4
    payload = buf[pos : pos + expected]
    if len(payload) != expected:
        raise PFMError(
            f"payload holds {len(buf) - pos} bytes, expected {expected}", pos + len(payload)
        )
    if pos + expected != len(buf):
        raise PFMError(f"{len(buf) - pos - expected} trailing bytes", pos + expected)
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return np.flipud(data).astype(np.float64)


def save_pfm(d: DepthMap, path: str | os.PathLike) -> None:
    """Write a depth map to disk; the round trip is bit-exact for float32 values."""
    write_pfm(d.data, path)


def load_pfm(path: str | os.PathLike) -> DepthMap:
    return DepthMap(read_pfm(path))


def save_pgm(img: ImageGrid, path: str | os.PathLike) -> None:
    """Write a single-channel grid as a 16-bit (P5, maxval 65535) PGM file.

    A value v maps to the pixel round(v * 65535).
    """
    if img.channels != 1:
        raise ValueError(f"PGM writer expects a single channel, got {img.channels}")
    pixels = np.rint(img.data[:, :, 0] * 65535.0).astype(">u2")
    with open(path, "wb") as f:
        f.write(b"P5\n")
        f.write(f"{img.width} {img.height}\n".encode("ascii"))
        f.write(b"65535\n")
        f.write(pixels.tobytes())
