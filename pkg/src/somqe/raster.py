"""RGB raster model, the ten-level gray palette, circular masks, and PNG I/O.

Pixels are float64 triples in [0, 1]; 8-bit values exist only at file
boundaries (``v / 255`` on load, ``round(v * 255)`` on save). Layout is
row-major with the origin at the top-left corner, so the flat index of
pixel (x, y) is ``y * width + x``. Rasters and masks are immutable after
construction and safe to share across workers.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = [
    "GrayLevel",
    "Raster",
    "Mask",
    "ImageFormatError",
    "UnsupportedFormatError",
    "CorruptImageError",
    "PixelFormatError",
    "AlphaChannelError",
    "load_image",
    "save_image",
    "circular_mask",
    "count_level",
    "u8_to_unit",
    "unit_to_u8",
]

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(Exception):
    """Base class for image file problems."""


class UnsupportedFormatError(ImageFormatError):
    """The file is not a PNG (the one supported lossless format)."""


class CorruptImageError(ImageFormatError):
    """The file looks like a PNG but cannot be decoded."""


class PixelFormatError(ImageFormatError):
    """The file is a valid PNG but not 8-bit truecolor RGB."""


class AlphaChannelError(PixelFormatError):
    """The file carries an alpha channel (or tRNS transparency)."""


class GrayLevel(Enum):
    """The ten achromatic pixel levels used throughout the simulations.

    The enum value is the common 8-bit intensity of all three channels.
    """

    BLACK = 0
    G13 = 13
    G38 = 38
    DARK_GRAY = 64
    G89 = 89
    MEDIUM_GRAY = 127
    G191 = 191
    LIGHT_GRAY = 217
    G242 = 242
    WHITE = 255

    @property
    def rgb8(self) -> np.ndarray:
        return np.array([self.value] * 3, dtype=np.uint8)

    @property
    def unit(self) -> np.ndarray:
        """The level as a float64 triple in [0, 1] (same conversion as load_image)."""
        return np.array([self.value] * 3, dtype=np.float64) / 255.0

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "GrayLevel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            valid = ", ".join(level.label for level in cls)
            raise ValueError(f"unknown gray level {name!r}; expected one of: {valid}") from None


def u8_to_unit(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float64) / 255.0


def unit_to_u8(arr: np.ndarray) -> np.ndarray:
    """Round [0, 1] channels to 8-bit. Exact inverse of u8_to_unit on 8-bit data."""
    return np.rint(np.asarray(arr) * 255.0).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class Raster:
    """Immutable width x height grid of RGB pixels, float64 channels in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.array(self.pixels, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"raster array must have shape (height, width, 3), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("raster must be at least 1x1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("raster channels must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("raster channels must lie in [0, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Raster":
        # Fast path for internally built arrays known to satisfy the invariants.
        arr.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "pixels", arr)
        return obj

    @classmethod
    def from_u8(cls, arr: np.ndarray) -> "Raster":
        arr = np.asarray(arr)
        if arr.dtype != np.uint8:
            raise ValueError(f"expected uint8 array, got {arr.dtype}")
        return cls(u8_to_unit(arr))

    @classmethod
    def uniform(cls, width: int, height: int, level: GrayLevel) -> "Raster":
        arr = np.empty((height, width, 3), dtype=np.float64)
        arr[:] = level.unit
        return cls._wrap(arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.width * self.height

    def flat(self) -> np.ndarray:
        """Row-major (n_pixels, 3) view of the pixel data."""
        return self.pixels.reshape(-1, 3)

    def to_u8(self) -> np.ndarray:
        return unit_to_u8(self.pixels)

    def digest(self) -> str:
        """sha256 over dimensions and the 8-bit pixel bytes, as 'sha256:<hex>'."""
        h = hashlib.sha256()
        h.update(struct.pack("<II", self.width, self.height))
        h.update(self.to_u8().tobytes())
        return "sha256:" + h.hexdigest()


@dataclass(frozen=True, eq=False)
class Mask:
    """Immutable boolean membership grid matching a raster's dimensions."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.array(self.bits, dtype=bool, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"mask array must have shape (height, width), got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @classmethod
    def full(cls, width: int, height: int) -> "Mask":
        return cls(np.ones((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def population(self) -> int:
        return int(self.bits.sum())


def circular_mask(width: int, height: int, cx: float, cy: float, radius: float) -> Mask:
    """Mask of pixels whose centers lie within `radius` of (cx, cy).

    Pixel (x, y) has its center at (x + 0.5, y + 0.5); membership is
    Euclidean distance <= radius.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    ys, xs = np.mgrid[0:height, 0:width]
    d2 = (xs + 0.5 - cx) ** 2 + (ys + 0.5 - cy) ** 2
    return Mask(d2 <= radius * radius)


def count_level(raster: Raster, level: GrayLevel, mask: Mask | None = None) -> int:
    """Number of masked pixels exactly equal to the level's triple."""
    match = np.all(raster.pixels == level.unit, axis=-1)
    if mask is not None:
        if (mask.height, mask.width) != (raster.height, raster.width):
            raise ValueError(
                f"mask dimensions {mask.width}x{mask.height} do not match "
                f"raster {raster.width}x{raster.height}"
            )
        match = match & mask.bits
    return int(match.sum())


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CorruptImageError(f"truncated PNG: unexpected end of file in {what}")
    return data


def _inspect_png(path: Path) -> tuple[int, int, bool]:
    """Return (bit_depth, color_type, has_trns) from the PNG chunk stream."""
    with open(path, "rb") as fh:
        sig = fh.read(8)
        if sig != _PNG_SIGNATURE:
            raise UnsupportedFormatError(f"{path}: not a PNG file (bad signature)")
        length, ctype = struct.unpack(">I4s", _read_exact(fh, 8, "chunk header"))
        if ctype != b"IHDR" or length != 13:
            raise CorruptImageError(f"{path}: first chunk is not a valid IHDR")
        ihdr = _read_exact(fh, 13, "IHDR")
        _read_exact(fh, 4, "IHDR crc")
        bit_depth = ihdr[8]
        color_type = ihdr[9]
        has_trns = False
        while True:
            header = fh.read(8)
            if len(header) < 8:
                break
            length, ctype = struct.unpack(">I4s", header)
            if ctype == b"tRNS":
                has_trns = True
            if ctype in (b"IDAT", b"IEND"):
                break
            fh.seek(length + 4, 1)
        return bit_depth, color_type, has_trns


def load_image(path) -> Raster:
    """Load an 8-bit RGB PNG into a Raster (channels divided by 255).

    Raises FileNotFoundError, UnsupportedFormatError, CorruptImageError,
    PixelFormatError, or AlphaChannelError, each for its distinct cause.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"image file not found: {path}")
    bit_depth, color_type, has_trns = _inspect_png(path)
    # PNG color types: 0 gray, 2 truecolor, 3 palette, 4 gray+alpha, 6 truecolor+alpha
    if color_type in (4, 6) or has_trns:
        raise AlphaChannelError(f"{path}: alpha channel not supported")
    if bit_depth != 8 or color_type != 2:
        raise PixelFormatError(
            f"{path}: expected 8-bit truecolor RGB, got bit depth {bit_depth} "
            f"color type {color_type}"
        )
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode != "RGB":
                raise PixelFormatError(f"{path}: decoded mode {img.mode}, expected RGB")
            arr = np.asarray(img, dtype=np.uint8)
    except ImageFormatError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise CorruptImageError(f"{path}: cannot decode PNG data ({exc})") from exc
    return Raster._wrap(u8_to_unit(arr))


def save_image(raster: Raster, path) -> None:
    """Write the raster as an 8-bit RGB PNG; load_image inverts it exactly."""
    path = Path(path)
    img = Image.fromarray(raster.to_u8(), mode="RGB")
    img.save(path, format="PNG")
