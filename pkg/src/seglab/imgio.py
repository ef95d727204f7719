"""Minimal PFM and PGM file support.

PFM: grayscale "Pf" variant, scale header "-1.0" (little-endian float32),
scanlines stored bottom-to-top as in the common reference readers.

PGM: binary "P5" with maxval 65535, two bytes per pixel, most significant
byte first.

Both readers accept only what the writers here produce (no comment lines).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ValidationError

__all__ = ["write_pfm", "read_pfm", "write_pgm16", "read_pgm16"]


def write_pfm(path: str | Path, image: np.ndarray) -> None:
    """Write a 2-D array as a grayscale little-endian PFM file."""
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 2:
        raise ValidationError(f"PFM export needs a 2-D plane, got shape {img.shape}")
    height, width = img.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(img).astype("<f4").tobytes())


def read_pfm(path: str | Path) -> np.ndarray:
    """Read a grayscale PFM file into a float32 array of shape (H, W)."""
    with open(path, "rb") as f:
        tag = f.readline().decode("ascii").strip()
        if tag != "Pf":
            raise ValidationError(f"not a grayscale PFM file (tag {tag!r})")
        width, height = (int(t) for t in f.readline().decode("ascii").split())
        scale = float(f.readline().decode("ascii"))
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(width * height * 4), dtype=dtype)
    if data.size != width * height:
        raise ValidationError(f"truncated PFM payload in {path}")
    return np.flipud(data.reshape(height, width)).astype(np.float32)


def write_pgm16(path: str | Path, values: np.ndarray) -> None:
    """Write an integer 2-D array as a 16-bit binary PGM (maxval 65535)."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValidationError(f"PGM export needs a 2-D array, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 65535:
        raise ValidationError("PGM values must lie in [0, 65535]")
    height, width = arr.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{width} {height}\n65535\n".encode("ascii"))
        f.write(arr.astype(">u2").tobytes())


def read_pgm16(path: str | Path) -> np.ndarray:
    """Read a 16-bit binary PGM into a uint16 array of shape (H, W)."""
    with open(path, "rb") as f:
        tag = f.readline().decode("ascii").strip()
        if tag != "P5":
            raise ValidationError(f"not a binary PGM file (tag {tag!r})")
        width, height = (int(t) for t in f.readline().decode("ascii").split())
        maxval = int(f.readline().decode("ascii"))
        if maxval != 65535:
            raise ValidationError(f"expected 16-bit PGM (maxval 65535), got {maxval}")
        data = np.frombuffer(f.read(width * height * 2), dtype=">u2")
    if data.size != width * height:
        raise ValidationError(f"truncated PGM payload in {path}")
    return data.reshape(height, width).astype(np.uint16)
