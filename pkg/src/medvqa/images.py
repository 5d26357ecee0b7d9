"""Pixel loading and preprocessing shared by the trainer and the service."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ShapeError


def preprocess_pil(img: Image.Image, side: int, channels: int) -> np.ndarray:
    """Resize with bilinear interpolation and scale to [0,1]; returns HxWxC."""
    img = img.convert("L" if channels == 1 else "RGB")
    img = img.resize((side, side), Image.BILINEAR)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if channels == 1:
        arr = arr[:, :, None]
    return arr


def preprocess_image_bytes(data: bytes, side: int, channels: int) -> np.ndarray:
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ValueError(f"cannot decode image: {exc}") from None
    return preprocess_pil(img, side, channels)


def load_image_file(path, side: int, channels: int) -> np.ndarray:
    return preprocess_image_bytes(Path(path).read_bytes(), side, channels)


def validate_image_array(arr: np.ndarray, side: int, channels: int) -> np.ndarray:
    """Check the HxWxC contract; a 2-D array is accepted for channels=1."""
    arr = np.asarray(arr)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ShapeError(f"image must be HxWxC, got shape {arr.shape}")
    h, w, c = arr.shape
    if h != side or w != side or c != channels:
        raise ShapeError(
            f"image shape {arr.shape} does not match config (side={side}, channels={channels})"
        )
    if not np.all(np.isfinite(arr)):
        raise ShapeError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ShapeError("image values must lie in [0, 1]")
    return arr.astype(np.float32, copy=False)
