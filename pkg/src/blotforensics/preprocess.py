"""Grayscale conversion, high-pass residual and 8-bit quantization."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# 4-neighbour mean; centre tap 0, taps sum to 1
LOWPASS_KERNEL = np.array([[0.0, 1.0, 0.0],
                           [1.0, 0.0, 1.0],
                           [0.0, 1.0, 0.0]]) / 4.0

BT601_WEIGHTS = (0.299, 0.587, 0.114)
DEFAULT_OFFSET = 128


@dataclass(frozen=True)
class ResidualImage:
    pixels: np.ndarray
    offset_applied: int = DEFAULT_OFFSET

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def to_gray(image: np.ndarray) -> np.ndarray:
    """BT.601 luma as float64 in [0, 255], unrounded.  Gray input passes through."""
    image = np.asarray(image)
    if image.ndim == 2:
        gray = image.astype(np.float64)
    elif image.ndim == 3 and image.shape[2] == 1:
        gray = image[..., 0].astype(np.float64)
    elif image.ndim == 3 and image.shape[2] == 3:
        rgb = image.astype(np.float64)
        wr, wg, wb = BT601_WEIGHTS
        # elementwise rather than a dot product: white maps to exactly 255.0
        gray = rgb[..., 0] * wr + rgb[..., 1] * wg + rgb[..., 2] * wb
    else:
        raise ValueError(f"unsupported image shape {image.shape}; need 1 or 3 channels")
    if not np.all(np.isfinite(gray)):
        raise ValueError("image contains non-finite values")
    return np.clip(gray, 0.0, 255.0)


def lowpass(gray: np.ndarray) -> np.ndarray:
    """Convolve with :data:`LOWPASS_KERNEL` using clamp-to-edge borders."""
    padded = np.pad(np.asarray(gray, dtype=np.float64), 1, mode="edge")
    return (padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:]) / 4.0


def highpass_residual(gray: np.ndarray) -> np.ndarray:
    gray = np.asarray(gray, dtype=np.float64)
    if gray.ndim != 2 or min(gray.shape) < 2:
        raise ValueError(f"need a 2-D image of at least 2x2, got shape {gray.shape}")
    return gray - lowpass(gray)


def round_half_away(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def quantize_residual(residual: np.ndarray, offset: int = DEFAULT_OFFSET) -> ResidualImage:
    """Map ``clamp(round(r) + offset, 0, 255)`` to uint8."""
    residual = np.asarray(residual, dtype=np.float64)
    if not np.all(np.isfinite(residual)):
        raise ValueError("residual contains non-finite values")
    q = np.clip(round_half_away(residual) + offset, 0, 255).astype(np.uint8)
    return ResidualImage(q, int(offset))


def residual_from_image(image: np.ndarray, offset: int = DEFAULT_OFFSET) -> ResidualImage:
    return quantize_residual(highpass_residual(to_gray(image)), offset)


def save_residual_png(residual: ResidualImage, path: str | Path) -> None:
    """Dump the offset-mapped residual as an 8-bit gray PNG."""
    Image.fromarray(residual.pixels).save(path, format="PNG")
