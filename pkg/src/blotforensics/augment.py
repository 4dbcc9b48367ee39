"""Post-processing used in robustness experiments: resampling and JPEG."""
from __future__ import annotations

import io
import re
from dataclasses import dataclass

import cv2
import numpy as np
from PIL import Image, features

from ._rng import derive_seed, make_rng

PATCH = 256
UPSCALE_FACTORS = (1.25, 1.5)
DOWN_UPSCALE_FACTORS = (0.5, 0.75, 0.9)
JPEG_QUALITIES = (80, 90, 100)
KINDS = ("none", "upscale", "down_upscale", "jpeg")

_INTERP = {"bilinear": cv2.INTER_LINEAR, "bicubic": cv2.INTER_CUBIC,
           "nearest": cv2.INTER_NEAREST, "area": cv2.INTER_AREA}


@dataclass(frozen=True)
class PostProcessSpec:
    """One post-processing condition.

    ``value`` is the scale factor for the resampling kinds and the quality for
    ``jpeg``.  Values outside the experimental grid need ``allow_off_grid``.
    """

    kind: str = "none"
    value: float | None = None
    rng_seed: int = 0
    allow_off_grid: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown post-process kind {self.kind!r}")
        if self.kind == "none":
            if self.value is not None:
                raise ValueError("'none' takes no value")
            return
        if self.value is None:
            raise ValueError(f"{self.kind} needs a value")
        grid = {"upscale": UPSCALE_FACTORS, "down_upscale": DOWN_UPSCALE_FACTORS,
                "jpeg": JPEG_QUALITIES}[self.kind]
        if self.kind == "upscale" and not self.value > 1:
            raise ValueError("upscale factor must exceed 1")
        if self.kind == "down_upscale" and not 0 < self.value < 1:
            raise ValueError("down_upscale factor must lie in (0, 1)")
        if self.kind == "jpeg" and not (1 <= self.value <= 100 and float(self.value).is_integer()):
            raise ValueError("jpeg quality must be an integer in [1, 100]")
        if not self.allow_off_grid and self.value not in grid:
            raise ValueError(f"{self.kind} value {self.value} is off the grid {grid}")

    @property
    def key(self) -> str:
        if self.kind == "none":
            return "none"
        v = int(self.value) if self.kind == "jpeg" else self.value
        return f"{self.kind}:{v}"

    @property
    def label(self) -> str:
        if self.kind == "none":
            return "No proc."
        return {"upscale": "Upscale {}", "down_upscale": "Down-Upscale {}",
                "jpeg": "JPEG-{}"}[self.kind].format(int(self.value) if self.kind == "jpeg" else self.value)

    @classmethod
    def parse(cls, text: str, rng_seed: int = 0, allow_off_grid: bool = False) -> "PostProcessSpec":
        """Parse ``none``, ``upscale:1.25``, ``down_upscale:0.5`` or ``jpeg:90``."""
        text = text.strip()
        if text == "none":
            return cls(rng_seed=rng_seed)
        m = re.fullmatch(r"(upscale|down_upscale|jpeg):([0-9.]+)", text)
        if not m:
            raise ValueError(f"cannot parse post-process spec {text!r}")
        value = float(m.group(2))
        if m.group(1) == "jpeg":
            value = int(value)
        return cls(m.group(1), value, rng_seed, allow_off_grid)

    def apply(self, patch: np.ndarray, seed_key=None) -> np.ndarray:
        if self.kind == "none":
            return patch
        if self.kind == "upscale":
            seed = self.rng_seed if seed_key is None else derive_seed(self.rng_seed, seed_key)
            return apply_upscale(patch, self.value, seed)
        if self.kind == "down_upscale":
            return apply_down_upscale(patch, self.value)
        return apply_jpeg(patch, int(self.value))


GRID = tuple(PostProcessSpec("upscale", f) for f in UPSCALE_FACTORS) \
    + tuple(PostProcessSpec("down_upscale", f) for f in DOWN_UPSCALE_FACTORS) \
    + tuple(PostProcessSpec("jpeg", q) for q in JPEG_QUALITIES)


def _check_patch(patch: np.ndarray) -> np.ndarray:
    patch = np.asarray(patch)
    if patch.dtype != np.uint8 or patch.ndim not in (2, 3):
        raise ValueError("expected an 8-bit gray or RGB image")
    return patch


def _resize(img: np.ndarray, size: int, interpolation: str) -> np.ndarray:
    return cv2.resize(img, (size, size), interpolation=_INTERP[interpolation])


def apply_upscale(patch: np.ndarray, factor: float, seed: int = 0,
                  size: int = PATCH, interpolation: str = "bilinear") -> np.ndarray:
    """Enlarge by ``factor`` then take a uniformly placed size×size crop."""
    patch = _check_patch(patch)
    if factor <= 1:
        raise ValueError("upscale factor must exceed 1")
    big = _resize(patch, int(round(patch.shape[0] * factor)), interpolation)
    span = big.shape[0] - size
    rng = make_rng(seed)
    r, c = (int(v) for v in rng.integers(0, span + 1, size=2))
    return np.ascontiguousarray(big[r:r + size, c:c + size])


def apply_down_upscale(patch: np.ndarray, factor: float, size: int = PATCH,
                       interpolation: str = "bilinear") -> np.ndarray:
    patch = _check_patch(patch)
    small = _resize(patch, int(round(patch.shape[0] * factor)), interpolation)
    return _resize(small, size, interpolation)


def encode_jpeg(patch: np.ndarray, quality: int) -> bytes:
    """Baseline JPEG via Pillow's libjpeg; 4:2:0 chroma below quality 100, 4:4:4 at 100."""
    patch = _check_patch(patch)
    buf = io.BytesIO()
    Image.fromarray(patch).save(buf, format="JPEG", quality=int(quality),
                                subsampling=0 if quality >= 100 else 2,
                                optimize=False, progressive=False)
    return buf.getvalue()


def decode_image_bytes(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im, dtype=np.uint8).copy()


def apply_jpeg(patch: np.ndarray, quality: int) -> np.ndarray:
    return decode_image_bytes(encode_jpeg(patch, quality))


def codec_info() -> dict:
    """Identity of the pinned encoders, recorded alongside results."""
    import PIL
    return {"jpeg_encoder": "Pillow/libjpeg", "pillow": PIL.__version__,
            "libjpeg": features.version("jpg"), "resampler": f"opencv {cv2.__version__}"}
