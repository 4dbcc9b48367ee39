"""A small constructed dataset where real and fake patches are separable.

"Real" patches are crops of smooth synthetic textures (Gaussian-filtered
noise).  Each fake generator destroys that smoothness differently, so
high-pass co-occurrence statistics tell the classes apart.  Used for
end-to-end checks where the published dataset is not available.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from ._rng import make_rng
from .dataset import extract_patches

FAKE_KINDS = {
    "pix2pix": "shuffle",
    "cyclegan": "noise",
    "sg2ada": "row_shuffle",
    "ddpm": "uniform_noise",
}


def smooth_texture(size: int, rng: np.random.Generator, sigma: float = 3.0) -> np.ndarray:
    field = gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    field = (field - field.min()) / (np.ptp(field) + 1e-12)
    gray = np.round(40 + 175 * field).astype(np.uint8)
    return np.repeat(gray[..., None], 3, axis=2)


def fake_patch(kind: str, size: int, rng: np.random.Generator) -> np.ndarray:
    base = smooth_texture(size, rng)
    gray = base[..., 0]
    if kind == "shuffle":
        out = rng.permutation(gray.ravel()).reshape(gray.shape)
    elif kind == "noise":
        out = np.clip(gray + rng.normal(0, 12, gray.shape), 0, 255).round().astype(np.uint8)
    elif kind == "row_shuffle":
        out = np.stack([rng.permutation(row) for row in gray])
    elif kind == "uniform_noise":
        out = np.clip(gray + rng.integers(-25, 26, gray.shape), 0, 255).astype(np.uint8)
    else:
        raise ValueError(f"unknown fake kind {kind!r}")
    return np.repeat(out[..., None], 3, axis=2)


def make_smoke_dataset(outdir: str | Path, n_sources: int = 20, patches_per_source: int = 1,
                       n_fake: int = 20, generators=("pix2pix",), size: int = 256,
                       seed: int = 0) -> Path:
    """Write PNG patches and ``manifest.jsonl`` under ``outdir``; return the manifest path."""
    outdir = Path(outdir)
    (outdir / "real").mkdir(parents=True, exist_ok=True)
    rows = []
    for s in range(n_sources):
        rng = make_rng(seed, "source", s)
        full = smooth_texture(2 * size, rng)
        for p, patch in enumerate(extract_patches(full, patches_per_source, size, rng_seed=seed + s)):
            rid = f"real_{s:03d}_{p:02d}"
            Image.fromarray(patch).save(outdir / "real" / f"{rid}.png")
            rows.append({"id": rid, "path": f"real/{rid}.png", "label": "real",
                         "generator": "none", "source_image_id": f"src_{s:03d}"})
    for g in generators:
        (outdir / g).mkdir(exist_ok=True)
        kind = FAKE_KINDS.get(g, "shuffle")
        for i in range(n_fake):
            rng = make_rng(seed, "fake", g, i)
            fid = f"{g}_{i:03d}"
            Image.fromarray(fake_patch(kind, size, rng)).save(outdir / g / f"{fid}.png")
            rows.append({"id": fid, "path": f"{g}/{fid}.png", "label": "synthetic",
                         "generator": g, "source_image_id": ""})
    manifest = outdir / "manifest.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return manifest
