"""Manifests of image patches, patch cropping and leakage-free folds."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from PIL import Image

from ._rng import make_rng

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1

REAL = "real"
SYNTHETIC = "synthetic"
NO_GENERATOR = "none"
KNOWN_GENERATORS = ("pix2pix", "cyclegan", "sg2ada", "ddpm")

REQUIRED_FIELDS = ("id", "path", "label", "generator", "source_image_id")
# written by the augment command, recognised so they do not trigger warnings
PROVENANCE_FIELDS = ("original_id", "post_process")


class ManifestError(ValueError):
    """Invalid manifest content; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FoldError(ValueError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    id: str
    path: Path
    label: str
    generator: str = NO_GENERATOR
    source_image_id: str = ""
    width: int | None = None
    height: int | None = None
    original_id: str | None = None
    post_process: str | None = None

    def __post_init__(self):
        if not self.id:
            raise ValueError("record id must be non-empty")
        if self.label not in (REAL, SYNTHETIC):
            raise ValueError(f"label must be 'real' or 'synthetic', got {self.label!r}")
        if self.label == REAL and self.generator != NO_GENERATOR:
            raise ValueError(f"real record {self.id!r} has generator {self.generator!r}")
        if self.label == SYNTHETIC and self.generator in (NO_GENERATOR, ""):
            raise ValueError(f"synthetic record {self.id!r} needs a generator tag")
        if self.label == REAL and not self.source_image_id:
            raise ValueError(f"real record {self.id!r} needs a source_image_id")

    @property
    def is_real(self) -> bool:
        return self.label == REAL

    def to_json_dict(self, base_dir: Path | None = None) -> dict:
        path = self.path
        if base_dir is not None:
            try:
                path = path.relative_to(base_dir)
            except ValueError:
                pass
        out = {
            "id": self.id,
            "path": path.as_posix(),
            "label": self.label,
            "generator": self.generator,
            "source_image_id": self.source_image_id,
        }
        if self.original_id is not None:
            out["original_id"] = self.original_id
        if self.post_process is not None:
            out["post_process"] = self.post_process
        return out


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[SampleRecord, ...]
    patch_size: int = 256

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise ManifestError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[SampleRecord]:
        return iter(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def real(self) -> list[SampleRecord]:
        return [r for r in self.records if r.is_real]

    def synthetic(self, generator: str | None = None) -> list[SampleRecord]:
        return [r for r in self.records
                if not r.is_real and (generator is None or r.generator == generator)]

    @property
    def generators(self) -> list[str]:
        """Synthetic generator tags in order of first appearance."""
        return list(dict.fromkeys(r.generator for r in self.records if not r.is_real))

    @property
    def source_image_ids(self) -> list[str]:
        return sorted({r.source_image_id for r in self.records if r.is_real})

    def validate_files(self) -> "DatasetManifest":
        """Decode the header of every referenced image and fill in sizes."""
        checked = []
        for rec in self.records:
            if not rec.path.is_file():
                raise ManifestError(f"record {rec.id!r}: missing file {rec.path}")
            try:
                with Image.open(rec.path) as im:
                    im.verify()
                with Image.open(rec.path) as im:
                    width, height = im.size
                    _check_mode(im.mode, rec.path)
            except ManifestError:
                raise
            except Exception as exc:  # PIL raises a zoo of exception types
                raise ManifestError(f"record {rec.id!r}: cannot decode {rec.path}: {exc}") from exc
            checked.append(replace(rec, width=width, height=height))
        return DatasetManifest(tuple(checked), self.patch_size)

    def write(self, path: str | Path, relative: bool = True) -> None:
        path = Path(path)
        base = path.parent.resolve() if relative else None
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                rec_out = rec if base is None else replace(rec, path=rec.path.resolve())
                fh.write(json.dumps(rec_out.to_json_dict(base), sort_keys=True) + "\n")


def _record_from_dict(obj: dict, base_dir: Path, line: int | None) -> SampleRecord:
    missing = [k for k in REQUIRED_FIELDS if k not in obj]
    if missing:
        raise ManifestError(f"missing field(s) {', '.join(missing)}", line)
    unknown = sorted(set(obj) - set(REQUIRED_FIELDS) - set(PROVENANCE_FIELDS))
    if unknown:
        logger.warning("manifest line %s: ignoring unknown field(s) %s", line, ", ".join(unknown))
    generator = obj["generator"]
    if generator is None:
        generator = NO_GENERATOR
    path = Path(str(obj["path"]))
    if not path.is_absolute():
        path = base_dir / path
    try:
        return SampleRecord(
            id=str(obj["id"]),
            path=path,
            label=str(obj["label"]),
            generator=str(generator),
            source_image_id=str(obj["source_image_id"] or ""),
            original_id=obj.get("original_id"),
            post_process=obj.get("post_process"),
        )
    except ValueError as exc:
        raise ManifestError(str(exc), line) from exc


def _build(records: list[SampleRecord], lines: list[int], patch_size: int) -> DatasetManifest:
    seen: dict[str, int] = {}
    for rec, line in zip(records, lines):
        if rec.id in seen:
            raise ManifestError(f"duplicate id {rec.id!r} (first seen on line {seen[rec.id]})", line)
        seen[rec.id] = line
    return DatasetManifest(tuple(records), patch_size)


def load_manifest(path: str | Path, *, check_files: bool = True,
                  patch_size: int = 256) -> DatasetManifest:
    """Read a JSON-Lines manifest.  Relative paths resolve against its folder.

    With ``check_files`` every referenced image must exist and decode.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    base_dir = path.parent
    records, lines = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", lineno) from exc
            if not isinstance(obj, dict):
                raise ManifestError("each line must be a JSON object", lineno)
            records.append(_record_from_dict(obj, base_dir, lineno))
            lines.append(lineno)
    manifest = _build(records, lines, patch_size)
    return manifest.validate_files() if check_files else manifest


def load_manifest_csv(path: str | Path, *, check_files: bool = True,
                      patch_size: int = 256) -> DatasetManifest:
    """CSV variant of :func:`load_manifest`, same columns; line numbers count the header."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    records, lines = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            records.append(_record_from_dict(row, path.parent, lineno))
            lines.append(lineno)
    manifest = _build(records, lines, patch_size)
    return manifest.validate_files() if check_files else manifest


def _check_mode(mode: str, where) -> None:
    if mode not in ("L", "RGB", "P"):
        raise ManifestError(f"{where}: unsupported image mode {mode!r}, need 8-bit gray or RGB")


def read_image(path: str | Path) -> np.ndarray:
    """Decode an 8-bit gray (H, W) or RGB (H, W, 3) image as uint8."""
    with Image.open(path) as im:
        _check_mode(im.mode, path)
        if im.mode == "P":
            im = im.convert("RGB")
        return np.asarray(im, dtype=np.uint8).copy()


def patch_corners(shape: Sequence[int], n: int, size: int, rng_seed: int) -> list[tuple[int, int]]:
    """Top-left corners of ``n`` size×size crops, uniform with replacement."""
    height, width = int(shape[0]), int(shape[1])
    if n < 1:
        raise ValueError("n must be >= 1")
    if height < size or width < size:
        raise ValueError(f"image of {height}x{width} is smaller than patch size {size}")
    rng = make_rng(rng_seed)
    rows = rng.integers(0, height - size + 1, size=n)
    cols = rng.integers(0, width - size + 1, size=n)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def extract_patches(image: np.ndarray, n: int = 50, size: int = 256,
                    rng_seed: int = 0) -> list[np.ndarray]:
    corners = patch_corners(image.shape, n, size, rng_seed)
    return [image[r:r + size, c:c + size].copy() for r, c in corners]


@dataclass(frozen=True)
class FoldAssignment:
    n_folds: int
    mapping: dict[str, int] = field(default_factory=dict)

    def fold_of(self, source_image_id: str) -> int:
        return self.mapping[source_image_id]

    def sizes(self) -> list[int]:
        counts = [0] * self.n_folds
        for fold in self.mapping.values():
            counts[fold] += 1
        return counts

    def sources(self, fold: int) -> set[str]:
        return {s for s, f in self.mapping.items() if f == fold}

    def split(self, manifest: DatasetManifest, test_fold: int):
        """Real records for training and testing when ``test_fold`` is held out."""
        train, test = [], []
        for rec in manifest.real():
            (test if self.mapping[rec.source_image_id] == test_fold else train).append(rec)
        return train, test

    def to_json(self) -> str:
        return json.dumps({"n_folds": self.n_folds, "mapping": self.mapping},
                          sort_keys=True, separators=(",", ":"))


def assign_folds(manifest: DatasetManifest | Iterable[SampleRecord], n_folds: int = 2,
                 rng_seed: int = 0) -> FoldAssignment:
    """Deal real source images round-robin to folds after a seeded shuffle.

    Synthetic records are test-only and get no fold.
    """
    if n_folds < 2:
        raise FoldError("n_folds must be >= 2")
    records = manifest.records if isinstance(manifest, DatasetManifest) else list(manifest)
    sources = sorted({r.source_image_id for r in records if r.is_real})
    if len(sources) < n_folds:
        raise FoldError(f"{len(sources)} real source image(s) cannot fill {n_folds} folds")
    order = make_rng(rng_seed).permutation(len(sources))
    mapping = {sources[idx]: pos % n_folds for pos, idx in enumerate(order)}
    return FoldAssignment(n_folds, dict(sorted(mapping.items())))
