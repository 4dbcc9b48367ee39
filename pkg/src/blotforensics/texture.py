"""Co-occurrence matrices of quantized residuals and their scalar texture features.

Each patch yields 8 matrices (distances 4, 8, 16, 32 along the horizontal and
vertical directions) and 5 features per matrix, for 40 features in total.
Feature columns are ordered lexicographically by (metric, distance,
direction) and named like ``f_rho_d16_V``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, TransformerMixin

from .preprocess import DEFAULT_OFFSET, ResidualImage, residual_from_image

LEVELS = 256
DISTANCES = (4, 8, 16, 32)
DIRECTIONS = ("H", "V")
METRICS = ("f_c", "f_d", "f_e", "f_h", "f_rho")
FEATURE_SCHEMA_VERSION = 1
DEGENERACY_EPS = 1e-12

_IDX = np.arange(LEVELS, dtype=np.float64)
_DIFF = _IDX[:, None] - _IDX[None, :]
_SQ_DIFF = _DIFF ** 2
_ABS_DIFF = np.abs(_DIFF)
_HOMOG_WEIGHT = 1.0 / (1.0 + _SQ_DIFF)


@dataclass(frozen=True, order=True)
class GlcmConfig:
    distance: int
    direction: str

    def __post_init__(self):
        if self.distance < 1:
            raise ValueError("distance must be positive")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be 'H' or 'V', got {self.direction!r}")

    @property
    def offset(self) -> tuple[int, int]:
        """(row, col) displacement from the reference pixel to its partner."""
        return (0, self.distance) if self.direction == "H" else (self.distance, 0)

    @property
    def tag(self) -> str:
        return f"d{self.distance}_{self.direction}"


CANONICAL_CONFIGS = tuple(GlcmConfig(d, o) for d in DISTANCES for o in DIRECTIONS)
FEATURE_NAMES = tuple(f"{m}_{c.tag}" for m in METRICS for c in CANONICAL_CONFIGS)


def parse_feature_name(name: str) -> tuple[str, int, str]:
    metric, dist, direction = name.rsplit("_", 2)
    if metric not in METRICS or not dist.startswith("d") or direction not in DIRECTIONS:
        raise ValueError(f"not a feature name: {name!r}")
    return metric, int(dist[1:]), direction


def feature_index(names: str | Sequence[str]) -> list[int]:
    if isinstance(names, str):
        names = [names]
    out = []
    for name in names:
        try:
            out.append(FEATURE_NAMES.index(name))
        except ValueError:
            raise ValueError(f"unknown feature {name!r}") from None
    return out


@dataclass(frozen=True)
class CooccurrenceMatrix:
    counts: np.ndarray
    config: GlcmConfig

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def normalized(self) -> np.ndarray:
        total = self.total
        if total == 0:
            raise ValueError(f"no pixel pairs at offset {self.config.offset}; image too small")
        return self.counts / float(total)


def cooccurrence_counts(pixels: np.ndarray, drow: int, dcol: int) -> np.ndarray:
    """256×256 counts of (pixels[p], pixels[p + (drow, dcol)]) over valid p."""
    pixels = np.asarray(pixels)
    h, w = pixels.shape
    if abs(drow) >= h or abs(dcol) >= w:
        return np.zeros((LEVELS, LEVELS), dtype=np.int64)
    ref = pixels[max(0, -drow):h - max(0, drow), max(0, -dcol):w - max(0, dcol)]
    nb = pixels[max(0, drow):h - max(0, -drow), max(0, dcol):w - max(0, -dcol)]
    codes = ref.astype(np.int64).ravel() * LEVELS + nb.astype(np.int64).ravel()
    return np.bincount(codes, minlength=LEVELS * LEVELS).reshape(LEVELS, LEVELS)


def compute_glcm(residual: ResidualImage | np.ndarray, config: GlcmConfig) -> CooccurrenceMatrix:
    pixels = residual.pixels if isinstance(residual, ResidualImage) else np.asarray(residual)
    if pixels.dtype != np.uint8:
        raise ValueError("co-occurrence input must be uint8")
    return CooccurrenceMatrix(cooccurrence_counts(pixels, *config.offset), config)


def _as_matrix(c) -> np.ndarray:
    if isinstance(c, CooccurrenceMatrix):
        return c.normalized
    return np.asarray(c, dtype=np.float64)


def feature_contrast(c) -> float:
    return float(np.sum(_as_matrix(c) * _SQ_DIFF))


def feature_homogeneity(c) -> float:
    return float(np.sum(_as_matrix(c) * _HOMOG_WEIGHT))


def feature_dissimilarity(c) -> float:
    return float(np.sum(_as_matrix(c) * _ABS_DIFF))


def feature_energy(c) -> float:
    m = _as_matrix(c)
    return float(np.sqrt(np.sum(m * m)))


def correlation_terms(c) -> tuple[float, bool]:
    """Return (f_rho, degenerate).  Degenerate marginals give 0."""
    m = _as_matrix(c)
    row = m.sum(axis=1)
    col = m.sum(axis=0)
    mu_i = float(np.sum(row * _IDX))
    mu_j = float(np.sum(col * _IDX))
    di = _IDX - mu_i
    dj = _IDX - mu_j
    var_i = float(np.sum(row * di * di))
    var_j = float(np.sum(col * dj * dj))
    denom = np.sqrt(var_i) * np.sqrt(var_j)
    if denom < DEGENERACY_EPS:
        return 0.0, True
    cov = float(np.sum(m * np.outer(di, dj)))
    return float(np.clip(cov / denom, -1.0, 1.0)), False


def feature_correlation(c) -> float:
    return correlation_terms(c)[0]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    degenerate: frozenset = field(default_factory=frozenset)

    names = FEATURE_NAMES

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(FEATURE_NAMES, self.values)}


def features_from_matrices(matrices: Sequence[CooccurrenceMatrix]) -> FeatureVector:
    by_tag = {}
    degenerate = set()
    for mat in matrices:
        norm = mat.normalized
        rho, flag = correlation_terms(norm)
        tag = mat.config.tag
        by_tag[tag] = {
            "f_c": feature_contrast(norm),
            "f_d": feature_dissimilarity(norm),
            "f_e": feature_energy(norm),
            "f_h": feature_homogeneity(norm),
            "f_rho": rho,
        }
        if flag:
            degenerate.add(f"f_rho_{tag}")
    values = np.array([by_tag[c.tag][m] for m in METRICS for c in CANONICAL_CONFIGS])
    return FeatureVector(values, frozenset(degenerate))


def canonical_glcms(image: np.ndarray, offset: int = DEFAULT_OFFSET) -> list[CooccurrenceMatrix]:
    residual = residual_from_image(image, offset)
    return [compute_glcm(residual, cfg) for cfg in CANONICAL_CONFIGS]


def extract_features(image: np.ndarray, offset: int = DEFAULT_OFFSET) -> FeatureVector:
    """Full pipeline: gray, residual, quantize, 8 matrices, 40 features."""
    return features_from_matrices(canonical_glcms(image, offset))


def extract_feature_matrix(images, offset: int = DEFAULT_OFFSET, n_jobs: int = 1) -> np.ndarray:
    """Stack features of many images into an (n, 40) array, optionally in parallel.

    ``images`` may hold arrays or zero-argument callables that load one.
    """
    def one(item):
        img = item() if callable(item) else item
        return extract_features(img, offset).values

    images = list(images)
    if n_jobs == 1 or len(images) < 2:
        rows = [one(img) for img in images]
    else:
        rows = Parallel(n_jobs=n_jobs)(delayed(one)(img) for img in images)
    if not rows:
        return np.empty((0, len(FEATURE_NAMES)))
    return np.vstack(rows)


class CooccurrenceFeatures(TransformerMixin, BaseEstimator):
    """Transformer from a sequence of patches to co-occurrence texture features.

    Parameters
    ----------
    features : list of str or None
        Subset of :data:`FEATURE_NAMES` to emit, all 40 when None.
    offset : int
        Mid-gray level added to the rounded residual before clamping.
    n_jobs : int
        Worker processes for extraction.
    """

    def __init__(self, features=None, offset=DEFAULT_OFFSET, n_jobs=1):
        self.features = features
        self.offset = offset
        self.n_jobs = n_jobs

    def _columns(self) -> np.ndarray:
        names = FEATURE_NAMES if self.features is None else tuple(self.features)
        return np.array(feature_index(list(names)))

    def fit(self, X, y=None):
        self.columns_ = self._columns()
        self.n_features_out_ = len(self.columns_)
        return self

    def transform(self, X):
        # stateless: nothing is learned, so an unfitted instance works too
        cols = getattr(self, "columns_", None)
        full = extract_feature_matrix(X, self.offset, self.n_jobs)
        return full[:, self._columns() if cols is None else cols]

    def get_feature_names_out(self, input_features=None):
        names = FEATURE_NAMES if self.features is None else tuple(self.features)
        return np.asarray(names, dtype=object)
