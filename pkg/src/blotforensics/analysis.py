"""Diagnostics: PCA of averaged co-occurrences, feature ranking, combination search."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from math import comb
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image

from .evaluation import NO_PROCESSING, CrossValidator, EvalReport
from .preprocess import DEFAULT_OFFSET
from .texture import METRICS, canonical_glcms, parse_feature_name

BEST_K = 8


def average_cooccurrence(image: np.ndarray, offset: int = DEFAULT_OFFSET) -> np.ndarray:
    """Pixel-wise mean of the 8 normalized canonical co-occurrence matrices."""
    mats = [m.normalized for m in canonical_glcms(image, offset)]
    return np.mean(mats, axis=0)


@dataclass
class PcaProjection:
    components: np.ndarray  # (k, d), orthonormal rows
    mean: np.ndarray        # (d,)
    explained_variance: np.ndarray
    projections: np.ndarray | None = None

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.mean.size)
        return (X - self.mean) @ self.components.T

    def inverse_transform(self, Z) -> np.ndarray:
        return np.asarray(Z) @ self.components + self.mean


def _complete_basis(basis: np.ndarray, n_needed: int, dim: int) -> np.ndarray:
    """Extend orthonormal rows with canonical vectors by Gram-Schmidt."""
    rows = list(basis)
    e = 0
    while len(rows) < n_needed:
        v = np.zeros(dim)
        v[e] = 1.0
        e += 1
        for _ in range(2):
            for r in rows:
                v -= (r @ v) * r
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            rows.append(v / norm)
    return np.array(rows)


def fit_pca(X, k: int) -> PcaProjection:
    """Top-``k`` principal axes of the rows of ``X`` through the n×n Gram matrix.

    Suited to n ≪ d (a few hundred 65536-dimensional matrices).  Axes beyond
    the rank of the centred data are completed to an orthonormal set.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        X = X.reshape(len(X), -1)
    n, d = X.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of samples n={n}")
    mean = X.mean(axis=0)
    Xc = X - mean
    gram = Xc @ Xc.T
    evals, evecs = np.linalg.eigh(gram)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    tol = max(evals[0], 0.0) * max(n, d) * np.finfo(float).eps
    rank = int(np.sum(evals > tol))
    use = min(k, rank)
    comps = (Xc.T @ evecs[:, :use]) / np.sqrt(evals[:use])
    comps = comps.T
    # one re-orthonormalization pass against round-off
    if use:
        q, r = np.linalg.qr(comps.T)
        comps = (q * np.sign(np.diag(r))).T
    if use < k:
        comps = _complete_basis(comps, k, d)
    explained = np.concatenate([np.clip(evals[:use], 0, None), np.zeros(k - use)]) / max(n - 1, 1)
    return PcaProjection(comps, mean, explained)


def pca_projection(real, synthetic, k: int) -> PcaProjection:
    """Fit on real rows only, then project real rows first and synthetic rows after."""
    real = np.asarray(real, dtype=np.float64).reshape(len(real), -1)
    synthetic = np.asarray(synthetic, dtype=np.float64).reshape(len(synthetic), -1)
    pca = fit_pca(real, k)
    pca.projections = pca.transform(np.vstack([real, synthetic]))
    return pca


def save_heatmap(values: np.ndarray, path: str | Path, cell: int = 12, cmap: str = "viridis") -> None:
    """Min-max normalized heatmap, one row per sample, as PNG."""
    from matplotlib import colormaps

    v = np.asarray(values, dtype=np.float64)
    if v.ndim == 1:
        v = v[:, None]
    lo, hi = v.min(), v.max()
    norm = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    rgb = (colormaps[cmap](norm)[..., :3] * 255).round().astype(np.uint8)
    rgb = np.repeat(np.repeat(rgb, cell, axis=0), cell, axis=1)
    Image.fromarray(rgb).save(path, format="PNG")


@dataclass
class FeatureRanking:
    auc: dict[str, dict[str, float]]
    best_per_metric: dict[str, dict[str, tuple[str, float]]] = field(default_factory=dict)
    best: dict[str, list[str]] = field(default_factory=dict)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["generator", "rank", "feature", "auc"])
            for g, table in self.auc.items():
                ordered = sorted(table.items(), key=lambda kv: (-kv[1], kv[0]))
                for rank, (name, a) in enumerate(ordered, start=1):
                    w.writerow([g, rank, name, repr(a)])

    def to_dict(self) -> dict:
        return {"auc": self.auc,
                "best_per_metric": {g: {m: list(v) for m, v in d.items()}
                                    for g, d in self.best_per_metric.items()},
                "best": self.best}


def rank_features(auc_table: Mapping[str, Mapping[str, float | EvalReport]],
                  top: int = BEST_K) -> FeatureRanking:
    """Order features by AUC (ties by name) per generator.

    ``auc_table[generator][feature]`` holds an AUC or an :class:`EvalReport`.
    """
    aucs = {g: {f: (v.auc if isinstance(v, EvalReport) else float(v)) for f, v in t.items()}
            for g, t in auc_table.items()}
    ranking = FeatureRanking(aucs)
    for g, table in aucs.items():
        ordered = sorted(table.items(), key=lambda kv: (-kv[1], kv[0]))
        ranking.best[g] = [name for name, _ in ordered[:top]]
        per_metric = {}
        for name, a in ordered:
            metric = parse_feature_name(name)[0]
            per_metric.setdefault(metric, (name, a))
        ranking.best_per_metric[g] = {m: per_metric[m] for m in METRICS if m in per_metric}
    return ranking


@dataclass
class CombinationResult:
    size: int
    n_evaluated: int
    best_auc: float
    best_auc_subset: list[str]
    best_accuracy: float
    best_accuracy_subset: list[str]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def combination_search(cv: CrossValidator, best: Mapping[str, Sequence[str]],
                       sizes: Sequence[int] = (2, 3, 4), train_spec=NO_PROCESSING,
                       test_spec=NO_PROCESSING) -> dict[str, dict[int, CombinationResult]]:
    """Retrain on every ``size``-subset of each generator's best features.

    The detector seed for a subset derives from the master seed and the
    subset id, so results do not depend on evaluation order.
    """
    out: dict[str, dict[int, CombinationResult]] = {}
    for g, names in best.items():
        names = list(names)
        out[g] = {}
        for size in sizes:
            if size > len(names):
                raise ValueError(f"cannot pick {size} of {len(names)} features")
            best_auc = (-np.inf, None)
            best_acc = (-np.inf, None)
            n = 0
            for subset in combinations(names, size):
                rep = cv.run(list(subset), train_spec, test_spec, generators=[g],
                             subset_key=f"{g}|{'+'.join(subset)}")[g]
                n += 1
                if rep.auc > best_auc[0]:
                    best_auc = (rep.auc, list(subset))
                if rep.balanced_accuracy > best_acc[0]:
                    best_acc = (rep.balanced_accuracy, list(subset))
            assert n == comb(len(names), size)
            out[g][size] = CombinationResult(size, n, float(best_auc[0]), best_auc[1],
                                             float(best_acc[0]), best_acc[1])
    return out
