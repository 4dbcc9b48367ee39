"""Metrics and cross-validated experiments.

Scores follow one orientation throughout: larger means "more real".  AUC is
the probability that a real sample outranks a synthetic one (ties count one
half).  That equals the AUC with synthetic as the positive class and the
negated score as detector output, the orientation used in published tables.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import rankdata

from ._rng import derive_seed
from .augment import PostProcessSpec, codec_info
from .dataset import DatasetManifest, FoldAssignment, assign_folds, read_image
from .detectors import DetectorConfig
from .texture import FEATURE_NAMES, extract_features, feature_index

logger = logging.getLogger(__name__)

NO_PROCESSING = PostProcessSpec()
REGIMES = ("processed", "clean")


def _as_scores(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} scores are empty")
    return arr


def auc(scores_real, scores_synth) -> float:
    """Mann-Whitney AUC: P(real > synthetic) + P(tie) / 2."""
    r = _as_scores(scores_real, "real")
    s = _as_scores(scores_synth, "synthetic")
    ranks = rankdata(np.concatenate([r, s]))
    u = ranks[:r.size].sum() - r.size * (r.size + 1) / 2.0
    return float(u / (r.size * s.size))


def balanced_accuracy(scores_real, scores_synth, threshold: float = 0.0) -> float:
    """Mean of the real hit rate (score > threshold) and synthetic hit rate (score <= threshold)."""
    r = _as_scores(scores_real, "real")
    s = _as_scores(scores_synth, "synthetic")
    return float(0.5 * (np.mean(r > threshold) + np.mean(s <= threshold)))


def roc_points(scores_real, scores_synth) -> np.ndarray:
    """ROC with synthetic as positive class and ``-score`` as detector output.

    Returns rows ``(threshold, fpr, tpr)`` starting at (inf, 0, 0); a sample
    is flagged synthetic when its score is <= threshold.
    """
    r = _as_scores(scores_real, "real")
    s = _as_scores(scores_synth, "synthetic")
    thresholds = np.unique(np.concatenate([r, s]))
    r_sorted = np.sort(r)
    s_sorted = np.sort(s)
    fpr = np.searchsorted(r_sorted, thresholds, side="right") / r.size
    tpr = np.searchsorted(s_sorted, thresholds, side="right") / s.size
    head = np.array([[-np.inf, 0.0, 0.0]])
    return np.vstack([head, np.column_stack([thresholds, fpr, tpr])])


def write_roc_csv(points: np.ndarray, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in points:
            w.writerow([repr(float(t)), repr(float(f)), repr(float(p))])


def _load_features(path, spec: PostProcessSpec, key: str, offset: int) -> np.ndarray:
    return extract_features(spec.apply(read_image(path), seed_key=key), offset).values


class FeatureStore:
    """Lazily computed (n_records, 40) feature arrays, one per post-processing."""

    def __init__(self, manifest: DatasetManifest, n_jobs: int = 1, offset: int = 128):
        self.manifest = manifest
        self.n_jobs = n_jobs
        self.offset = offset
        self._cache: dict[str, np.ndarray] = {}
        self.row = {rec.id: i for i, rec in enumerate(manifest.records)}

    def get(self, spec: PostProcessSpec = NO_PROCESSING) -> np.ndarray:
        key = f"{spec.key}#{spec.rng_seed}"
        if key not in self._cache:
            jobs = [partial(_load_features, rec.path, spec, rec.id, self.offset)
                    for rec in self.manifest.records]
            if self.n_jobs == 1 or len(jobs) < 2:
                rows = [job() for job in jobs]
            else:
                rows = Parallel(n_jobs=self.n_jobs)(delayed(job)() for job in jobs)
            self._cache[key] = (np.vstack(rows) if rows
                                else np.empty((0, len(FEATURE_NAMES))))
        return self._cache[key]

    def put(self, spec: PostProcessSpec, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (len(self.manifest), len(FEATURE_NAMES)):
            raise ValueError("feature array does not match the manifest")
        self._cache[f"{spec.key}#{spec.rng_seed}"] = values


@dataclass
class FoldReport:
    fold: int
    auc: float
    balanced_accuracy: float
    n_train: int
    n_real_test: int
    n_synthetic: int


@dataclass
class EvalReport:
    generator: str
    auc: float
    balanced_accuracy: float
    n_real: int
    n_synthetic: int
    folds: list[FoldReport] = field(default_factory=list)
    post_process: dict = field(default_factory=dict)
    features: list[str] = field(default_factory=list)
    detector: dict = field(default_factory=dict)
    seed: int | None = None
    pooled: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


class CrossValidator:
    """Fold-wise one-class training on real patches and scoring of every generator.

    Fitted models are cached by (train post-processing, fold, feature subset),
    since they do not depend on the test condition or on the generator.

    ``detector`` is a :class:`DetectorConfig` or a callable ``seed -> estimator``.
    """

    def __init__(self, manifest: DatasetManifest, detector: DetectorConfig | Callable = None,
                 seed: int = 0, n_folds: int = 2, store: FeatureStore | None = None,
                 folds: FoldAssignment | None = None, pooled: bool = False):
        self.manifest = manifest
        self.detector = detector if detector is not None else DetectorConfig()
        self.seed = seed
        self.store = store or FeatureStore(manifest)
        self.folds = folds or assign_folds(manifest, n_folds, seed)
        self.pooled = pooled
        self._models: dict = {}
        recs = manifest.records
        self._real_fold = np.array([self.folds.fold_of(r.source_image_id) if r.is_real else -1
                                    for r in recs])
        self._generator = np.array([r.generator for r in recs], dtype=object)

    def _build(self, seed: int):
        if isinstance(self.detector, DetectorConfig):
            return self.detector.build(seed)
        return self.detector(seed)

    def _detector_dict(self) -> dict:
        if isinstance(self.detector, DetectorConfig):
            return self.detector.to_dict()
        return {"name": getattr(self.detector, "__name__", "custom"), "params": {}}

    def model(self, features: Sequence[str], fold: int, train_spec: PostProcessSpec,
              subset_key: str | None = None):
        cols = feature_index(list(features))
        subset_key = subset_key or ",".join(features)
        key = (train_spec.key, train_spec.rng_seed, fold, tuple(cols), subset_key)
        if key not in self._models:
            X = self.store.get(train_spec)[:, cols]
            train_rows = (self._real_fold >= 0) & (self._real_fold != fold)
            est = self._build(derive_seed(self.seed, "fit", fold, subset_key))
            self._models[key] = (est.fit(X[train_rows]), int(train_rows.sum()))
        return self._models[key]

    def fold_scores(self, features: Sequence[str], fold: int, generator: str,
                    train_spec: PostProcessSpec = NO_PROCESSING,
                    test_spec: PostProcessSpec = NO_PROCESSING):
        """(real test scores, synthetic scores) of one fold's model."""
        X = self.store.get(test_spec)[:, feature_index(list(features))]
        model, _ = self.model(features, fold, train_spec)
        return (model.decision_function(X[self._real_fold == fold]),
                model.decision_function(X[self._generator == generator]))

    def run(self, features: Sequence[str] | str, train_spec: PostProcessSpec = NO_PROCESSING,
            test_spec: PostProcessSpec = NO_PROCESSING, generators: Sequence[str] | None = None,
            subset_key: str | None = None) -> dict[str, EvalReport]:
        if isinstance(features, str):
            features = [features]
        features = list(features)
        cols = feature_index(features)
        generators = list(generators) if generators is not None else self.manifest.generators
        if not generators:
            raise ValueError("manifest has no synthetic records to evaluate")
        X_test = self.store.get(test_spec)[:, cols]

        per_fold: dict[str, list[FoldReport]] = {g: [] for g in generators}
        pooled_scores: dict[str, tuple[list, list]] = {g: ([], []) for g in generators}
        for fold in range(self.folds.n_folds):
            model, n_train = self.model(features, fold, train_spec, subset_key)
            real_rows = self._real_fold == fold
            if not real_rows.any():
                raise ValueError(f"fold {fold} holds no real test records")
            s_real = model.decision_function(X_test[real_rows])
            for g in generators:
                synth_rows = self._generator == g
                s_synth = model.decision_function(X_test[synth_rows])
                per_fold[g].append(FoldReport(fold, auc(s_real, s_synth),
                                              balanced_accuracy(s_real, s_synth),
                                              n_train, int(real_rows.sum()), int(synth_rows.sum())))
                pooled_scores[g][0].append(s_real)
                pooled_scores[g][1].append(s_synth)

        reports = {}
        for g in generators:
            folds = per_fold[g]
            if self.pooled:
                r = np.concatenate(pooled_scores[g][0])
                s = np.concatenate(pooled_scores[g][1])
                a, b = auc(r, s), balanced_accuracy(r, s)
            else:
                a = float(np.mean([f.auc for f in folds]))
                b = float(np.mean([f.balanced_accuracy for f in folds]))
            reports[g] = EvalReport(
                generator=g, auc=a, balanced_accuracy=b,
                n_real=sum(f.n_real_test for f in folds), n_synthetic=folds[0].n_synthetic,
                folds=folds,
                post_process={"train": train_spec.key, "test": test_spec.key,
                              "rng_seed": test_spec.rng_seed},
                features=features, detector=self._detector_dict(), seed=self.seed,
                pooled=self.pooled)
        return reports


def run_crossval(manifest: DatasetManifest, features, detector: DetectorConfig | None = None,
                 post_process: tuple[PostProcessSpec, PostProcessSpec] = (NO_PROCESSING, NO_PROCESSING),
                 seed: int = 0, n_folds: int = 2, store: FeatureStore | None = None,
                 pooled: bool = False) -> dict[str, EvalReport]:
    cv = CrossValidator(manifest, detector, seed=seed, n_folds=n_folds, store=store, pooled=pooled)
    return cv.run(features, *post_process)


def single_feature_table(cv: CrossValidator, features: Sequence[str] = FEATURE_NAMES,
                         train_spec: PostProcessSpec = NO_PROCESSING,
                         test_spec: PostProcessSpec = NO_PROCESSING) -> dict[str, dict[str, EvalReport]]:
    """``table[generator][feature]`` for every single-feature detector."""
    table: dict[str, dict[str, EvalReport]] = {}
    for name in features:
        for g, rep in cv.run([name], train_spec, test_spec).items():
            table.setdefault(g, {})[name] = rep
    return table


@dataclass
class RobustnessTable:
    """Best single-feature AUC per (regime, generator, condition)."""

    conditions: list[PostProcessSpec]
    generators: list[str]
    cells: dict = field(default_factory=dict)

    def rows(self, regime: str):
        for g in self.generators:
            yield g, [self.cells[regime][g][c.key] for c in self.conditions]

    def is_complete(self) -> bool:
        return all(self.cells.get(reg, {}).get(g, {}).get(c.key) is not None
                   for reg in REGIMES for g in self.generators for c in self.conditions)

    def to_text(self, regime: str) -> str:
        head = ["", *[c.label for c in self.conditions]]
        lines = [head]
        for g, cells in self.rows(regime):
            lines.append([g, *[f"{cell['auc']:.3f}" for cell in cells]])
        widths = [max(len(row[i]) for row in lines) for i in range(len(head))]
        return "\n".join("  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in lines) + "\n"

    def write_csv(self, regime: str, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["generator", *[c.key for c in self.conditions]])
            for g, cells in self.rows(regime):
                w.writerow([g, *[repr(cell["auc"]) for cell in cells]])

    def to_dict(self) -> dict:
        return {"conditions": [c.key for c in self.conditions], "generators": self.generators,
                "cells": self.cells}


def robustness_grid(cv: CrossValidator, conditions: Sequence[PostProcessSpec],
                    features: Sequence[str] = FEATURE_NAMES,
                    regimes: Sequence[str] = REGIMES) -> RobustnessTable:
    """Train on processed (``processed``) or clean (``clean``) real patches,
    test on processed ones, and keep the best single feature per cell."""
    conditions = list(conditions)
    if not any(c.kind == "none" for c in conditions):
        conditions = [NO_PROCESSING, *conditions]
    table = RobustnessTable(conditions, cv.manifest.generators)
    for regime in regimes:
        if regime not in REGIMES:
            raise ValueError(f"unknown training regime {regime!r}")
        table.cells[regime] = {g: {} for g in table.generators}
        for cond in conditions:
            train_spec = cond if regime == "processed" else NO_PROCESSING
            per = single_feature_table(cv, features, train_spec, cond)
            for g in table.generators:
                best = min(per[g].items(), key=lambda kv: (-kv[1].auc, kv[0]))
                table.cells[regime][g][cond.key] = {
                    "auc": best[1].auc, "balanced_accuracy": best[1].balanced_accuracy,
                    "feature": best[0]}
    return table


def read_external_scores(path: str | Path) -> dict[str, float]:
    """Rows of ``id,score`` (a ``logit`` column name is accepted too)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "id" not in reader.fieldnames:
            raise ValueError("external score file needs an 'id' column")
        col = "score" if "score" in reader.fieldnames else "logit"
        if col not in reader.fieldnames:
            raise ValueError("external score file needs a 'score' or 'logit' column")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                out[row["id"]] = float(row[col])
            except (TypeError, ValueError):
                raise ValueError(f"line {lineno}: bad score {row.get(col)!r}") from None
        return out


def ingest_external_scores(path_or_scores, manifest: DatasetManifest,
                           threshold: float = 0.0) -> dict[str, EvalReport]:
    """Evaluate a binary detector's logits (positive = synthetic) per generator.

    Logits are negated on the way in so the shared metrics see positive = real.
    """
    scores = (read_external_scores(path_or_scores) if isinstance(path_or_scores, (str, Path))
              else dict(path_or_scores))
    unknown = set(scores) - set(manifest.ids)
    if unknown:
        raise ValueError(f"{len(unknown)} score id(s) not in manifest, e.g. {sorted(unknown)[0]!r}")
    real = np.array([-scores[r.id] for r in manifest.real() if r.id in scores])
    reports = {}
    for g in manifest.generators:
        synth = np.array([-scores[r.id] for r in manifest.synthetic(g) if r.id in scores])
        if real.size == 0 or synth.size == 0:
            continue
        reports[g] = EvalReport(
            generator=g, auc=auc(real, synth),
            balanced_accuracy=balanced_accuracy(real, synth, -threshold),
            n_real=int(real.size), n_synthetic=int(synth.size),
            post_process={"train": "external", "test": "none"},
            detector={"name": "external", "params": {}})
    return reports


def experiment_metadata() -> dict:
    import numpy
    import sklearn
    from . import __version__
    return {"package_version": __version__, "numpy": numpy.__version__,
            "scikit_learn": sklearn.__version__, **codec_info()}
