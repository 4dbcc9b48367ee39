"""Config-driven experiment runs: single features, ranking, combinations, robustness."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .analysis import combination_search, rank_features
from .augment import GRID, PostProcessSpec
from .dataset import load_manifest
from .detectors import DetectorConfig
from .evaluation import (NO_PROCESSING, CrossValidator, FeatureStore, experiment_metadata,
                         robustness_grid, roc_points, single_feature_table, write_roc_csv)
from .texture import FEATURE_NAMES

logger = logging.getLogger(__name__)

RUNCONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["manifest", "output_dir"],
    "properties": {
        "manifest": {"type": "string"},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "n_folds": {"type": "integer", "minimum": 2},
        "jobs": {"type": "integer", "minimum": 1},
        "detector": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["iforest", "ocsvm"]},
                "params": {"type": "object"},
            },
        },
        "features": {
            "oneOf": [
                {"enum": ["all", "best8"]},
                {"type": "array", "items": {"enum": list(FEATURE_NAMES)}, "minItems": 1},
            ]
        },
        "combination_sizes": {"type": "array", "items": {"enum": [2, 3, 4]}},
        "post_process": {
            "oneOf": [
                {"enum": ["grid", "none"]},
                {"type": "array", "items": {"type": "string"}},
            ]
        },
        "post_process_seed": {"type": "integer", "minimum": 0},
        "regimes": {"type": "array", "items": {"enum": ["processed", "clean"]}},
        "pooled": {"type": "boolean"},
        "roc": {"type": "boolean"},
    },
}

_ALLOWED_PARAMS = {"iforest": {"n_trees", "max_samples"},
                   "ocsvm": {"nu", "gamma", "standardize", "tol", "max_iter"}}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    manifest: Path
    output_dir: Path
    seed: int = 0
    n_folds: int = 2
    jobs: int = 1
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    features: str | list[str] = "all"
    combination_sizes: list[int] = field(default_factory=lambda: [2, 3, 4])
    post_process: list[PostProcessSpec] = field(default_factory=lambda: [NO_PROCESSING])
    regimes: list[str] = field(default_factory=lambda: ["processed", "clean"])
    pooled: bool = False
    roc: bool = True

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "RunConfig":
        try:
            jsonschema.validate(raw, RUNCONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        base_dir = base_dir or Path(".")
        det = raw.get("detector", {"name": "iforest"})
        params = dict(det.get("params", {}))
        bad = set(params) - _ALLOWED_PARAMS[det["name"]]
        if bad:
            raise ConfigError(f"detector/params: unknown key(s) {sorted(bad)}")
        pp_seed = raw.get("post_process_seed", raw.get("seed", 0))
        pp = raw.get("post_process", "none")
        try:
            if pp == "grid":
                specs = [NO_PROCESSING] + [PostProcessSpec(s.kind, s.value, pp_seed) for s in GRID]
            elif pp == "none":
                specs = [NO_PROCESSING]
            else:
                specs = [PostProcessSpec.parse(t, pp_seed) for t in pp]
        except ValueError as exc:
            raise ConfigError(f"post_process: {exc}") from None

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base_dir / p

        return cls(
            manifest=resolve(raw["manifest"]),
            output_dir=resolve(raw["output_dir"]),
            seed=raw.get("seed", 0),
            n_folds=raw.get("n_folds", 2),
            jobs=raw.get("jobs", 1),
            detector=DetectorConfig(det["name"], params),
            features=raw.get("features", "all"),
            combination_sizes=list(raw.get("combination_sizes", [2, 3, 4])),
            post_process=specs,
            regimes=list(raw.get("regimes", ["processed", "clean"])),
            pooled=raw.get("pooled", False),
            roc=raw.get("roc", True),
        )

    @classmethod
    def load(cls, path: str | Path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config not found: {path}")
        text = path.read_text(encoding="utf-8")
        try:
            raw = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
        except (yaml.YAMLError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping")
        raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_dict(raw, path.parent)

    def to_dict(self) -> dict:
        return {"manifest": str(self.manifest), "seed": self.seed, "n_folds": self.n_folds,
                "detector": self.detector.to_dict(), "features": self.features,
                "combination_sizes": self.combination_sizes,
                "post_process": [s.key for s in self.post_process],
                "regimes": self.regimes, "pooled": self.pooled}


def _dump(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def run_experiment(config: RunConfig) -> dict:
    """Run the configured grid and write reports into ``config.output_dir``."""
    manifest = load_manifest(config.manifest)
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    store = FeatureStore(manifest, n_jobs=config.jobs)
    cv = CrossValidator(manifest, config.detector, seed=config.seed, n_folds=config.n_folds,
                        store=store, pooled=config.pooled)

    candidates = list(FEATURE_NAMES) if isinstance(config.features, str) else list(config.features)
    single = single_feature_table(cv, candidates)
    ranking = rank_features(single)
    ranking.write_csv(out / "ranking.csv")

    if config.features == "best8":
        grid_features = sorted({f for names in ranking.best.values() for f in names},
                               key=FEATURE_NAMES.index)
    else:
        grid_features = candidates

    report: dict = {
        "config": config.to_dict(),
        "metadata": experiment_metadata(),
        "folds": json.loads(cv.folds.to_json()),
        "single_feature": {g: {f: rep.to_dict() for f, rep in t.items()} for g, t in single.items()},
        "ranking": ranking.to_dict(),
        "best_single": {g: {"feature": ranking.best[g][0], "auc": single[g][ranking.best[g][0]].auc,
                            "balanced_accuracy": single[g][ranking.best[g][0]].balanced_accuracy}
                        for g in single},
    }

    sizes = [s for s in config.combination_sizes if s <= len(candidates)]
    if sizes and len(candidates) >= 8:
        combos = combination_search(cv, ranking.best, sizes)
        report["combinations"] = {g: {str(k): v.to_dict() for k, v in d.items()}
                                  for g, d in combos.items()}

    processed = [s for s in config.post_process if s.kind != "none"]
    if processed:
        table = robustness_grid(cv, processed, grid_features, config.regimes)
        report["robustness"] = table.to_dict()
        for regime in config.regimes:
            table.write_csv(regime, out / f"robustness_{regime}.csv")
            (out / f"robustness_{regime}.txt").write_text(table.to_text(regime), encoding="utf-8")

    if config.roc:
        for g in single:
            name = ranking.best[g][0]
            write_roc_csv(_roc_for(cv, name, g), out / f"roc_{g}_{name}.csv")

    with open(out / "single_feature.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generator", "feature", "auc", "balanced_accuracy"])
        for g, t in single.items():
            for f, rep in t.items():
                w.writerow([g, f, repr(rep.auc), repr(rep.balanced_accuracy)])
    _dump(report, out / "report.json")
    return report


def _roc_for(cv: CrossValidator, feature: str, generator: str) -> np.ndarray:
    """ROC of scores pooled over folds for one feature and generator."""
    parts = [cv.fold_scores([feature], fold, generator) for fold in range(cv.folds.n_folds)]
    return roc_points(np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]))
