"""Command-line interface.

Exit codes
----------
0  success
1  unexpected internal error
2  bad command-line usage
3  invalid run configuration or schema violation
4  missing input file
5  invalid manifest, image or feature data
6  unreadable or incompatible model file
7  one-class SVM solver failed to converge

Errors are reported on stderr as a single JSON object
``{"error": <kind>, "exit_code": <int>, "message": <text>}``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .analysis import average_cooccurrence, pca_projection, save_heatmap
from .augment import PostProcessSpec, encode_jpeg
from .dataset import (MANIFEST_SCHEMA_VERSION, DatasetManifest, FoldError, ManifestError,
                      SampleRecord, extract_patches, load_manifest, read_image)
from .detectors import (FORMAT_VERSION, ConvergenceError, DetectorConfig, ModelFormatError,
                        load_model, predicted_labels, save_model)
from .evaluation import FeatureStore, ingest_external_scores
from .experiment import ConfigError, RunConfig, run_experiment
from .texture import FEATURE_NAMES, FEATURE_SCHEMA_VERSION, feature_index

logger = logging.getLogger("blotforensics")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_CONFIG = 0, 1, 2, 3
EXIT_MISSING, EXIT_DATA, EXIT_MODEL, EXIT_CONVERGENCE = 4, 5, 6, 7

ID_COLUMNS = ("id", "label", "generator")


class DataError(ValueError):
    pass


def write_feature_csv(path, manifest: DatasetManifest, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*ID_COLUMNS, *FEATURE_NAMES])
        for rec, row in zip(manifest.records, values):
            w.writerow([rec.id, rec.label, rec.generator, *(repr(float(v)) for v in row)])


def read_feature_csv(path):
    """Return (rows of id columns, feature names, value matrix)."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"feature file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:3]) != ID_COLUMNS:
            raise DataError(f"{path}: header must start with {','.join(ID_COLUMNS)}")
        names = header[3:]
        ids, values = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            ids.append(dict(zip(ID_COLUMNS, row[:3])))
            try:
                values.append([float(v) for v in row[3:]])
            except ValueError:
                raise DataError(f"{path}: line {lineno} has a non-numeric feature") from None
    return ids, names, np.array(values, dtype=np.float64).reshape(len(ids), len(names))


def _select(names, values, wanted):
    idx = []
    for w in wanted:
        if w not in names:
            raise DataError(f"feature {w!r} not present in feature file")
        idx.append(names.index(w))
    return values[:, idx]


def _parse_features(text: str) -> list[str]:
    if text == "all":
        return list(FEATURE_NAMES)
    wanted = [t.strip() for t in text.split(",") if t.strip()]
    feature_index(wanted)
    return wanted


def cmd_extract(args) -> int:
    manifest = load_manifest(args.manifest)
    spec = PostProcessSpec.parse(args.post_process, args.seed)
    values = FeatureStore(manifest, n_jobs=args.jobs).get(spec)
    write_feature_csv(args.out, manifest, values)
    logger.info("wrote %d feature rows to %s", len(manifest), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    ids, names, values = read_feature_csv(args.features)
    wanted = _parse_features(args.feature)
    real = np.array([row["label"] == "real" for row in ids], dtype=bool)
    if real.sum() < 2:
        raise DataError("need at least 2 real rows to train a one-class detector")
    X = _select(names, values, wanted)[real]
    params = {}
    if args.detector == "iforest":
        params["n_trees"] = args.n_trees
        if args.max_samples is not None:
            params["max_samples"] = args.max_samples
    else:
        params["nu"] = args.nu
        params["gamma"] = args.gamma if args.gamma == "scale" else float(args.gamma)
        params["standardize"] = not args.no_standardize
    model = DetectorConfig(args.detector, params).build(args.seed).fit(X)
    save_model(model, args.out, metadata={"features": wanted, "n_train": int(real.sum()),
                                          "feature_schema_version": FEATURE_SCHEMA_VERSION})
    return EXIT_OK


def cmd_score(args) -> int:
    if not Path(args.model).is_file():
        raise FileNotFoundError(f"model not found: {args.model}")
    model, meta = load_model(args.model, with_metadata=True)
    ids, names, values = read_feature_csv(args.features)
    wanted = meta.get("features") or names
    scores = model.decision_function(_select(names, values, wanted)) if ids else np.array([])
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "score", "predicted_label"])
        for row, s, lab in zip(ids, scores, predicted_labels(scores)):
            w.writerow([row["id"], repr(float(s)), lab])
    return EXIT_OK


def cmd_evaluate(args) -> int:
    overrides = {"seed": args.seed, "jobs": args.jobs}
    if args.output_dir is not None:
        overrides["output_dir"] = str(Path(args.output_dir).resolve())
    config = RunConfig.load(args.config, overrides)
    report = run_experiment(config)
    for g, best in report["best_single"].items():
        print(f"{g}: best single feature {best['feature']} auc={best['auc']:.3f} "
              f"balanced_accuracy={best['balanced_accuracy']:.3f}")
    return EXIT_OK


def cmd_augment(args) -> int:
    manifest = load_manifest(args.manifest)
    spec = PostProcessSpec.parse(args.spec, args.seed, allow_off_grid=args.allow_off_grid)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    tag = spec.key.replace(":", "_")
    records = []
    for rec in manifest.records:
        image = read_image(rec.path)
        if spec.kind == "jpeg":
            target = outdir / f"{rec.id}.jpg"
            target.write_bytes(encode_jpeg(image, int(spec.value)))
        else:
            target = outdir / f"{rec.id}.png"
            Image.fromarray(spec.apply(image, seed_key=rec.id)).save(target, format="PNG")
        records.append(SampleRecord(
            id=f"{rec.id}@{tag}", path=target.resolve(), label=rec.label, generator=rec.generator,
            source_image_id=rec.source_image_id, original_id=rec.id,
            post_process=f"{spec.key}#seed={spec.rng_seed}"))
    DatasetManifest(tuple(records)).write(outdir / "manifest.jsonl")
    return EXIT_OK


def cmd_patches(args) -> int:
    manifest = load_manifest(args.manifest)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    records = []
    for i, rec in enumerate(manifest.records):
        image = read_image(rec.path)
        source = rec.source_image_id or rec.id
        for p, patch in enumerate(extract_patches(image, args.n, args.size, args.seed + i)):
            target = outdir / f"{rec.id}_p{p:03d}.png"
            Image.fromarray(patch).save(target, format="PNG")
            records.append(SampleRecord(f"{rec.id}_p{p:03d}", target.resolve(), rec.label,
                                        rec.generator, source))
    DatasetManifest(tuple(records), args.size).write(outdir / "manifest.jsonl")
    return EXIT_OK


def cmd_pca(args) -> int:
    manifest = load_manifest(args.manifest)
    from ._rng import make_rng

    real = manifest.real()
    synth = manifest.synthetic(args.generator)
    if args.per_class:
        rng = make_rng(args.seed, "pca")
        real = [real[i] for i in sorted(rng.choice(len(real), min(args.per_class, len(real)), replace=False))]
        synth = [synth[i] for i in sorted(rng.choice(len(synth), min(args.per_class, len(synth)), replace=False))]
    if not synth:
        raise DataError("no synthetic records to project")
    R = np.stack([average_cooccurrence(read_image(r.path)).ravel() for r in real])
    S = np.stack([average_cooccurrence(read_image(r.path)).ravel() for r in synth])
    pca = pca_projection(R, S, args.k)
    if args.out_png:
        save_heatmap(pca.projections, args.out_png)
    if args.out_csv:
        with open(args.out_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "label", *[f"pc{i + 1}" for i in range(args.k)]])
            for rec, row in zip(real + synth, pca.projections):
                w.writerow([rec.id, rec.label, *(repr(float(v)) for v in row)])
    return EXIT_OK


def cmd_ingest(args) -> int:
    manifest = load_manifest(args.manifest)
    reports = ingest_external_scores(args.scores, manifest)
    doc = {g: r.to_dict() for g, r in reports.items()}
    text = json.dumps(doc, sort_keys=True, indent=1) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_smoke(args) -> int:
    from .smoke import make_smoke_dataset

    path = make_smoke_dataset(args.outdir, n_sources=args.sources, n_fake=args.fakes,
                              generators=tuple(args.generators.split(",")), seed=args.seed)
    print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="blotforensics", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version",
                   version=(f"blotforensics {__version__} (model format {FORMAT_VERSION}, "
                            f"manifest schema {MANIFEST_SCHEMA_VERSION}, "
                            f"feature schema {FEATURE_SCHEMA_VERSION})"))
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract", help="compute the 40 texture features for every record")
    s.add_argument("manifest")
    s.add_argument("out")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--post-process", default="none", help="e.g. jpeg:90 or upscale:1.25")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("train", help="fit a one-class detector on the real rows of a feature file")
    s.add_argument("features")
    s.add_argument("out")
    s.add_argument("--detector", choices=["iforest", "ocsvm"], default="iforest")
    s.add_argument("--feature", default="all", help="feature name, comma list, or 'all'")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-trees", type=int, default=100)
    s.add_argument("--max-samples", type=int)
    s.add_argument("--nu", type=float, default=0.5)
    s.add_argument("--gamma", default="scale")
    s.add_argument("--no-standardize", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("score", help="score a feature file with a saved model")
    s.add_argument("model")
    s.add_argument("features")
    s.add_argument("out")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("evaluate", help="run a cross-validated experiment from a config file")
    s.add_argument("config")
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int)
    s.add_argument("--output-dir")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("augment", help="write a post-processed copy of a dataset")
    s.add_argument("manifest")
    s.add_argument("spec", help="upscale:F, down_upscale:F or jpeg:Q")
    s.add_argument("outdir")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--allow-off-grid", action="store_true")
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("patches", help="crop random patches from full-size images")
    s.add_argument("manifest")
    s.add_argument("outdir")
    s.add_argument("--n", type=int, default=50)
    s.add_argument("--size", type=int, default=256)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_patches)

    s = sub.add_parser("pca", help="PCA projections of averaged co-occurrence matrices")
    s.add_argument("manifest")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--out-png")
    s.add_argument("--out-csv")
    s.add_argument("--generator")
    s.add_argument("--per-class", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_pca)

    s = sub.add_parser("ingest", help="evaluate external binary-detector logits")
    s.add_argument("scores")
    s.add_argument("manifest")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("smoke", help="write the small separable demo dataset")
    s.add_argument("outdir")
    s.add_argument("--sources", type=int, default=20)
    s.add_argument("--fakes", type=int, default=20)
    s.add_argument("--generators", default="pix2pix,cyclegan,sg2ada,ddpm")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_smoke)
    return p


def _fail(kind: str, code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code, "message": str(exc)}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", EXIT_CONFIG, exc)
    except FileNotFoundError as exc:
        return _fail("missing_file", EXIT_MISSING, exc)
    except ModelFormatError as exc:
        return _fail("model_format", EXIT_MODEL, exc)
    except ConvergenceError as exc:
        return _fail("convergence", EXIT_CONVERGENCE, exc)
    except (ManifestError, FoldError, DataError, ValueError) as exc:
        return _fail("data", EXIT_DATA, exc)
    except Exception as exc:  # noqa: BLE001 - last-resort structured report
        logger.debug("internal error", exc_info=True)
        return _fail("internal", EXIT_INTERNAL, exc)


if __name__ == "__main__":
    sys.exit(main())
