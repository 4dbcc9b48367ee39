"""Versioned model files.

A model file is a JSON object::

    {"magic": "BLOTFORENSICS-MODEL", "format_version": 1,
     "detector": "iforest" | "ocsvm", "params": {...}, "seed": int | null,
     "metadata": {...}, "payload": {...}, "checksum": "sha256:<hex>"}

Arrays in the payload are stored as base64 of their little-endian bytes so
that loading restores every float bit for bit.  The checksum covers the
canonical JSON encoding of every other key.
"""
from __future__ import annotations

import base64
import hashlib
import json
from pathlib import Path

import numpy as np

from .iforest import IsolationForestDetector, IsolationTree
from .ocsvm import OneClassSVMDetector

MAGIC = "BLOTFORENSICS-MODEL"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _enc(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    dtype = arr.dtype.newbyteorder("<")
    return {"dtype": dtype.str, "shape": list(arr.shape),
            "data": base64.b64encode(arr.astype(dtype).tobytes()).decode("ascii")}


def _dec(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"])
    return arr.astype(arr.dtype.newbyteorder("="))


def _canonical(doc: dict) -> bytes:
    body = {k: v for k, v in doc.items() if k != "checksum"}
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _payload(model) -> tuple[str, dict, int | None, dict]:
    if isinstance(model, IsolationForestDetector):
        trees = [{f: _enc(getattr(t, f)) for f in
                  ("feature", "threshold", "left", "right", "size", "depth")}
                 for t in model.trees_]
        payload = {"trees": trees, "max_samples": model.max_samples_,
                   "height_limit": model.height_limit_, "n_features_in": model.n_features_in_}
        params = {"n_trees": model.n_trees, "max_samples": model.max_samples}
        return "iforest", params, int(model.seed), payload
    if isinstance(model, OneClassSVMDetector):
        payload = {
            "support": _enc(model.support_),
            "support_vectors": _enc(model.support_vectors_),
            "dual_coef": _enc(model.dual_coef_),
            "rho": _enc(np.array([model.rho_])),
            "gamma": _enc(np.array([model.gamma_])),
            "mean": _enc(model.mean_),
            "scale": _enc(model.scale_),
            "kkt_residual": float(model.kkt_residual_),
            "n_iter": int(model.n_iter_),
            "n_features_in": int(model.n_features_in_),
            "n_train": int(model.n_train_),
        }
        gamma = model.gamma if model.gamma == "scale" else float(model.gamma)
        params = {"nu": float(model.nu), "gamma": gamma, "standardize": bool(model.standardize),
                  "tol": float(model.tol), "max_iter": model.max_iter}
        return "ocsvm", params, None, payload
    raise TypeError(f"cannot serialize {type(model).__name__}")


def model_to_dict(model, metadata: dict | None = None) -> dict:
    detector, params, seed, payload = _payload(model)
    doc = {"magic": MAGIC, "format_version": FORMAT_VERSION, "detector": detector,
           "params": params, "seed": seed, "metadata": metadata or {}, "payload": payload}
    doc["checksum"] = "sha256:" + hashlib.sha256(_canonical(doc)).hexdigest()
    return doc


def model_from_dict(doc: dict):
    if not isinstance(doc, dict) or doc.get("magic") != MAGIC:
        raise ModelFormatError("not a model file (bad magic)")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {doc.get('format_version')!r}, "
            f"this build reads {FORMAT_VERSION}")
    expected = "sha256:" + hashlib.sha256(_canonical(doc)).hexdigest()
    if doc.get("checksum") != expected:
        raise ModelFormatError("model checksum mismatch; file is corrupted")
    p = doc["payload"]
    if doc["detector"] == "iforest":
        model = IsolationForestDetector(seed=doc["seed"], **doc["params"])
        model.trees_ = [IsolationTree(**{k: _dec(v) for k, v in t.items()}) for t in p["trees"]]
        model.max_samples_ = p["max_samples"]
        model.height_limit_ = p["height_limit"]
        model.n_features_in_ = p["n_features_in"]
        return model
    if doc["detector"] == "ocsvm":
        model = OneClassSVMDetector(**doc["params"])
        model.support_ = _dec(p["support"])
        model.support_vectors_ = _dec(p["support_vectors"])
        model.dual_coef_ = _dec(p["dual_coef"])
        model.rho_ = float(_dec(p["rho"])[0])
        model.gamma_ = float(_dec(p["gamma"])[0])
        model.mean_ = _dec(p["mean"])
        model.scale_ = _dec(p["scale"])
        model.kkt_residual_ = p["kkt_residual"]
        model.n_iter_ = p["n_iter"]
        model.n_features_in_ = p["n_features_in"]
        model.n_train_ = p["n_train"]
        return model
    raise ModelFormatError(f"unknown detector {doc['detector']!r}")


def save_model(model, path: str | Path, metadata: dict | None = None) -> None:
    doc = model_to_dict(model, metadata)
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_model(path: str | Path, with_metadata: bool = False):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from exc
    model = model_from_dict(doc)
    return (model, doc.get("metadata", {})) if with_metadata else model
