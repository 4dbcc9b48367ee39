"""One-class detection of synthetic western blot images.

Patches are reduced to 40 texture features computed from co-occurrence
matrices of their high-pass residual; Isolation Forest or one-class SVM
models trained on pristine patches then score new ones (positive = real).
"""
__version__ = "0.1.0"

from .dataset import DatasetManifest, SampleRecord, assign_folds, extract_patches, load_manifest
from .detectors import (DetectorConfig, IsolationForestDetector, OneClassSVMDetector,
                        load_model, save_model)
from .evaluation import auc, balanced_accuracy, run_crossval
from .texture import FEATURE_NAMES, CooccurrenceFeatures, extract_features

__all__ = [
    "CooccurrenceFeatures", "DatasetManifest", "DetectorConfig", "FEATURE_NAMES",
    "IsolationForestDetector", "OneClassSVMDetector", "SampleRecord", "assign_folds", "auc",
    "balanced_accuracy", "extract_features", "extract_patches", "load_manifest", "load_model",
    "run_crossval", "save_model",
]
