"""One-class detectors scoring positive on inliers (real images)."""
from dataclasses import dataclass, field

from .iforest import (IsolationForestDetector, average_path_length, fit_isolation_forest,
                      score_isolation_forest)
from .ocsvm import ConvergenceError, OneClassSVMDetector, fit_ocsvm, score_ocsvm
from .persistence import FORMAT_VERSION, ModelFormatError, load_model, save_model

DETECTORS = {"iforest": IsolationForestDetector, "ocsvm": OneClassSVMDetector}


@dataclass(frozen=True)
class DetectorConfig:
    """Detector name plus constructor keyword arguments (seed excluded)."""

    name: str = "iforest"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in DETECTORS:
            raise ValueError(f"unknown detector {self.name!r}; choose from {sorted(DETECTORS)}")

    def build(self, seed: int = 0):
        if self.name == "iforest":
            return IsolationForestDetector(seed=seed, **self.params)
        return DETECTORS[self.name](**self.params)

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(sorted(self.params.items()))}


def predicted_labels(scores):
    """'real' where score > 0, 'synthetic' otherwise (ties go to synthetic)."""
    return ["real" if s > 0 else "synthetic" for s in scores]


__all__ = [
    "ConvergenceError", "DETECTORS", "DetectorConfig", "FORMAT_VERSION",
    "IsolationForestDetector", "ModelFormatError", "OneClassSVMDetector",
    "average_path_length", "fit_isolation_forest", "fit_ocsvm", "load_model",
    "predicted_labels", "save_model", "score_isolation_forest", "score_ocsvm",
]
