"""Cross-subject transfer for sensor-based activity recognition.

A generator maps labeled source-subject features toward an unlabeled target
subject while a discriminator and a classifier shape it; the classifier that
results is evaluated on the target. Everything runs on a small float64
reverse-mode autodiff engine built on numpy.
"""

from .config import RunConfig
from .distance import assignment, rank_sources, w1_estimate, w1_exact
from .domain import Domain
from .estimators import ConvNetClassifier, KNNPCAClassifier, SaganClassifier
from .metrics import ConfusionMatrix, EvalReport, weighted_f1
from .model import SaganConfig, SaganModel
from .trainer import TrainState, fit

__version__ = "0.1.0"

__all__ = [
    "ConfusionMatrix", "ConvNetClassifier", "Domain", "EvalReport", "KNNPCAClassifier", "RunConfig",
    "SaganClassifier", "SaganConfig", "SaganModel", "TrainState", "assignment", "fit", "rank_sources",
    "w1_estimate", "w1_exact", "weighted_f1",
]
