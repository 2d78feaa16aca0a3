"""Hand-written numpy neural stack: GCNN encoder, multi-head classifier, EnsembleMLP."""
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gcnn import GcnnEncoder, GraphBatch, GraphStore
from .layers import Adam, Linear, Mlp, step_decay
from .losses import focal_grad, focal_loss, sigmoid
from .models import (
    COGClassifier,
    CogNetwork,
    EnsembleMLPClassifier,
    TrainConfig,
    TrainingDivergedError,
    multihead_train,
    predict_score,
    root_matrix,
    routed_loss_grad,
)

__all__ = [
    "Adam",
    "COGClassifier",
    "CheckpointError",
    "CogNetwork",
    "EnsembleMLPClassifier",
    "GcnnEncoder",
    "GraphBatch",
    "GraphStore",
    "Linear",
    "Mlp",
    "TrainConfig",
    "TrainingDivergedError",
    "focal_grad",
    "focal_loss",
    "load_checkpoint",
    "multihead_train",
    "predict_score",
    "root_matrix",
    "routed_loss_grad",
    "save_checkpoint",
    "sigmoid",
    "step_decay",
]
