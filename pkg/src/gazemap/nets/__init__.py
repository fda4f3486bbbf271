from .dense import DenseNet, Layer, NonFinite, mse
from .gradcheck import NonDifferentiablePoint, grad_check
from .matchnet import (
    DegenerateStats,
    Diverged,
    EyeFeature,
    MatchInputs,
    MatchNet,
    NormStats,
    TrainConfig,
    fit,
    fit_new,
    match_forward,
    normalize_inputs,
)
from .triplet import Embedder, triplet_hinge, triplet_loss, triplet_loss_and_grads

__all__ = [
    "DenseNet", "Layer", "NonFinite", "mse", "NonDifferentiablePoint", "grad_check", "DegenerateStats",
    "Diverged", "EyeFeature", "MatchInputs", "MatchNet", "NormStats", "TrainConfig", "fit", "fit_new",
    "match_forward", "normalize_inputs", "Embedder", "triplet_hinge", "triplet_loss", "triplet_loss_and_grads",
]
