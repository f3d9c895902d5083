"""Trainable embedding models, their training loop, and checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .models import (
    ACTIVATIONS,
    EmbeddingInit,
    EntityEncoder,
    INIT_MODES,
    KINDS,
    KgeModel,
    build_model,
    gram_schmidt,
    neighbor_enhanced_init,
    predict,
    score_complex,
    score_note,
    score_transe,
)
from .training import (
    LOSS_MODES,
    TrainConfig,
    margin_ranking_loss,
    self_adversarial_loss,
    train,
)

__all__ = [
    "ACTIVATIONS",
    "EmbeddingInit",
    "EntityEncoder",
    "INIT_MODES",
    "KINDS",
    "KgeModel",
    "LOSS_MODES",
    "TrainConfig",
    "build_model",
    "gram_schmidt",
    "load_checkpoint",
    "margin_ranking_loss",
    "neighbor_enhanced_init",
    "predict",
    "save_checkpoint",
    "score_complex",
    "score_note",
    "score_transe",
    "self_adversarial_loss",
    "train",
]
