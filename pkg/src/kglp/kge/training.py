"""Negative-sampling SGD training for the embedding models.

Each step samples a batch of positive triples (uniform with replacement)
and, per positive, a set of uniformly drawn corrupted tails. The default
objective is the self-adversarial logistic loss: negative terms are weighted
by a softmax over their own (detached) scores. A plain margin-ranking loss
is available as a config switch. Grouped-transform models additionally train
the reverse direction, scoring the tail against the head slot with the
transposed rotation and reusing the same corrupted entities for that slot.

The optimizer is plain SGD with two parameter groups: encoder (projection)
parameters at their own learning rate, everything else at the main rate;
both decay by 10x every lr_decay_step steps. L2 regularization over all
trainable parameters enters the loss directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .models import KgeModel

LOSS_MODES = ("self_adversarial", "margin")
_LR_DECAY_FACTOR = 0.1
_ADV_TEMPERATURE = 1.0


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1000
    negative_sample_size: int = 1000
    learning_rate: float = 0.1
    encoder_learning_rate: float = 4e-5
    lr_decay_step: int = 2000
    regularization: float = 1e-9
    max_steps: int = 2000
    seed: int = 0
    loss: str = "self_adversarial"

    def __post_init__(self):
        for name in ("batch_size", "negative_sample_size", "lr_decay_step", "max_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("learning_rate", "encoder_learning_rate", "regularization"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.loss not in LOSS_MODES:
            raise ValueError(f"unknown loss mode {self.loss!r}")


def self_adversarial_loss(pos: torch.Tensor, neg: torch.Tensor) -> torch.Tensor:
    """Logistic loss with softmax-weighted negatives (weights detached)."""
    w = torch.softmax(_ADV_TEMPERATURE * neg.detach(), dim=1)
    pos_term = -F.logsigmoid(pos).mean()
    neg_term = -(w * F.logsigmoid(-neg)).sum(dim=1).mean()
    return (pos_term + neg_term) / 2


def margin_ranking_loss(pos: torch.Tensor, neg: torch.Tensor,
                        margin: float) -> torch.Tensor:
    return torch.relu(margin - pos.unsqueeze(1) + neg).mean()


def train(model: KgeModel, triples: np.ndarray, cfg: TrainConfig,
          deterministic: bool = False) -> tuple[KgeModel, list[float]]:
    """Train in place; returns the model and the per-step loss trace.

    Deterministic for a fixed seed in single-threaded mode; a non-finite
    loss aborts immediately, reporting the step it appeared at.
    """
    triples = np.asarray(triples, dtype=np.int64)
    if triples.ndim != 2 or triples.shape[1] != 3 or len(triples) == 0:
        raise ValueError("training triples must be a nonempty (n, 3) array")
    if deterministic:
        torch.set_num_threads(1)
    rng = np.random.default_rng(cfg.seed)
    groups = [{"params": model.main_parameters(), "lr": cfg.learning_rate}]
    enc = model.encoder_parameters()
    if enc:
        groups.append({"params": enc, "lr": cfg.encoder_learning_rate})
    opt = torch.optim.SGD(groups)
    sched = torch.optim.lr_scheduler.StepLR(opt, step_size=cfg.lr_decay_step,
                                            gamma=_LR_DECAY_FACTOR)
    n = len(triples)
    trace: list[float] = []
    for step in range(cfg.max_steps):
        idx = rng.integers(0, n, size=cfg.batch_size)
        batch = torch.as_tensor(triples[idx])
        h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]
        negs = torch.as_tensor(rng.integers(
            0, model.num_entities, size=(cfg.batch_size, cfg.negative_sample_size)))
        loss = _direction_loss(model, cfg, h, r, t, negs, "head_to_tail")
        if model.kind == "NOTE":
            rev = _direction_loss(model, cfg, h, r, t, negs, "tail_to_head")
            loss = (loss + rev) / 2
        if cfg.regularization > 0:
            reg = sum(p.pow(2).sum() for p in model.parameters())
            loss = loss + cfg.regularization * reg
        if not torch.isfinite(loss):
            raise RuntimeError(f"training diverged at step {step}: non-finite loss")
        trace.append(float(loss.detach()))
        opt.zero_grad()
        loss.backward()
        opt.step()
        sched.step()
    return model, trace


def _direction_loss(model: KgeModel, cfg: TrainConfig, h: torch.Tensor,
                    r: torch.Tensor, t: torch.Tensor, negs: torch.Tensor,
                    direction: str) -> torch.Tensor:
    if direction == "head_to_tail":
        pos = model.score_batch(h, r, t)
        neg = model.score_batch(h, r, negs)
    else:
        pos = model.score_batch(h, r, t, direction=direction)
        neg = model.score_batch(negs, r, t, direction=direction)
    if cfg.loss == "margin":
        return margin_ranking_loss(pos, neg, model.gamma)
    return self_adversarial_loss(pos, neg)
