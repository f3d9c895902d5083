"""YAML pipeline configuration with defaults, validation, env overrides.

The file is a nested mapping; unknown keys anywhere are rejected by name.
Every setting can be overridden through environment variables prefixed
KGLP_, with double underscores separating nesting levels, e.g.
KGLP_RETRIEVAL__CAP=500 or KGLP_RERANK__NORMALIZATION=minmax. Values parse
as YAML scalars. List-valued sections (kge.models) cannot be overridden
through the environment.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .kge.models import ACTIVATIONS, INIT_MODES, KINDS
from .kge.training import LOSS_MODES, TrainConfig
from .pathrules import RULES
from .rerank import NORMALIZATIONS

ENV_PREFIX = "KGLP_"

_MODEL_KIND_DEFAULTS = {
    "TransE": {"dim": 600, "batch_size": 16384, "negative_sample_size": 16384},
    "ComplEx": {"dim": 600, "batch_size": 16384, "negative_sample_size": 16384},
    "NOTE": {"dim": 200, "batch_size": 1000, "negative_sample_size": 1000},
}


@dataclass(frozen=True)
class DatasetConfig:
    triples: str
    num_entities: int | None = None
    num_relations: int | None = None
    entity_features: str | None = None
    relation_features: str | None = None
    upsample_weights: str | None = None


@dataclass(frozen=True)
class SplitConfig:
    dev_ratio: float = 0.15


@dataclass(frozen=True)
class PieConfig:
    enabled: bool = True
    sample_sizes: tuple[int, ...] = (6, 10)
    smoothing: float = 1e-6
    context_hops: int = 3
    max_frontier: int | None = None


@dataclass(frozen=True)
class SemanticConfig:
    enabled: bool = False
    num_subspaces: int = 64
    centroids: int = 64
    iters: int = 25
    k: int = 1000


@dataclass(frozen=True)
class RetrievalConfig:
    cap: int = 20000
    rules: tuple[str, ...] = tuple(RULES)
    pie: PieConfig = field(default_factory=PieConfig)
    semantic: SemanticConfig = field(default_factory=SemanticConfig)


@dataclass(frozen=True)
class FusionConfig:
    n: int = 20000


@dataclass(frozen=True)
class InitConfig:
    mode: str = "random"
    projection: bool = False
    activation: str = "none"


@dataclass(frozen=True)
class KgeModelConfig:
    tag: str
    kind: str
    dim: int
    gamma: float = 3.0
    group_size: int = 20
    init: InitConfig = field(default_factory=InitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)


@dataclass(frozen=True)
class RerankConfig:
    grid_step: float = 0.1
    normalization: str = "rank"
    budget: int = 500_000


@dataclass(frozen=True)
class PipelineConfig:
    dataset: DatasetConfig
    split: SplitConfig
    retrieval: RetrievalConfig
    fusion: FusionConfig
    kge_models: tuple[KgeModelConfig, ...]
    rerank: RerankConfig
    seed: int = 0
    deterministic: bool = True


class ConfigError(ValueError):
    pass


def _check_keys(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def apply_env_overrides(raw: dict, environ=None) -> dict:
    """Overlay KGLP_-prefixed environment values onto the raw config tree."""
    environ = os.environ if environ is None else environ
    for key, value in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in key[len(ENV_PREFIX):].split("__")]
        node = raw
        for part in path[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[path[-1]] = yaml.safe_load(value)
    return raw


def _parse_dataset(raw: dict) -> DatasetConfig:
    _check_keys(raw, {"triples", "num_entities", "num_relations",
                      "entity_features", "relation_features",
                      "upsample_weights"}, "dataset")
    _require("triples" in raw, "dataset.triples is required")
    cfg = DatasetConfig(**raw)
    for name in ("num_entities", "num_relations"):
        v = getattr(cfg, name)
        _require(v is None or v >= 1, f"dataset.{name} must be >= 1")
    return cfg


def _parse_retrieval(raw: dict) -> RetrievalConfig:
    _check_keys(raw, {"cap", "rules", "pie", "semantic"}, "retrieval")
    pie_raw = dict(raw.get("pie", {}))
    _check_keys(pie_raw, {"enabled", "sample_sizes", "smoothing",
                          "context_hops", "max_frontier"}, "retrieval.pie")
    if "sample_sizes" in pie_raw:
        pie_raw["sample_sizes"] = tuple(pie_raw["sample_sizes"])
    pie = PieConfig(**pie_raw)
    sem_raw = dict(raw.get("semantic", {}))
    _check_keys(sem_raw, {"enabled", "num_subspaces", "centroids", "iters", "k"},
                "retrieval.semantic")
    semantic = SemanticConfig(**sem_raw)
    rules = tuple(raw.get("rules", RULES))
    for rule in rules:
        _require(rule in RULES, f"retrieval.rules contains unknown rule {rule!r}")
    cfg = RetrievalConfig(cap=raw.get("cap", 20000), rules=rules,
                          pie=pie, semantic=semantic)
    _require(cfg.cap >= 1, "retrieval.cap must be >= 1")
    _require(all(s >= 1 for s in pie.sample_sizes),
             "retrieval.pie.sample_sizes must be >= 1")
    _require(pie.smoothing >= 0, "retrieval.pie.smoothing must be >= 0")
    _require(pie.context_hops >= 1, "retrieval.pie.context_hops must be >= 1")
    _require(semantic.k >= 1, "retrieval.semantic.k must be >= 1")
    _require(semantic.num_subspaces >= 1 and semantic.centroids >= 1,
             "retrieval.semantic index parameters must be >= 1")
    return cfg


def _parse_model(raw: dict, index: int) -> KgeModelConfig:
    where = f"kge.models[{index}]"
    _check_keys(raw, {"tag", "kind", "dim", "gamma", "group_size",
                      "init", "train"}, where)
    _require("kind" in raw, f"{where}.kind is required")
    kind = raw["kind"]
    _require(kind in KINDS, f"{where}.kind must be one of {list(KINDS)}")
    kind_defaults = _MODEL_KIND_DEFAULTS[kind]
    init_raw = dict(raw.get("init", {}))
    _check_keys(init_raw, {"mode", "projection", "activation"}, f"{where}.init")
    init = InitConfig(**init_raw)
    _require(init.mode in INIT_MODES,
             f"{where}.init.mode must be one of {list(INIT_MODES)}")
    _require(init.activation in ACTIVATIONS,
             f"{where}.init.activation must be one of {list(ACTIVATIONS)}")
    train_raw = dict(raw.get("train", {}))
    _check_keys(train_raw, {"batch_size", "negative_sample_size", "learning_rate",
                            "encoder_learning_rate", "lr_decay_step",
                            "regularization", "max_steps", "seed", "loss"},
                f"{where}.train")
    for key in ("batch_size", "negative_sample_size"):
        train_raw.setdefault(key, kind_defaults[key])
    try:
        train = TrainConfig(**train_raw)
    except ValueError as exc:
        raise ConfigError(f"{where}.train: {exc}") from exc
    _require(train.loss in LOSS_MODES,
             f"{where}.train.loss must be one of {list(LOSS_MODES)}")
    cfg = KgeModelConfig(tag=raw.get("tag", f"{kind}-{index}"), kind=kind,
                         dim=raw.get("dim", kind_defaults["dim"]),
                         gamma=raw.get("gamma", 3.0),
                         group_size=raw.get("group_size", 20),
                         init=init, train=train)
    _require(cfg.dim >= 1, f"{where}.dim must be >= 1")
    _require(cfg.group_size >= 1, f"{where}.group_size must be >= 1")
    if kind == "ComplEx":
        _require(cfg.dim % 2 == 0, f"{where}.dim must be even for ComplEx")
    if kind == "NOTE":
        _require(cfg.dim % cfg.group_size == 0,
                 f"{where}.dim must be divisible by group_size")
    return cfg


def parse_config(raw: dict) -> PipelineConfig:
    """Validate a raw mapping and apply defaults; see validate_config."""
    _require(isinstance(raw, dict), "config root must be a mapping")
    _check_keys(raw, {"seed", "deterministic", "dataset", "split", "retrieval",
                      "fusion", "kge", "rerank"}, "config root")
    _require("dataset" in raw, "dataset section is required")
    dataset = _parse_dataset(dict(raw["dataset"]))
    split_raw = dict(raw.get("split", {}))
    _check_keys(split_raw, {"dev_ratio"}, "split")
    split = SplitConfig(**split_raw)
    _require(0 < split.dev_ratio < 1, "split.dev_ratio must be in (0, 1)")
    retrieval = _parse_retrieval(dict(raw.get("retrieval", {})))
    fusion_raw = dict(raw.get("fusion", {}))
    _check_keys(fusion_raw, {"n"}, "fusion")
    fusion = FusionConfig(**fusion_raw)
    _require(fusion.n >= 1, "fusion.n must be >= 1")
    kge_raw = dict(raw.get("kge", {}))
    _check_keys(kge_raw, {"models"}, "kge")
    models_raw = kge_raw.get("models", [{"kind": "TransE"}])
    _require(isinstance(models_raw, list) and models_raw,
             "kge.models must be a nonempty list")
    models = tuple(_parse_model(dict(m), i) for i, m in enumerate(models_raw))
    tags = [m.tag for m in models]
    _require(len(set(tags)) == len(tags), "kge model tags must be unique")
    rerank_raw = dict(raw.get("rerank", {}))
    _check_keys(rerank_raw, {"grid_step", "normalization", "budget"}, "rerank")
    rerank = RerankConfig(**rerank_raw)
    _require(0 < rerank.grid_step <= 1, "rerank.grid_step must be in (0, 1]")
    _require(rerank.normalization in NORMALIZATIONS,
             f"rerank.normalization must be one of {list(NORMALIZATIONS)}")
    _require(rerank.budget >= 1, "rerank.budget must be >= 1")
    seed = raw.get("seed", 0)
    _require(isinstance(seed, int) and seed >= 0, "seed must be a non-negative integer")
    return PipelineConfig(dataset=dataset, split=split, retrieval=retrieval,
                          fusion=fusion, kge_models=models, rerank=rerank,
                          seed=seed, deterministic=raw.get("deterministic", True))


def validate_config(path, environ=None) -> PipelineConfig:
    """Load, override from the environment, validate, and resolve paths.

    Referenced data files are checked for existence here; relative paths
    resolve against the config file's directory.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    raw = apply_env_overrides(raw, environ)
    cfg = parse_config(raw)
    base = path.parent
    resolved = {}
    for name in ("triples", "entity_features", "relation_features", "upsample_weights"):
        value = getattr(cfg.dataset, name)
        if value is None:
            resolved[name] = None
            continue
        p = Path(value)
        if not p.is_absolute():
            p = base / p
        if not p.exists():
            raise ConfigError(f"dataset.{name} file not found: {p}")
        resolved[name] = str(p)
    dataset = DatasetConfig(num_entities=cfg.dataset.num_entities,
                            num_relations=cfg.dataset.num_relations, **resolved)
    if cfg.retrieval.semantic.enabled:
        _require(dataset.entity_features is not None
                 and dataset.relation_features is not None,
                 "semantic retrieval requires entity and relation feature files")
    for m in cfg.kge_models:
        if m.init.mode != "random":
            _require(dataset.entity_features is not None,
                     f"kge model {m.tag}: init mode {m.init.mode!r} "
                     "requires dataset.entity_features")
    return PipelineConfig(dataset=dataset, split=cfg.split,
                          retrieval=cfg.retrieval, fusion=cfg.fusion,
                          kge_models=cfg.kge_models, rerank=cfg.rerank,
                          seed=cfg.seed, deterministic=cfg.deterministic)
