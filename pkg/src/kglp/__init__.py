"""Retrieve-then-rerank link prediction over knowledge graphs.

Candidate tails for (head, relation) queries come from three retrieval
families: co-occurrence path rules, typing posteriors over the query
neighborhood, and product-quantized nearest neighbors in a text feature
space. Lists are fused by accuracy-ranked priority infilling, rescored by
trainable embedding models, and combined by a greedy-then-grid-search
ensemble, evaluated with Recall and MRR@10.
"""

from .candidates import CandidateList, read_candidate_lists, write_candidate_lists
from .config import PipelineConfig, validate_config
from .entity_typing import (
    PriorTables,
    TypingModel,
    estimate_priors,
    fit_typing_model,
    load_upsample_weights,
    mask_and_score,
    pie_retrieve,
)
from .evaluation import EvalSplit, carve_dev_split, mrr_at_10, model_accuracy, recall_at_cap
from .features import FeatureMatrix, load_features, save_features
from .fusion import (
    RetrievalModelReport,
    build_reports,
    majority_vote_merge,
    priority_infill,
    priority_order,
)
from .graph import KnowledgeGraph, ingest_triples
from .pathrules import (
    CountTables,
    ENTITY_RULES,
    RELATION_RULES,
    RULES,
    build_count_tables,
    retrieve_by_rule,
    rule_score,
)
from .pipeline import PipelineRun
from .pq import PQIndex, pq_knn, semantic_retrieve, train_pq
from .rerank import (
    EnsembleSpec,
    ModelScoreSet,
    ensemble_predict,
    greedy_select,
    grid_search_weights,
    normalize_scores,
)

__version__ = "0.1.0"

__all__ = [
    "CandidateList",
    "CountTables",
    "ENTITY_RULES",
    "EnsembleSpec",
    "EvalSplit",
    "FeatureMatrix",
    "KnowledgeGraph",
    "ModelScoreSet",
    "PQIndex",
    "PipelineConfig",
    "PipelineRun",
    "PriorTables",
    "RELATION_RULES",
    "RULES",
    "RetrievalModelReport",
    "TypingModel",
    "build_count_tables",
    "build_reports",
    "carve_dev_split",
    "ensemble_predict",
    "estimate_priors",
    "fit_typing_model",
    "greedy_select",
    "grid_search_weights",
    "ingest_triples",
    "load_features",
    "load_upsample_weights",
    "majority_vote_merge",
    "mask_and_score",
    "model_accuracy",
    "mrr_at_10",
    "normalize_scores",
    "pie_retrieve",
    "pq_knn",
    "priority_infill",
    "priority_order",
    "read_candidate_lists",
    "recall_at_cap",
    "retrieve_by_rule",
    "rule_score",
    "save_features",
    "semantic_retrieve",
    "train_pq",
    "validate_config",
    "write_candidate_lists",
]
