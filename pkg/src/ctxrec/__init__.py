"""Context-aware top-N recommendation with contextual dimensions as virtual items."""

from ctxrec.domain import (
    Access,
    ContextDimension,
    Dataset,
    DimensionRegistry,
    Session,
    build_dataset,
    decode_virtual_item,
    encode_virtual_item,
)
from ctxrec.davi import DaviConfig, augment_dataset, augment_session, observables_with_context
from ctxrec.cf import CFRecommender, SimilarityModel, build_similarity_model
from ctxrec.ar import ARRecommender, Rule, RuleModel

__version__ = "0.1.0"

__all__ = [
    "Access",
    "ARRecommender",
    "CFRecommender",
    "ContextDimension",
    "DaviConfig",
    "Dataset",
    "DimensionRegistry",
    "Rule",
    "RuleModel",
    "Session",
    "SimilarityModel",
    "augment_dataset",
    "augment_session",
    "build_dataset",
    "build_similarity_model",
    "decode_virtual_item",
    "encode_virtual_item",
    "observables_with_context",
]
