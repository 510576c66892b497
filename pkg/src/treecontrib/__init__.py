"""Instance-level feature contributions for GBDT and random-forest models."""

__version__ = "0.1.0"

from .annotate import AnnotatedEnsemble, NodeAnnotation, Variant, annotate
from .contrib import ContributionVector, FcDistribution, explain_batch, explain_instance, rf_explain_instance
from .ensemble import (
    MISSING,
    Ensemble,
    EnsembleKind,
    FeatureCatalog,
    MissingPolicy,
    Operator,
    SplitPredicate,
    Tree,
    TreeNode,
    predict,
    trace_path,
    validate,
)
from .ingest import Dataset, load_csv, parse_native, parse_pmml, serialize_native, serialize_pmml

__all__ = [
    "MISSING",
    "AnnotatedEnsemble",
    "ContributionVector",
    "Dataset",
    "Ensemble",
    "EnsembleKind",
    "FcDistribution",
    "FeatureCatalog",
    "MissingPolicy",
    "NodeAnnotation",
    "Operator",
    "SplitPredicate",
    "Tree",
    "TreeNode",
    "Variant",
    "annotate",
    "explain_batch",
    "explain_instance",
    "load_csv",
    "parse_native",
    "parse_pmml",
    "predict",
    "rf_explain_instance",
    "serialize_native",
    "serialize_pmml",
    "trace_path",
    "validate",
]
