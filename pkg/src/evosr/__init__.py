"""Symbolic regression with evolvable selection operators.

The inner loop (`run_sr`) is a tree-based GP engine with linear scaling
and LOOCV fitness; the outer loop (`run_meta`) evolves the selection
operator itself, asking a chat model for candidates and pruning them with
dominance-dissimilarity survival.
"""

from .dataio import (
    DataError,
    Dataset,
    DatasetSplit,
    load_csv,
    load_manifest,
    make_split,
    make_synthetic,
    manifest_splits,
    synthetic_suite,
)
from .engine import ConfigError, OperatorEvaluationError, SRConfig, SRResult, run_sr
from .exprtree import ExpressionTree, FUNCTIONS, grow_tree, ramped_half_and_half
from .fitness import Individual, evaluate_individual, fit_linear_scaling, r2_score
from .hosted import (
    HostBadOutputError,
    HostError,
    HostScriptError,
    HostStartupError,
    HostTimeoutError,
    HostedOperator,
    host_available,
)
from .llm import ChatGateway, GatewayError, LLMConfig, ReplayMissError, build_prompt, extract_code
from .meta import (
    MetaConfig,
    MetaError,
    MetaResult,
    OperatorCandidate,
    run_meta,
)
from .selection import (
    REGISTRY,
    EvolutionStatus,
    PhenotypeRecord,
    SelectionRequest,
    UnknownOperatorError,
    resolve_operator,
)

__version__ = "0.1.0"

__all__ = [
    "ChatGateway",
    "ConfigError",
    "DataError",
    "Dataset",
    "DatasetSplit",
    "EvolutionStatus",
    "ExpressionTree",
    "FUNCTIONS",
    "GatewayError",
    "HostBadOutputError",
    "HostError",
    "HostScriptError",
    "HostStartupError",
    "HostTimeoutError",
    "HostedOperator",
    "Individual",
    "LLMConfig",
    "MetaConfig",
    "MetaError",
    "MetaResult",
    "OperatorCandidate",
    "OperatorEvaluationError",
    "PhenotypeRecord",
    "REGISTRY",
    "ReplayMissError",
    "SRConfig",
    "SRResult",
    "SelectionRequest",
    "UnknownOperatorError",
    "build_prompt",
    "evaluate_individual",
    "extract_code",
    "fit_linear_scaling",
    "grow_tree",
    "host_available",
    "load_csv",
    "load_manifest",
    "make_split",
    "make_synthetic",
    "manifest_splits",
    "r2_score",
    "ramped_half_and_half",
    "resolve_operator",
    "run_meta",
    "run_sr",
    "synthetic_suite",
]
