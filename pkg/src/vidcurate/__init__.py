"""Interactive collection of customized video datasets.

The package proposes candidate clips for a user query, learns updatable
acceptance and rejection policies from per-round confirmations and
comments, double-checks low-confidence calls with the user, and scales
up collection automatically once the user is consistently satisfied.
All model reasoning sits behind the gateway's backend protocol; the
scripted backend makes every flow runnable offline and deterministic.
"""

from .domain import (
    Comment,
    CriterionTemplate,
    DatasetManifest,
    Decision,
    DoubleCheckBatch,
    KeywordSet,
    ManifestEntry,
    Phase,
    Query,
    RoundKind,
    RoundRecord,
    Session,
    SessionConfig,
    Stage,
    StandardTable,
    TableEntry,
    Verdict,
    VideoItem,
    transition_stage,
    validate_round,
)
from .gateway import BackendRef, ModelGateway, ScriptedBackend, ScriptedRule
from .orchestrator import Orchestrator
from .policy import FilterOutcome, apply_acceptance, apply_rejection, filter_batch
from .store import SessionStore

__version__ = "0.1.0"

__all__ = [
    "BackendRef",
    "Comment",
    "CriterionTemplate",
    "DatasetManifest",
    "Decision",
    "DoubleCheckBatch",
    "FilterOutcome",
    "KeywordSet",
    "ManifestEntry",
    "ModelGateway",
    "Orchestrator",
    "Phase",
    "Query",
    "RoundKind",
    "RoundRecord",
    "ScriptedBackend",
    "ScriptedRule",
    "Session",
    "SessionConfig",
    "SessionStore",
    "Stage",
    "StandardTable",
    "TableEntry",
    "Verdict",
    "VideoItem",
    "apply_acceptance",
    "apply_rejection",
    "filter_batch",
    "transition_stage",
    "validate_round",
]
