"""memfield: agent memory on a sparse reaction-diffusion field.

Memories are stored as Gaussian bumps on a 2D scalar field whose evolution
(diffusion, decay, importance weighting) doubles as the forgetting model.
Retrieval blends embedding similarity with field amplitude, importance and
recency; multiple agents can share structure through linear field coupling.

Typical use:

    >>> from memfield import MemoryStore, retrieve
    >>> store = MemoryStore()
    >>> store.inject("the deploy key lives in the blue vault", importance=0.9, when=0.0)
    >>> store.tick(until=3600.0)
    >>> retrieve(store, "where is the deploy key", k=1)[0].memory_id
    0
"""

from .config import Config, load_config
from .embedding import FieldPosition, LocalProvider, RemoteProvider, embed, project
from .errors import (
    ClockSkew,
    ConfigError,
    CorruptSnapshot,
    EmptyQuery,
    EmptyStore,
    EmptyText,
    ImportanceOutOfRange,
    IoFailure,
    MemfieldError,
    NumericalBlowup,
    ParseError,
    ProviderUnavailable,
    UnknownMemory,
    UnsupportedVersion,
)
from .field_engine import DenseField, FieldParams, ImportanceMask, max_stable_dt
from .memory_store import EvolutionReport, MemoryRecord, MemoryStore
from .multi_agent import (
    AgentEnsemble,
    CouplingMatrix,
    ScenarioReport,
    collective_intelligence,
    run_scenario,
    sharing_efficiency,
)
from .persistence import load, load_ensemble, save, save_ensemble
from .retrieval import (
    RetrievalMetrics,
    RetrievalWeights,
    ScoredResult,
    evaluate,
    retrieve,
)
from .sparse_field import SparseField, SparseMask

__version__ = "0.1.0"

__all__ = [
    # errors
    "MemfieldError",
    "ConfigError",
    "NumericalBlowup",
    "ProviderUnavailable",
    "IoFailure",
    "CorruptSnapshot",
    "UnsupportedVersion",
    "ParseError",
    "ClockSkew",
    "EmptyText",
    "EmptyQuery",
    "EmptyStore",
    "ImportanceOutOfRange",
    "UnknownMemory",
    # field engines
    "FieldParams",
    "DenseField",
    "ImportanceMask",
    "max_stable_dt",
    "SparseField",
    "SparseMask",
    # embeddings and placement
    "LocalProvider",
    "RemoteProvider",
    "FieldPosition",
    "embed",
    "project",
    # store and retrieval
    "MemoryStore",
    "MemoryRecord",
    "EvolutionReport",
    "RetrievalWeights",
    "ScoredResult",
    "RetrievalMetrics",
    "retrieve",
    "evaluate",
    # multi-agent coupling
    "AgentEnsemble",
    "CouplingMatrix",
    "ScenarioReport",
    "run_scenario",
    "collective_intelligence",
    "sharing_efficiency",
    # persistence
    "save",
    "load",
    "save_ensemble",
    "load_ensemble",
    # configuration
    "Config",
    "load_config",
    "__version__",
]
