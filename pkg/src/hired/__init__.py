"""Deterministic visual-token budgeting and dropping for partitioned images.

Given per-partition CLS-attention dumps, the engine splits a fixed token
budget between the full image and its sub-images (initial-layer attention
decides how much content each sub-image holds), then keeps each
partition's highest-importance tokens (final-layer attention).  Results
are emitted as JSON selection manifests; everything is exact and
deterministic, so identical inputs always produce identical manifests.
"""

__version__ = "0.1.0"

from .allocator import (
    AGGREGATIONS,
    DISTRIBUTIONS,
    BudgetPlan,
    EngineConfig,
    aggregate_heads,
    allocate_budget,
    resolve_budget,
    visual_content_scores,
)
from .efficiency import (
    CostEstimate,
    ModelProfile,
    TokenUsageStats,
    corpus_stats,
    estimate_cost,
    format_stats_table,
)
from .errors import (
    BudgetExceedsCapacity,
    ConfigError,
    EmptyCandidateList,
    HiredError,
    IndexOutOfRange,
    MalformedHeader,
    ManifestInvalid,
    ManifestMissing,
    MissingLayer,
    NegativeValue,
    NonFiniteValue,
    ShapeMismatch,
    TensorIOError,
    UnknownPartition,
    UnsupportedDtype,
)
from .geometry import (
    DEFAULT_BASE_RESOLUTION,
    DEFAULT_CANDIDATES,
    PartitionLayout,
    layout_from_grid,
    map_subimage_tokens,
    plan_partitions,
)
from .selector import (
    PartitionSelection,
    SelectionResult,
    feature_importance,
    run_hired,
    select_tokens,
)
from .tensor_io import (
    AttentionDump,
    Partition,
    Tensor3,
    generate_synthetic_dump,
    load_attention_dump,
    most_square_grid,
    read_npy,
    read_selection_manifest,
    write_attention_dump,
    write_npy,
    write_selection_manifest,
)

__all__ = [
    "__version__",
    "AGGREGATIONS",
    "DISTRIBUTIONS",
    "AttentionDump",
    "BudgetExceedsCapacity",
    "BudgetPlan",
    "ConfigError",
    "CostEstimate",
    "DEFAULT_BASE_RESOLUTION",
    "DEFAULT_CANDIDATES",
    "EmptyCandidateList",
    "EngineConfig",
    "HiredError",
    "IndexOutOfRange",
    "MalformedHeader",
    "ManifestInvalid",
    "ManifestMissing",
    "MissingLayer",
    "ModelProfile",
    "NegativeValue",
    "NonFiniteValue",
    "Partition",
    "PartitionLayout",
    "PartitionSelection",
    "SelectionResult",
    "ShapeMismatch",
    "Tensor3",
    "TensorIOError",
    "TokenUsageStats",
    "UnknownPartition",
    "UnsupportedDtype",
    "aggregate_heads",
    "allocate_budget",
    "corpus_stats",
    "estimate_cost",
    "feature_importance",
    "format_stats_table",
    "generate_synthetic_dump",
    "layout_from_grid",
    "load_attention_dump",
    "map_subimage_tokens",
    "most_square_grid",
    "plan_partitions",
    "read_npy",
    "read_selection_manifest",
    "resolve_budget",
    "run_hired",
    "select_tokens",
    "visual_content_scores",
    "write_attention_dump",
    "write_npy",
    "write_selection_manifest",
]
