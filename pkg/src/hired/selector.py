"""Phase 2: keep each partition's highest-importance tokens.

A token's feature importance is its head-aggregated final-layer CLS
attention.  Each partition keeps the top-n tokens for its allocated budget
n, ties broken toward the lower token index, and the kept indices are
emitted in ascending raster order so downstream positional encodings stay
meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocator import (
    BudgetPlan,
    EngineConfig,
    aggregate_heads,
    allocate_budget,
    resolve_budget,
    visual_content_scores,
)
from .errors import ConfigError
from .geometry import PartitionLayout
from .tensor_io import AttentionDump


@dataclass(frozen=True)
class PartitionSelection:
    """Kept tokens for one partition; importance is carried only when the
    run asked for scores to be embedded."""

    partition_id: int
    allocated: int
    kept_indices: list[int]
    importance: np.ndarray | None = None


@dataclass(frozen=True)
class SelectionResult:
    partitions: list[PartitionSelection]
    total_kept: int


def feature_importance(
    dump: AttentionDump,
    partition_id: int,
    final_layer: int,
    aggregation: str = "sum",
) -> np.ndarray:
    """Per-token importance of one partition: (N,) f32, heads aggregated
    in ascending order at ``final_layer``."""
    slot = dump.layer_pos(final_layer)
    part = dump.partition(partition_id)
    return aggregate_heads(part.tensor[slot], aggregation)


def select_tokens(importance: np.ndarray, n: int) -> list[int]:
    """Indices of the ``n`` largest importance values, ascending.

    Ties break toward the lower token index (stable sort on the negated
    scores); n >= len keeps everything, n <= 0 keeps nothing.
    """
    count = len(importance)
    if n <= 0:
        return []
    if n >= count:
        return list(range(count))
    order = np.argsort(-np.asarray(importance), kind="stable")
    return sorted(int(j) for j in order[:n])


def run_hired(
    dump: AttentionDump,
    layout: PartitionLayout,
    config: EngineConfig,
) -> tuple[BudgetPlan, SelectionResult]:
    """Run both phases on a dump: allocate the budget, then select tokens.

    The layout must describe the same partitioning as the dump (same
    sub-image count and patch grid).
    """
    if layout.k != dump.k:
        raise ConfigError(
            "grid", f"layout has {layout.k} sub-images but dump has {dump.k}"
        )
    if layout.tokens_per_partition != dump.tokens_per_partition:
        raise ConfigError(
            "grid",
            f"layout implies {layout.tokens_per_partition} tokens per partition "
            f"but dump holds {dump.tokens_per_partition}",
        )
    budget = resolve_budget(config, dump.k, dump.tokens_per_partition)
    scores = visual_content_scores(dump, layout, config.init_layer, config.aggregation)
    plan = allocate_budget(
        scores,
        budget,
        config.alpha,
        dump.tokens_per_partition,
        dump.k,
        config.distribution,
    )
    selections = []
    total = 0
    for part in dump.partitions:
        imp = feature_importance(dump, part.partition_id, config.final_layer,
                                 config.aggregation)
        kept = select_tokens(imp, plan.allocation(part.partition_id))
        total += len(kept)
        selections.append(PartitionSelection(
            partition_id=part.partition_id,
            allocated=plan.allocation(part.partition_id),
            kept_indices=kept,
            importance=imp if config.emit_scores else None,
        ))
    return plan, SelectionResult(partitions=selections, total_kept=total)
