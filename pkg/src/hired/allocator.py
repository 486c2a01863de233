"""Phase 1: split the token budget and apportion it across sub-images.

The full image gets ``min(floor(alpha * budget), capacity)`` tokens; the
remainder is divided among sub-images proportionally to their visual
content scores (how much initial-layer CLS attention the full image spends
on each sub-image's region).  Fractional shares are settled by
largest-remainder apportionment so the budget is used exactly.

Numeric contract (shared with the test oracles; deviating breaks
cross-implementation determinism):
  * attention is summed in float32 — heads innermost in ascending order,
    then tokens in ascending index order;
  * shares are computed in float64 from the widened float32 scores:
    total = math.fsum(scores); share_i = scores[i] / total;
    exact_i = pool * share_i;
  * remainder ties break toward the lower partition index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import BudgetExceedsCapacity, ConfigError
from .geometry import PartitionLayout
from .tensor_io import AttentionDump

AGGREGATIONS = ("sum", "mean", "max")  # plus "head:N" for a single head
DISTRIBUTIONS = ("content", "even")


@dataclass(frozen=True)
class EngineConfig:
    """Run parameters.

    ``budget`` is an absolute token count when int, a fraction of total
    capacity (k+1 partitions x tokens each) when float in (0, 1]; 1.0
    means full capacity.  ``init_layer``/``final_layer`` are model layer
    indices that must be present in the dump's captured layers.
    """

    budget: int | float = 1.0
    alpha: float = 0.5
    init_layer: int = 0
    final_layer: int = 22
    aggregation: str = "sum"
    distribution: str = "content"
    emit_scores: bool = False

    def __post_init__(self):
        if isinstance(self.budget, bool) or not isinstance(self.budget, (int, float)):
            raise ConfigError("budget", "budget must be an int or float")
        if isinstance(self.budget, float) and not 0.0 < self.budget <= 1.0:
            raise ConfigError(
                "budget",
                f"fractional budget must be in (0, 1], got {self.budget}"
                " (use an integer for an absolute token count)",
            )
        if isinstance(self.budget, int) and self.budget < 0:
            raise ConfigError("budget", "absolute budget must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha", f"alpha must be in [0, 1], got {self.alpha}")
        for name in ("init_layer", "final_layer"):
            value = getattr(self, name)
            if type(value) is not int or value < 0:
                raise ConfigError(name.replace("_", "-"),
                                  f"must be a nonnegative integer, got {value!r}")
        parse_aggregation(self.aggregation)  # validates, result recomputed on use
        if self.distribution not in DISTRIBUTIONS:
            raise ConfigError(
                "distribution",
                f"must be one of {', '.join(DISTRIBUTIONS)}, got {self.distribution!r}",
            )


def parse_aggregation(mode: str) -> tuple[str, int | None]:
    """Split an aggregation mode string into (kind, head-or-None)."""
    if mode in AGGREGATIONS:
        return mode, None
    if isinstance(mode, str) and mode.startswith("head:"):
        try:
            head = int(mode[5:])
        except ValueError:
            head = -1
        if head >= 0:
            return "head", head
    raise ConfigError(
        "agg", f"must be sum, mean, max, or head:N, got {mode!r}"
    )


def aggregate_heads(rows: np.ndarray, mode: str) -> np.ndarray:
    """Collapse an (H, N) f32 attention slice to one (N,) f32 row.

    Sums run over heads in ascending order (f32 accumulation), so results
    are identical across platforms and match the straight-line definition.
    """
    kind, head = parse_aggregation(mode)
    if kind == "head":
        if head >= rows.shape[0]:
            raise ConfigError(
                "agg", f"head {head} out of range ({rows.shape[0]} heads)"
            )
        return rows[head].copy()
    if kind == "max":
        return np.max(rows, axis=0)
    acc = rows[0].astype(np.float32, copy=True)
    for h in range(1, rows.shape[0]):
        acc += rows[h]
    if kind == "mean":
        acc /= np.float32(rows.shape[0])
    return acc


def resolve_budget(config: EngineConfig, k: int, tokens_per_partition: int) -> int:
    """Absolute token budget for a (k+1)-partition dump.

    Absolute budgets clamp into [0, capacity].  Fractional budgets resolve
    to floor(fraction * capacity), reading the fraction as the decimal the
    user wrote (so 0.3 of 2880 is 864, not the float-rounding artifact 863).
    """
    capacity = (k + 1) * tokens_per_partition
    if isinstance(config.budget, int):
        return max(0, min(config.budget, capacity))
    return int(Fraction(str(config.budget)) * capacity)


def visual_content_scores(
    dump: AttentionDump,
    layout: PartitionLayout,
    init_layer: int,
    aggregation: str = "sum",
) -> np.ndarray:
    """Score each sub-image by the full image's CLS attention on its region.

    Returns a (k,) f32 array: s_i = sum over sub-image i's token indices of
    the head-aggregated full-image attention at ``init_layer``.  Tokens are
    summed in ascending index order (f32), matching the oracle.  k = 0
    yields an empty array.
    """
    if layout.k == 0:
        return np.zeros(0, dtype=np.float32)
    slot = dump.layer_pos(init_layer)
    per_token = aggregate_heads(dump.partition(0).tensor[slot], aggregation)
    scores = np.empty(layout.k, dtype=np.float32)
    for i, token_set in enumerate(layout.token_index_sets):
        if token_set:
            # cumsum is sequential, so this is the fixed-order f32 sum
            scores[i] = np.cumsum(per_token[token_set], dtype=np.float32)[-1]
        else:
            scores[i] = np.float32(0.0)
    return scores


@dataclass(frozen=True)
class BudgetPlan:
    """Resolved per-partition token budgets.

    ``n_sub[i]`` is the budget of sub-image i+1; ``clamped[p]`` records
    whether partition p (0 = full image) hit its per-partition capacity
    during allocation.  ``n_full + sum(n_sub)`` equals the budget unless
    clamping left a surplus with nowhere to go.
    """

    n_full: int
    n_sub_total: int
    n_sub: list[int]
    scores: np.ndarray
    clamped: list[bool]

    @property
    def budget(self) -> int:
        return self.n_full + self.n_sub_total

    @property
    def total_allocated(self) -> int:
        return self.n_full + sum(self.n_sub)

    def allocation(self, partition_id: int) -> int:
        return self.n_full if partition_id == 0 else self.n_sub[partition_id - 1]


def _largest_remainder(pool: int, shares: list[float]) -> list[int]:
    """Apportion ``pool`` integer tokens over f64 shares summing to ~1.

    Floors first, then hands the leftover out one token each to the
    largest fractional remainders, ties toward the lower index.
    """
    exact = [pool * s for s in shares]
    counts = [math.floor(e) for e in exact]
    leftover = pool - sum(counts)
    by_remainder = sorted(range(len(shares)),
                          key=lambda i: (counts[i] - exact[i], i))
    for i in by_remainder[:leftover]:
        counts[i] += 1
    return counts


def _shares(scores: np.ndarray, members: list[int], even: bool) -> list[float]:
    total = math.fsum(float(scores[i]) for i in members)
    if even or total == 0.0:
        return [1.0 / len(members)] * len(members)
    return [float(scores[i]) / total for i in members]


def allocate_budget(
    scores: np.ndarray,
    budget: int,
    alpha: float,
    tokens_per_partition: int,
    k: int,
    distribution: str = "content",
) -> BudgetPlan:
    """Split ``budget`` into n_full + per-sub-image budgets.

    Any share exceeding a partition's capacity is clamped and the excess
    re-apportioned over the partitions still below capacity, by the same
    remainder rule, until stable; with every partition full the surplus
    stays unallocated.  A dump with no sub-images gives the whole budget
    to the full image (alpha does not apply).
    """
    if len(scores) != k:
        raise ValueError(f"got {len(scores)} scores for k={k} sub-images")
    capacity = (k + 1) * tokens_per_partition
    if not 0 <= budget <= capacity:
        raise BudgetExceedsCapacity(
            f"budget {budget} outside [0, {capacity}] "
            f"({k + 1} partitions x {tokens_per_partition} tokens)",
            "budget",
        )
    even = distribution == "even"

    if k == 0:
        n_full = min(budget, tokens_per_partition)
        return BudgetPlan(n_full, budget - n_full, [], np.asarray(scores), [False])

    n_full = min(math.floor(alpha * budget), tokens_per_partition)
    n_sub_total = budget - n_full
    clamped = [n_full == tokens_per_partition
               and math.floor(alpha * budget) > tokens_per_partition] + [False] * k

    counts = _largest_remainder(n_sub_total, _shares(scores, list(range(k)), even))
    while True:
        excess = 0
        for i in range(k):
            if counts[i] > tokens_per_partition:
                excess += counts[i] - tokens_per_partition
                counts[i] = tokens_per_partition
                clamped[i + 1] = True
        if excess == 0:
            break
        open_idx = [i for i in range(k) if counts[i] < tokens_per_partition]
        if not open_idx:
            break  # every partition full: surplus is unallocatable
        top_up = _largest_remainder(excess, _shares(scores, open_idx, even))
        for pos, i in enumerate(open_idx):
            counts[i] += top_up[pos]
    return BudgetPlan(n_full, n_sub_total, counts, np.asarray(scores), clamped)
