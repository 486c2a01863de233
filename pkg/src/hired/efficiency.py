"""Token accounting across a corpus of selection manifests.

This is the audit side of the engine: given many runs, confirm the kept
token counts never exceed the budget, and translate token counts into
analytic cost proxies (KV-cache bytes, relative prefill compute).  Wall
clock, throughput, and GPU memory are hardware properties and are out of
scope — everything here is exact arithmetic on counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .errors import ConfigError
from .tensor_io import read_selection_manifest


@dataclass(frozen=True)
class ModelProfile:
    """LLM dimensions needed for KV-cache sizing.

    Defaults match a 7B-class decoder (32 layers, 32 KV heads of dim 128,
    fp16).  ``extra_tokens`` is the assumed non-visual (system + text)
    token count per request and may be zero.
    """

    llm_layers: int = 32
    kv_heads: int = 32
    head_dim: int = 128
    bytes_per_element: int = 2
    extra_tokens: int = 0

    def __post_init__(self):
        for name in ("llm_layers", "kv_heads", "head_dim", "bytes_per_element"):
            if type(getattr(self, name)) is not int or getattr(self, name) < 1:
                raise ConfigError(name, f"{name} must be a positive integer")
        if type(self.extra_tokens) is not int or self.extra_tokens < 0:
            raise ConfigError("extra_tokens", "extra_tokens must be >= 0")


@dataclass(frozen=True)
class TokenUsageStats:
    """Exact statistics of total_kept over a manifest corpus."""

    sample_count: int
    minimum: int
    maximum: int
    mean: float
    stddev: float
    budget: int
    violations: int  # samples with total_kept > budget


@dataclass(frozen=True)
class CostEstimate:
    """Analytic proxies for one request's visual-token cost."""

    kv_bytes: int
    linear_ratio: float | None
    prefill_cost_relative: float | None


def corpus_stats(manifest_paths: list[str | Path], budget: int) -> TokenUsageStats:
    """Parse every manifest and reduce total_kept with integer arithmetic.

    Accumulation is exact (integer sums, Fraction variance), so the result
    is independent of file order.  Parse errors propagate per file, tagged
    with the path.
    """
    if not manifest_paths:
        raise ConfigError("manifests", "need at least one manifest")
    totals = [read_selection_manifest(p)["total_kept"] for p in manifest_paths]
    n = len(totals)
    total = sum(totals)
    total_sq = sum(t * t for t in totals)
    variance = Fraction(total_sq, n) - Fraction(total, n) ** 2
    return TokenUsageStats(
        sample_count=n,
        minimum=min(totals),
        maximum=max(totals),
        mean=total / n,
        stddev=math.sqrt(variance),
        budget=budget,
        violations=sum(1 for t in totals if t > budget),
    )


def estimate_cost(
    visual_tokens: int,
    profile: ModelProfile,
    full_visual_tokens: int | None = None,
) -> CostEstimate:
    """KV-cache bytes and (optionally) cost ratios against the unpruned run.

    kv_bytes = 2 (K and V) * layers * kv_heads * head_dim * bytes * sequence
    length.  With ``full_visual_tokens`` given, the linear ratio compares
    sequence lengths and the prefill proxy squares it (attention is
    quadratic in sequence length).
    """
    seq = visual_tokens + profile.extra_tokens
    kv_bytes = (2 * profile.llm_layers * profile.kv_heads * profile.head_dim
                * profile.bytes_per_element * seq)
    if full_visual_tokens is None:
        return CostEstimate(kv_bytes, None, None)
    denom = full_visual_tokens + profile.extra_tokens
    linear = seq / denom if denom else 0.0
    return CostEstimate(kv_bytes, linear, linear * linear)


def format_stats_table(stats: TokenUsageStats) -> str:
    """Aligned two-column text table of the usage statistics."""
    rows = [
        ("samples", str(stats.sample_count)),
        ("budget", str(stats.budget)),
        ("min kept", str(stats.minimum)),
        ("max kept", str(stats.maximum)),
        ("mean kept", f"{stats.mean:.2f}"),
        ("stddev", f"{stats.stddev:.2f}"),
        ("violations", str(stats.violations)),
    ]
    label_w = max(len(label) for label, _ in rows)
    value_w = max(len(value) for _, value in rows)
    return "\n".join(f"{label:<{label_w}}  {value:>{value_w}}" for label, value in rows)


def stats_to_dict(stats: TokenUsageStats, cost: CostEstimate | None = None) -> dict:
    """JSON-ready view of the stats (plus cost proxies when available)."""
    doc = {
        "sample_count": stats.sample_count,
        "budget": stats.budget,
        "min": stats.minimum,
        "max": stats.maximum,
        "mean": stats.mean,
        "stddev": stats.stddev,
        "violations": stats.violations,
    }
    if cost is not None:
        doc["kv_bytes"] = cost.kv_bytes
        if cost.linear_ratio is not None:
            doc["linear_ratio"] = cost.linear_ratio
            doc["prefill_cost_relative"] = cost.prefill_cost_relative
    return doc
