"""Partition geometry: grid planning and sub-image -> token-index mapping.

The full image is encoded once at the vision tower's native patch grid
(P_w x P_h patches, one token each); each sub-image in a g_w x g_h grid is
encoded the same way.  Budget allocation needs to know, for every sub-image,
which full-image tokens cover the same pixels — the index sets computed
here.  A full-image patch belongs to the sub-image whose cell contains the
patch center, with half-open cell intervals, so the sets always partition
the token range even when the patch grid does not divide evenly.

All comparisons are exact (integer or rational), never float, so layouts
are identical across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import ConfigError, EmptyCandidateList, IndexOutOfRange

# Grid candidates mirroring the usual anyres set; order matters (final
# tie-break is list position).
DEFAULT_CANDIDATES: list[tuple[int, int]] = [
    (1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1), (1, 4), (4, 1),
]
DEFAULT_BASE_RESOLUTION = 336


@dataclass(frozen=True)
class PartitionLayout:
    """Chosen grid plus the token index set of every sub-image.

    ``token_index_sets[i]`` lists, ascending, the full-image token indices
    owned by sub-image i+1.  The sets are pairwise disjoint and cover
    0..P_w*P_h-1 exactly.
    """

    grid: tuple[int, int] | None
    patch_grid: tuple[int, int]
    image_size: tuple[int, int]
    token_index_sets: list[list[int]]

    @property
    def k(self) -> int:
        return len(self.token_index_sets)

    @property
    def tokens_per_partition(self) -> int:
        return self.patch_grid[0] * self.patch_grid[1]


def _check_pair(name: str, pair: tuple[int, int]) -> None:
    if len(pair) != 2 or pair[0] < 1 or pair[1] < 1:
        raise ConfigError(name, f"{name} must be a pair of integers >= 1, got {pair!r}")


def map_subimage_tokens(
    grid: tuple[int, int], patch_grid: tuple[int, int], i: int
) -> list[int]:
    """Full-image token indices owned by sub-image ``i`` (1-based, row-major).

    Patch (r, c) has center ((c + 1/2)/P_w, (r + 1/2)/P_h) in normalized
    coordinates; it belongs to grid cell (floor(center_x * g_w),
    floor(center_y * g_h)).  Token index is r * P_w + c.
    """
    _check_pair("grid", grid)
    _check_pair("patch_grid", patch_grid)
    g_w, g_h = grid
    p_w, p_h = patch_grid
    if not 1 <= i <= g_w * g_h:
        raise IndexOutOfRange(f"sub-image index {i} outside 1..{g_w * g_h}")
    col = (i - 1) % g_w
    row = (i - 1) // g_w
    cols = [c for c in range(p_w) if ((2 * c + 1) * g_w) // (2 * p_w) == col]
    rows = [r for r in range(p_h) if ((2 * r + 1) * g_h) // (2 * p_h) == row]
    return [r * p_w + c for r in rows for c in cols]


def layout_from_grid(
    grid: tuple[int, int] | None,
    patch_grid: tuple[int, int],
    image_size: tuple[int, int] = (336, 336),
) -> PartitionLayout:
    """Layout for an already-chosen grid (e.g. one read from a dump)."""
    _check_pair("patch_grid", patch_grid)
    if grid is None:
        return PartitionLayout(None, patch_grid, image_size, [])
    _check_pair("grid", grid)
    k = grid[0] * grid[1]
    sets = [map_subimage_tokens(grid, patch_grid, i) for i in range(1, k + 1)]
    return PartitionLayout(grid, patch_grid, image_size, sets)


def plan_partitions(
    image_w: int,
    image_h: int,
    candidates: list[tuple[int, int]],
    base_resolution: int = DEFAULT_BASE_RESOLUTION,
    patch_grid: tuple[int, int] = (24, 24),
) -> PartitionLayout:
    """Pick the grid that best fits the image, anyres style.

    For each candidate the image is scaled (aspect preserved) to fit the
    g_w*base x g_h*base canvas.  Candidates are ranked by covered source
    area (scaled area, capped at the original area — upscaling adds no
    detail), then by smallest padding area, then by list order.
    """
    if not candidates:
        raise EmptyCandidateList("need at least one grid candidate")
    if image_w < 1 or image_h < 1:
        raise ConfigError("image", f"image size must be positive, got {image_w}x{image_h}")
    for cand in candidates:
        _check_pair("candidates", cand)
    original = Fraction(image_w * image_h)

    best = None
    best_key = None
    for pos, (g_w, g_h) in enumerate(candidates):
        canvas_w = g_w * base_resolution
        canvas_h = g_h * base_resolution
        scale = min(Fraction(canvas_w, image_w), Fraction(canvas_h, image_h))
        scaled = original * scale * scale
        covered = min(scaled, original)
        padding = Fraction(canvas_w * canvas_h) - covered
        key = (-covered, padding, pos)
        if best_key is None or key < best_key:
            best, best_key = (g_w, g_h), key
    return layout_from_grid(best, patch_grid, (image_w, image_h))
