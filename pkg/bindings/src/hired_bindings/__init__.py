"""In-process adapter: run the budgeting engine on live attention buffers.

A host runtime that captured CLS-attention rows during a forward pass can
budget and prune its visual tokens without touching the filesystem: pass
the per-partition buffers plus the metadata a dump directory would carry,
get back the budget plan and kept indices.  Buffers that are already
C-contiguous float32 are consumed zero-copy; anything else exposing the
buffer protocol (or ``__array__``) is converted.

The adapter holds no state of its own — every call builds a fresh view of
the caller's buffers and hands it to the engine — so concurrent calls from
host threads are safe.
"""

from __future__ import annotations

import numpy as np

import hired
from hired.errors import ConfigError, NegativeValue, NonFiniteValue, ShapeMismatch

__all__ = ["allocate_and_select", "coerce_buffer", "version"]

__version__ = hired.__version__


def version() -> str:
    """Engine version this adapter is bound to (single source of truth)."""
    return hired.__version__


def coerce_buffer(obj) -> np.ndarray:
    """Float32 C-contiguous view of a host tensor-like object.

    Returns ``obj`` itself when it is already a C-contiguous float32
    ndarray, else a converted copy.
    """
    return np.ascontiguousarray(obj, dtype=np.float32)


def _checked_buffer(obj, pid, layers_captured, num_heads):
    subject = f"partition {pid}"
    arr = coerce_buffer(obj)
    if arr.ndim != 3:
        raise ShapeMismatch(
            f"{subject}: expected a (layers, heads, tokens) buffer, "
            f"got {arr.ndim} dimension(s)", subject,
        )
    if arr.shape[0] != len(layers_captured):
        raise ShapeMismatch(
            f"{subject}: buffer holds {arr.shape[0]} layers but metadata "
            f"captures {len(layers_captured)}", subject,
        )
    if arr.shape[1] != num_heads:
        raise ShapeMismatch(
            f"{subject}: buffer holds {arr.shape[1]} heads but metadata "
            f"says {num_heads}", subject,
        )
    if not np.isfinite(arr).all():
        raise NonFiniteValue(f"{subject}: attention contains NaN or infinity",
                             subject)
    if (arr < 0).any():
        raise NegativeValue(f"{subject}: attention contains negative values",
                            subject)
    return arr


def allocate_and_select(
    buffers,
    *,
    num_heads: int,
    layers_captured: list[int],
    patch_grid: tuple[int, int],
    grid: tuple[int, int] | None = None,
    image_size: tuple[int, int] = (336, 336),
    config: hired.EngineConfig | None = None,
) -> tuple[hired.BudgetPlan, hired.SelectionResult]:
    """Budget and select over in-memory attention buffers.

    ``buffers[0]`` is the full image, ``buffers[1:]`` the sub-images in
    row-major grid order; each must be (or convert to) a float32 array of
    shape ``(len(layers_captured), num_heads, tokens)``.  ``grid`` is None
    exactly when there are no sub-images.  Results are identical to
    serializing the same data as a dump directory and running the file
    pipeline with the same config.
    """
    buffers = list(buffers)
    if not buffers:
        raise ConfigError("buffers", "need at least the full-image buffer")
    if sorted(layers_captured) != list(layers_captured) or len(
            set(layers_captured)) != len(layers_captured):
        raise ConfigError("layers", "layers_captured must be strictly increasing")
    arrays = [_checked_buffer(b, pid, layers_captured, num_heads)
              for pid, b in enumerate(buffers)]
    for pid, arr in enumerate(arrays[1:], start=1):
        if arr.shape != arrays[0].shape:
            raise ShapeMismatch(
                f"partition {pid}: shape {arr.shape} differs from the "
                f"full image's {arrays[0].shape}", f"partition {pid}",
            )
    dump = hired.AttentionDump(
        partitions=[
            hired.Partition(pid, "full" if pid == 0 else "sub", arr)
            for pid, arr in enumerate(arrays)
        ],
        layers_captured=list(layers_captured),
        num_heads=num_heads,
        tokens_per_partition=arrays[0].shape[2],
        patch_grid=tuple(patch_grid),
        grid=tuple(grid) if grid is not None else None,
        image_size=tuple(image_size),
    )
    layout = hired.layout_from_grid(dump.grid, dump.patch_grid, dump.image_size)
    return hired.run_hired(dump, layout, config or hired.EngineConfig())
