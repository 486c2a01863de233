"""Independent reference implementations used to check the engine.

Everything in this file is deliberately naive: plain Python loops, no numpy
vectorisation, no shared code with ``src/hired``.  The point is that a bug in
the engine and a bug here would have to coincide to go unnoticed.

Numeric contract mirrored here (the engine must match it bit-for-bit):
  * attention sums accumulate in float32, heads innermost (ascending head
    index), then tokens in ascending order;
  * proportional shares are computed in float64 from the exactly-widened
    float32 scores;
  * remainder ties and importance ties break toward the lower index.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def reference_content_scores(tensor, layer_pos, heads, token_sets):
    """Per-sub-image visual content scores from the full-image tensor.

    ``tensor`` is indexable as [layer][head][token] (numpy f32 array or
    nested lists of f32).  Returns a list of float32 scalars, one per entry
    of ``token_sets`` (each a sorted list of full-image token indices).
    """
    scores = []
    for tokens in token_sets:
        acc = np.float32(0.0)
        for j in tokens:
            cell = np.float32(0.0)
            for h in range(heads):
                cell = np.float32(cell + np.float32(tensor[layer_pos][h][j]))
            acc = np.float32(acc + cell)
        scores.append(acc)
    return scores


def reference_feature_importance(tensor, layer_pos, heads, n_tokens):
    """Per-token importance: sum over heads at one layer, float32."""
    out = []
    for j in range(n_tokens):
        cell = np.float32(0.0)
        for h in range(heads):
            cell = np.float32(cell + np.float32(tensor[layer_pos][h][j]))
        out.append(cell)
    return out


def reference_topk(importance, k):
    """Indices of the k largest values; ties to the lower index; ascending."""
    order = sorted(range(len(importance)), key=lambda j: (-float(importance[j]), j))
    return sorted(order[: max(0, min(k, len(importance)))])


def reference_apportion(pool, shares):
    """Largest-remainder apportionment of ``pool`` items over f64 shares.

    ``shares`` are nonnegative float64 weights summing to ~1.  Returns
    integer counts summing to exactly ``pool``.  Remainder ties break toward
    the lower index.
    """
    exact = [pool * s for s in shares]
    counts = [math.floor(e) for e in exact]
    leftover = pool - sum(counts)
    by_remainder = sorted(
        range(len(shares)), key=lambda i: (-(exact[i] - counts[i]), i)
    )
    for i in by_remainder[:leftover]:
        counts[i] += 1
    return counts


def _shares(scores, members, even):
    total = math.fsum(float(scores[i]) for i in members)
    if even or total == 0.0:
        return [1.0 / len(members)] * len(members)
    return [float(scores[i]) / total for i in members]


def reference_allocate(budget, alpha, n_vit, scores, even=False):
    """Full Phase-1 allocation: split, shares, apportion, clamp top-up loop.

    ``scores`` are the float32 content scores for the k sub-images.
    Returns (n_full, n_sub_total, n_sub list).  With no sub-images the full
    image absorbs the whole budget up to its capacity.
    """
    k = len(scores)
    if k == 0:
        n_full = min(budget, n_vit)
        return n_full, budget - n_full, []

    n_full = min(math.floor(alpha * budget), n_vit)
    n_sub_total = budget - n_full
    counts = reference_apportion(n_sub_total, _shares(scores, range(k), even))
    while True:
        excess = 0
        for i in range(k):
            if counts[i] > n_vit:
                excess += counts[i] - n_vit
                counts[i] = n_vit
        if excess == 0:
            break
        open_idx = [i for i in range(k) if counts[i] < n_vit]
        if not open_idx:
            break  # everyone full: surplus stays unallocated
        top_up = reference_apportion(excess, _shares(scores, open_idx, even))
        for pos, i in enumerate(open_idx):
            counts[i] += top_up[pos]
    return n_full, n_sub_total, counts


def reference_run(dump_tensors, layers_captured, heads, n_tokens, token_sets,
                  budget, alpha, init_layer, final_layer, even=False):
    """End-to-end straight-line run of the two-phase algorithm.

    ``dump_tensors`` maps partition id (0 = full image, 1..k = sub-images)
    to an indexable [layer][head][token] tensor; ``token_sets[i]`` holds the
    full-image token indices of sub-image i+1.  Returns (alloc dict, kept
    dict) keyed by partition id.
    """
    li = layers_captured.index(init_layer)
    lf = layers_captured.index(final_layer)
    k = len(token_sets)
    scores = reference_content_scores(dump_tensors[0], li, heads, token_sets)
    n_full, _, n_sub = reference_allocate(budget, alpha, n_tokens, scores, even=even)

    alloc = {0: n_full}
    for i in range(k):
        alloc[i + 1] = n_sub[i]
    kept = {}
    for pid, n in alloc.items():
        imp = reference_feature_importance(dump_tensors[pid], lf, heads, n_tokens)
        kept[pid] = reference_topk(imp, n)
    return alloc, kept


def reference_map_tokens(grid, patch_grid, i):
    """Token indices of sub-image i (1-based, row-major) by patch centers.

    A patch belongs to the cell its center falls in; the comparison is done
    on exact rationals to dodge any float boundary case.
    """
    g_w, g_h = grid
    p_w, p_h = patch_grid
    col = (i - 1) % g_w
    row = (i - 1) // g_w
    out = []
    for r in range(p_h):
        for c in range(p_w):
            # center (c + 0.5)/p_w in [col/g_w, (col+1)/g_w) etc., scaled
            # through by 2*p_w*g_w to stay in integers
            x_ok = col * 2 * p_w <= (2 * c + 1) * g_w < (col + 1) * 2 * p_w
            y_ok = row * 2 * p_h <= (2 * r + 1) * g_h < (row + 1) * 2 * p_h
            if x_ok and y_ok:
                out.append(r * p_w + c)
    return out


def bruteforce_apportion(pool, shares):
    """Enumerate every nonnegative integer split of ``pool`` and pick the
    one minimising sum(|n_i - pool*share_i|); among minimisers, the
    lexicographically largest (which is what floor+largest-remainder with
    lower-index tie-breaking produces).  Errors are compared in exact
    rational arithmetic over the float64 share values, so near-ties at the
    last bit are decided, not fuzzed.  Exponential — keep pool and k tiny.
    """
    from fractions import Fraction

    k = len(shares)
    exact = [Fraction(pool * s) for s in shares]
    best = None
    best_err = None
    for split in itertools.product(range(pool + 1), repeat=k):
        if sum(split) != pool:
            continue
        err = sum(abs(split[i] - exact[i]) for i in range(k))
        if best is None or err < best_err or (err == best_err and split > tuple(best)):
            best, best_err = split, err
    return list(best)
