"""Independent reference implementations used to cross-check the package.

Each oracle is written against the operation's definition, not its
implementation: brute-force all-pairs composition, quadratic duplicate
scanning, fine-grid numerical integration, and sort-based ranking.
"""
from __future__ import annotations

import numpy as np

from matchforge.correspondence import (
    PROPAGATED_SOURCE,
    CorrespondenceSet,
    Match,
)


def brute_force_propagate(
    c_ab: CorrespondenceSet, c_bc: CorrespondenceSet, threshold: float
) -> CorrespondenceSet:
    """All-pairs O(n*m) composition through the middle frame."""
    assert c_ab.frame_b == c_bc.frame_a
    mid = c_bc.points_a()
    out = []
    for m in c_ab.matches:
        if len(mid) == 0:
            break
        dx = mid[:, 0] - m.pb[0]
        dy = mid[:, 1] - m.pb[1]
        d2 = dx * dx + dy * dy
        eligible = (d2 < threshold * threshold) | (d2 == 0.0)
        if not eligible.any():
            continue
        candidates = np.nonzero(eligible)[0]
        j = int(candidates[np.argmin(d2[candidates])])  # argmin keeps lowest index on ties
        link = c_bc.matches[j]
        out.append(
            Match(m.pa, link.pb, min(m.confidence, link.confidence), PROPAGATED_SOURCE)
        )
    return CorrespondenceSet(c_ab.frame_a, c_bc.frame_b, tuple(out))


def quadratic_dedup(ordered_matches, radius: float) -> list[Match]:
    """Greedy duplicate suppression by scanning all accepted matches."""
    accepted: list[Match] = []
    r2 = radius * radius
    for m in ordered_matches:
        dup = False
        for other in accepted:
            da = (m.pa[0] - other.pa[0]) ** 2 + (m.pa[1] - other.pa[1]) ** 2
            db = (m.pb[0] - other.pb[0]) ** 2 + (m.pb[1] - other.pb[1]) ** 2
            if da <= r2 and db <= r2:
                dup = True
                break
        if not dup:
            accepted.append(m)
    return accepted


def fuse_oracle(sets, radius, method_order=None) -> list[Match]:
    """Priority-ordered quadratic fusion (highest confidence first)."""
    ranks: dict[str, int] = {}
    if method_order:
        for i, name in enumerate(method_order):
            ranks.setdefault(name, i)
    for s in sets:
        for m in s.matches:
            ranks.setdefault(m.source, len(ranks))
    pool = [m for s in sets for m in s.matches]
    order = sorted(
        range(len(pool)), key=lambda i: (-pool[i].confidence, ranks[pool[i].source], i)
    )
    return quadratic_dedup([pool[i] for i in order], radius)


def merge_oracle(c1, c2, radius, method_order=None) -> list[Match]:
    """Quadratic merge with non-propagated matches taking priority."""
    ranks: dict[str, int] = {}
    if method_order:
        for i, name in enumerate(method_order):
            ranks.setdefault(name, i)
    for s in (c1, c2):
        for m in s.matches:
            ranks.setdefault(m.source, len(ranks))
    pool = list(c1.matches) + list(c2.matches)
    order = sorted(
        range(len(pool)),
        key=lambda i: (
            pool[i].source == PROPAGATED_SOURCE,
            -pool[i].confidence,
            ranks[pool[i].source],
            i,
        ),
    )
    return quadratic_dedup([pool[i] for i in order], radius)


def auc_numeric(errors, threshold: float, steps: int = 1_000_000) -> float:
    """Midpoint-rule integration of the recall step function."""
    sorted_errors = np.sort(np.asarray(errors, dtype=float))
    n = len(sorted_errors)
    midpoints = (np.arange(steps) + 0.5) * (threshold / steps)
    recall = np.searchsorted(sorted_errors, midpoints, side="right") / n
    return float(recall.mean())


def mean_rank_oracle(grid: np.ndarray) -> np.ndarray:
    """Sort-based average ranks, ties averaged over occupied positions."""
    grid = np.asarray(grid, dtype=float)
    n_methods, n_datasets = grid.shape
    ranks = np.zeros_like(grid)
    for j in range(n_datasets):
        col = grid[:, j]
        order = np.argsort(-col, kind="stable")
        pos = 1
        while pos <= n_methods:
            i0 = pos - 1
            value = col[order[i0]]
            tied = [order[i0]]
            k = pos
            while k < n_methods and col[order[k]] == value:
                tied.append(order[k])
                k += 1
            avg = (pos + k) / 2.0
            for idx in tied:
                ranks[idx, j] = avg
            pos = k + 1
    return ranks.mean(axis=1)


def matches_as_set(cs: CorrespondenceSet) -> set:
    return {(m.pa, m.pb, m.confidence, m.source) for m in cs.matches}


def propagate_video_oracle(
    base_sets,
    offsets,
    min_count: int,
    threshold: float,
    dedup_radius: float,
    method_order=None,
):
    """Hand-rolled interval-doubling propagation built on the quadratic oracles.

    Returns {(frame_a, frame_b): CorrespondenceSet} of the most distant
    surviving pair per starting frame.
    """
    first = offsets[0]
    levels = {
        first: {a: s for (a, b), s in base_sets.items() if b - a == first and len(s.matches)}
    }
    for prev, cur in zip(offsets, offsets[1:]):
        current = {}
        prev_level = levels[prev]
        for a in sorted(prev_level):
            left = prev_level[a]
            right = prev_level.get(a + prev)
            composed = brute_force_propagate(left, right, threshold) if right is not None else None
            if composed is not None and len(composed.matches) == 0:
                composed = None
            base = base_sets.get((a, a + cur))
            if base is not None and len(base.matches) == 0:
                base = None
            if base is not None and composed is not None:
                current[a] = base.replace_matches(
                    merge_oracle(base, composed, dedup_radius, method_order)
                )
            elif base is not None:
                current[a] = base
            elif composed is not None:
                current[a] = composed
        for (a, b), s in base_sets.items():
            if b - a == cur and a not in current and len(s.matches):
                current[a] = s
        levels[cur] = current
    interval = offsets[-1]
    while True:
        prev_level = levels[interval]
        nxt = {}
        for a in sorted(prev_level):
            left = prev_level[a]
            if len(left.matches) <= min_count:
                continue
            right = prev_level.get(a + interval)
            if right is None or len(right.matches) == 0:
                continue
            composed = brute_force_propagate(left, right, threshold)
            if len(composed.matches):
                nxt[a] = composed
        if not nxt:
            break
        interval *= 2
        levels[interval] = nxt
    emitted = {}
    anchors = sorted({a for level in levels.values() for a in level})
    for a in anchors:
        best = None
        for iv in sorted(levels):
            s = levels[iv].get(a)
            if s is not None and len(s.matches) > min_count:
                best = s
        if best is not None:
            emitted[(best.frame_a.index, best.frame_b.index)] = best
    return emitted
