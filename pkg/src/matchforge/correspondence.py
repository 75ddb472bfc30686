"""Sparse correspondence sets, fusion, transitive propagation, interchange I/O.

A correspondence set is the sparse realization of all pixel matches between
two frames of the same video. Sets are immutable; every operation returns a
new set, so distinct pairs can be processed in parallel without coordination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ChainMismatch, CorrespondenceParseError, MismatchedPair

PROPAGATED_SOURCE = "propagated"


@dataclass(frozen=True, slots=True)
class Match:
    """One sub-pixel point pair with a confidence and a provenance tag."""

    pa: tuple[float, float]
    pb: tuple[float, float]
    confidence: float
    source: str

    def __post_init__(self):
        pa = (float(self.pa[0]), float(self.pa[1]))
        pb = (float(self.pb[0]), float(self.pb[1]))
        if not all(math.isfinite(v) for v in (*pa, *pb)):
            raise ValueError("match coordinates must be finite")
        conf = float(self.confidence)
        if not 0.0 <= conf <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {conf}")
        if not self.source or any(c.isspace() for c in self.source):
            raise ValueError("source tag must be a non-empty whitespace-free token")
        object.__setattr__(self, "pa", pa)
        object.__setattr__(self, "pb", pb)
        object.__setattr__(self, "confidence", conf)


@dataclass(frozen=True, slots=True, order=True)
class FrameId:
    """A frame within a video: (video id, frame index)."""

    video: str
    index: int

    def __post_init__(self):
        if not self.video or any(c.isspace() for c in self.video):
            raise ValueError("video id must be a non-empty whitespace-free token")
        if self.index < 0:
            raise ValueError("frame index must be non-negative")

    def __str__(self) -> str:
        return f"{self.video}:{self.index}"

    @staticmethod
    def parse(token: str) -> "FrameId":
        video, _, index = token.rpartition(":")
        if not video:
            raise ValueError(f"malformed frame token {token!r}")
        return FrameId(video, int(index))


@dataclass(frozen=True)
class CorrespondenceSet:
    """All matches between an ordered frame pair (frame_a < frame_b)."""

    frame_a: FrameId
    frame_b: FrameId
    matches: tuple[Match, ...]

    def __post_init__(self):
        if not self.frame_a < self.frame_b:
            raise ValueError("sets are stored in canonical orientation frame_a < frame_b")
        object.__setattr__(self, "matches", tuple(self.matches))

    @property
    def interval(self) -> int:
        return abs(self.frame_b.index - self.frame_a.index)

    def __len__(self) -> int:
        return len(self.matches)

    def points_a(self) -> np.ndarray:
        return np.array([m.pa for m in self.matches], dtype=float).reshape(-1, 2)

    def points_b(self) -> np.ndarray:
        return np.array([m.pb for m in self.matches], dtype=float).reshape(-1, 2)

    def source_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for m in self.matches:
            counts[m.source] = counts.get(m.source, 0) + 1
        return counts

    def replace_matches(self, matches: Iterable[Match]) -> "CorrespondenceSet":
        return CorrespondenceSet(self.frame_a, self.frame_b, tuple(matches))


class _Grid:
    """Uniform hash grid over 2-D points for radius-bounded neighbor queries.

    Cell size equals the query radius, so any point within that radius of a
    query lies in the 3x3 cell neighborhood.
    """

    def __init__(self, cell: float):
        self.cell = cell if cell > 0 else 1.0
        self.cells: dict[tuple[int, int], list[int]] = {}
        self.points: list[tuple[float, float]] = []

    def _key(self, p) -> tuple[int, int]:
        return (int(math.floor(p[0] / self.cell)), int(math.floor(p[1] / self.cell)))

    def insert(self, p) -> None:
        idx = len(self.points)
        self.points.append((p[0], p[1]))
        self.cells.setdefault(self._key(p), []).append(idx)

    def neighborhood(self, p):
        kx, ky = self._key(p)
        for gx in (kx - 1, kx, kx + 1):
            for gy in (ky - 1, ky, ky + 1):
                bucket = self.cells.get((gx, gy))
                if bucket:
                    yield from bucket


def _check_same_pair(sets: Sequence[CorrespondenceSet]) -> None:
    first = sets[0]
    for s in sets[1:]:
        if (s.frame_a, s.frame_b) != (first.frame_a, first.frame_b):
            raise MismatchedPair(
                f"({s.frame_a}, {s.frame_b}) does not match ({first.frame_a}, {first.frame_b})"
            )


def _greedy_dedup(ordered: Sequence[Match], radius: float) -> list[Match]:
    """Accept matches in priority order, skipping duplicates of accepted ones.

    Two matches are duplicates when both endpoints are within ``radius``.
    """
    grid = _Grid(radius)
    accepted: list[Match] = []
    r2 = radius * radius
    for m in ordered:
        duplicate = False
        for j in grid.neighborhood(m.pa):
            other = accepted[j]
            dxa = m.pa[0] - other.pa[0]
            dya = m.pa[1] - other.pa[1]
            if dxa * dxa + dya * dya > r2:
                continue
            dxb = m.pb[0] - other.pb[0]
            dyb = m.pb[1] - other.pb[1]
            if dxb * dxb + dyb * dyb <= r2:
                duplicate = True
                break
        if not duplicate:
            grid.insert(m.pa)
            accepted.append(m)
    return accepted


def _source_ranks(
    sets: Sequence[CorrespondenceSet], method_order: Sequence[str] | None
) -> dict[str, int]:
    ranks: dict[str, int] = {}
    if method_order:
        for i, name in enumerate(method_order):
            ranks.setdefault(name, i)
    for s in sets:
        for m in s.matches:
            ranks.setdefault(m.source, len(ranks))
    return ranks


def fuse(
    sets: Sequence[CorrespondenceSet],
    dedup_radius: float = 1.0,
    method_order: Sequence[str] | None = None,
) -> CorrespondenceSet:
    """Union of same-pair sets with duplicate suppression.

    Matches whose endpoints both lie within ``dedup_radius`` are duplicates;
    the highest-confidence copy wins, ties broken by the earliest source in
    ``method_order`` (first-appearance order by default), then by input
    position. A singleton input is returned unchanged.
    """
    sets = list(sets)
    if not sets:
        raise ValueError("fuse needs at least one set")
    _check_same_pair(sets)
    if len(sets) == 1:
        return sets[0]
    ranks = _source_ranks(sets, method_order)
    pool = [m for s in sets for m in s.matches]
    order = sorted(
        range(len(pool)), key=lambda i: (-pool[i].confidence, ranks[pool[i].source], i)
    )
    kept = _greedy_dedup([pool[i] for i in order], dedup_radius)
    return sets[0].replace_matches(kept)


def merge(
    c1: CorrespondenceSet,
    c2: CorrespondenceSet,
    dedup_radius: float = 1.0,
    method_order: Sequence[str] | None = None,
) -> CorrespondenceSet:
    """Fuse two same-pair sets, giving priority to non-propagated matches.

    Used when propagated correspondences are folded back into base ones: a
    base match always survives a duplicate propagated one.
    """
    _check_same_pair([c1, c2])
    if len(c2) == 0:
        return c1
    if len(c1) == 0:
        return c2
    ranks = _source_ranks([c1, c2], method_order)
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
    kept = _greedy_dedup([pool[i] for i in order], dedup_radius)
    return c1.replace_matches(kept)


def propagate(
    c_ab: CorrespondenceSet,
    c_bc: CorrespondenceSet,
    pixel_threshold: float = 1.0,
) -> CorrespondenceSet:
    """Compose two sets through their shared middle frame.

    For each (a -> b) match, finds (b' -> c) matches with |b - b'| below the
    threshold and emits (a -> c) through the nearest such b' (ties: lowest
    index in ``c_bc``). Confidence is the minimum of the chain and the source
    tag becomes "propagated". A zero threshold keeps only exactly coincident
    middle points.
    """
    if c_ab.frame_b != c_bc.frame_a:
        raise ChainMismatch(
            f"cannot chain through {c_ab.frame_b} != {c_bc.frame_a}"
        )
    grid = _Grid(pixel_threshold)
    for m in c_bc.matches:
        grid.insert(m.pa)
    thr2 = pixel_threshold * pixel_threshold
    out: list[Match] = []
    for m in c_ab.matches:
        bx, by = m.pb
        best: tuple[float, int] | None = None
        for j in grid.neighborhood(m.pb):
            qx, qy = grid.points[j]
            dx = bx - qx
            dy = by - qy
            d2 = dx * dx + dy * dy
            if d2 < thr2 or d2 == 0.0:
                cand = (d2, j)
                if best is None or cand < best:
                    best = cand
        if best is not None:
            link = c_bc.matches[best[1]]
            out.append(
                Match(
                    m.pa,
                    link.pb,
                    min(m.confidence, link.confidence),
                    PROPAGATED_SOURCE,
                )
            )
    return CorrespondenceSet(c_ab.frame_a, c_bc.frame_b, tuple(out))


def meets_budget(c: CorrespondenceSet, min_count: int = 1024) -> bool:
    """True when the match count strictly exceeds the budget floor."""
    return len(c.matches) > min_count


# --- interchange format ---------------------------------------------------------
#
# UTF-8 text; header line `corrs v1 <frame_a> <frame_b> <count>` followed by
# exactly <count> tab-separated lines: x_a y_a x_b y_b confidence source.
# Coordinates carry 4 decimals, confidence 6.


def format_interchange(s: CorrespondenceSet) -> str:
    lines = [f"corrs v1 {s.frame_a} {s.frame_b} {len(s.matches)}"]
    for m in s.matches:
        lines.append(
            f"{m.pa[0]:.4f}\t{m.pa[1]:.4f}\t{m.pb[0]:.4f}\t{m.pb[1]:.4f}"
            f"\t{m.confidence:.6f}\t{m.source}"
        )
    return "\n".join(lines) + "\n"


def _parse_coord(value: str, line_no: int, bound: float | None) -> float:
    try:
        v = float(value)
    except ValueError:
        raise CorrespondenceParseError(line_no, f"bad coordinate {value!r}") from None
    if not math.isfinite(v) or v < 0:
        raise CorrespondenceParseError(line_no, f"coordinate out of range: {value}")
    if bound is not None and v >= bound:
        raise CorrespondenceParseError(
            line_no, f"coordinate {v} exceeds bound {bound}"
        )
    return v


def parse_interchange(
    text: str,
    bounds_a: tuple[float, float] | None = None,
    bounds_b: tuple[float, float] | None = None,
) -> CorrespondenceSet:
    """Parse interchange text; rejects malformed counts and bad coordinates.

    ``bounds_*`` are optional (width, height) limits; when given, coordinates
    at or beyond them are a parse error.
    """
    lines = text.split("\n")
    while lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CorrespondenceParseError(1, "empty file")
    header = lines[0].split(" ")
    if len(header) != 5 or header[0] != "corrs" or header[1] != "v1":
        raise CorrespondenceParseError(1, f"bad header {lines[0]!r}")
    try:
        frame_a = FrameId.parse(header[2])
        frame_b = FrameId.parse(header[3])
    except ValueError as exc:
        raise CorrespondenceParseError(1, str(exc)) from None
    try:
        count = int(header[4])
    except ValueError:
        raise CorrespondenceParseError(1, f"malformed count {header[4]!r}") from None
    if count < 0:
        raise CorrespondenceParseError(1, f"negative count {count}")
    if len(lines) - 1 != count:
        raise CorrespondenceParseError(
            min(len(lines), count + 1) + 1,
            f"expected {count} match lines, found {len(lines) - 1}",
        )
    matches = []
    for i, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != 6:
            raise CorrespondenceParseError(i, f"expected 6 fields, found {len(fields)}")
        xa = _parse_coord(fields[0], i, bounds_a[0] if bounds_a else None)
        ya = _parse_coord(fields[1], i, bounds_a[1] if bounds_a else None)
        xb = _parse_coord(fields[2], i, bounds_b[0] if bounds_b else None)
        yb = _parse_coord(fields[3], i, bounds_b[1] if bounds_b else None)
        try:
            conf = float(fields[4])
        except ValueError:
            raise CorrespondenceParseError(i, f"bad confidence {fields[4]!r}") from None
        try:
            matches.append(Match((xa, ya), (xb, yb), conf, fields[5]))
        except ValueError as exc:
            raise CorrespondenceParseError(i, str(exc)) from None
    try:
        return CorrespondenceSet(frame_a, frame_b, tuple(matches))
    except ValueError as exc:
        raise CorrespondenceParseError(1, str(exc)) from None


def write_interchange(path: Path | str, s: CorrespondenceSet) -> None:
    Path(path).write_text(format_interchange(s), encoding="utf-8")


def read_interchange(
    path: Path | str,
    bounds_a: tuple[float, float] | None = None,
    bounds_b: tuple[float, float] | None = None,
) -> CorrespondenceSet:
    return parse_interchange(
        Path(path).read_text(encoding="utf-8"), bounds_a, bounds_b
    )


def drop_out_of_bounds(
    s: CorrespondenceSet,
    bounds_a: tuple[float, float],
    bounds_b: tuple[float, float],
) -> tuple[CorrespondenceSet, int]:
    """Re-validate coordinates against frame bounds, dropping violators.

    Returns the cleaned set and the number of dropped matches.
    """
    wa, ha = bounds_a
    wb, hb = bounds_b
    kept = [
        m
        for m in s.matches
        if 0 <= m.pa[0] < wa
        and 0 <= m.pa[1] < ha
        and 0 <= m.pb[0] < wb
        and 0 <= m.pb[1] < hb
    ]
    if len(kept) == len(s.matches):
        return s, 0
    return s.replace_matches(kept), len(s.matches) - len(kept)
