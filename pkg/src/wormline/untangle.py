"""Separate fused and crossing worm skeletons into per-individual paths.

The procedure has two phases. First, predicted endpoints that do not coincide
with a geometric endpoint of the skeleton mark places where two worms touch
tip-to-body or tip-to-tip; the skeleton is cut there. Second, every remaining
junction is removed and the incident segments are reconnected in pairs,
smallest steering angle first, so that each reconnected chain continues as
straight as possible through the junction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

from ._grid import digital_line, neighbors8
from .errors import InputContractError
from .skelgeo import (
    EndpointDetection,
    Segment,
    Skeleton,
    classify,
    segments_from_pixels,
)
from .skelgeo import _cleanup  # shared thinning cleanup

__all__ = [
    "UntangleConfig",
    "SteeringAngle",
    "WormSkeleton",
    "match_endpoint",
    "steering_angle",
    "untangle",
]

Pixel = tuple[int, int]
End = Literal["a", "b"]


@dataclass(frozen=True)
class UntangleConfig:
    """Tuning knobs for the untangling procedure.

    match_radius is the search-circle radius used to match predicted
    endpoints against the skeleton; segment ends within twice this radius of
    a junction take part in that junction's pairing.
    """

    match_radius: float = 5.0
    direction_window: int = 5
    min_segment_len: int = 3
    max_pair_angle: float = math.pi / 2

    def __post_init__(self) -> None:
        if min(self.match_radius, self.direction_window, self.min_segment_len, self.max_pair_angle) <= 0:
            raise InputContractError("all untangling parameters must be positive")


@dataclass(frozen=True)
class SteeringAngle:
    """Sum of the turning angles a pair of segment ends would need to join."""

    value: float
    pair: tuple[tuple[int, End], tuple[int, End]]


@dataclass(frozen=True)
class WormSkeleton:
    """One untangled individual: an ordered, acyclic, 8-connected path."""

    path: tuple[Pixel, ...]
    endpoints: tuple[Pixel, Pixel]
    provenance: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if len(self.path) < 1:
            raise InputContractError("worm path must be non-empty")
        if self.endpoints != (self.path[0], self.path[-1]):
            raise InputContractError("endpoints must be the first and last path pixels")
        for a, b in zip(self.path, self.path[1:]):
            if max(abs(a[0] - b[0]), abs(a[1] - b[1])) != 1:
                raise InputContractError(f"path pixels {a} and {b} are not 8-adjacent")


def match_endpoint(
    p: Pixel, targets: Iterable[Pixel], radius: float
) -> Optional[Pixel]:
    """Closest target within the search circle, or None.

    Distance ties are broken toward the smaller (row, col).
    """
    if radius <= 0:
        raise InputContractError("search radius must be positive")
    r2 = radius * radius
    best: Optional[tuple[int, Pixel]] = None
    for t in targets:
        d2 = (t[0] - p[0]) ** 2 + (t[1] - p[1]) ** 2
        if d2 <= r2 and (best is None or (d2, t) < best):
            best = (d2, t)
    return best[1] if best else None


# ---------------------------------------------------------------------------
# Direction estimation and steering angles.
#
# The formulas below stick to sign-symmetric arithmetic (products, sums,
# sqrt, atan2 of both-rotating arguments) so results commute exactly with
# 90-degree grid rotations.


def _fit_direction(window: Sequence[Pixel], tip: Pixel) -> tuple[float, float]:
    """Least-squares line direction of the window, oriented out through tip."""
    n = len(window)
    pts = np.asarray(window, dtype=np.float64)
    mean = pts.sum(axis=0) / n
    d = pts - mean
    srr = float((d[:, 0] * d[:, 0]).sum())
    scc = float((d[:, 1] * d[:, 1]).sum())
    src = float((d[:, 0] * d[:, 1]).sum())
    if srr == 0.0 and scc == 0.0 and src == 0.0:
        raise InputContractError("cannot fit a direction: window pixels are identical")
    disc = math.sqrt((srr - scc) * (srr - scc) + 4.0 * src * src)
    lam = 0.5 * (srr + scc + disc)
    v1 = (src, lam - srr)
    v2 = (lam - scc, src)
    n1 = v1[0] * v1[0] + v1[1] * v1[1]
    n2 = v2[0] * v2[0] + v2[1] * v2[1]
    v = v1 if n1 >= n2 else v2
    # orient outward: along the window toward its tip
    for ref in ((tip[0] - window[0][0], tip[1] - window[0][1]),
                (tip[0] - window[-2][0], tip[1] - window[-2][1]) if n >= 2 else (0, 0)):
        dot = v[0] * ref[0] + v[1] * ref[1]
        if dot > 0:
            return v
        if dot < 0:
            return (-v[0], -v[1])
    raise InputContractError("cannot orient direction: window is degenerate")


def _end_window(path: Sequence[Pixel], end: End, window: int) -> list[Pixel]:
    if end == "a":
        return list(path[:window])[::-1]
    return list(path[-window:])


def _angle_between(u: tuple[float, float], v: tuple[float, float]) -> float:
    cross = u[0] * v[1] - u[1] * v[0]
    dot = u[0] * v[0] + u[1] * v[1]
    return math.atan2(abs(cross), dot)


def steering_angle(
    seg_a: Segment,
    end_a: End,
    seg_b: Segment,
    end_b: End,
    window: int = 5,
) -> SteeringAngle:
    """Steering angle for joining seg_a at end_a with seg_b at end_b.

    Each segment contributes the angle between its outgoing continuation
    direction at the cut end and the straight line that would connect the two
    cut ends; the value is the sum of the two contributions. Collinear
    continuations score 0, joining two ends that point away from each other
    scores up to 2*pi.
    """
    if len(seg_a) < 2 or len(seg_b) < 2:
        raise InputContractError("steering angles need segments of length >= 2")
    pa = seg_a.end_a if end_a == "a" else seg_a.end_b
    pb = seg_b.end_a if end_b == "a" else seg_b.end_b
    da = _fit_direction(_end_window(seg_a.path, end_a, window), pa)
    db = _fit_direction(_end_window(seg_b.path, end_b, window), pb)
    link = (float(pb[0] - pa[0]), float(pb[1] - pa[1]))
    if link == (0.0, 0.0):
        raise InputContractError("cut ends coincide; no connecting line exists")
    alpha1 = _angle_between(da, link)
    alpha2 = _angle_between(db, (-link[0], -link[1]))
    return SteeringAngle(value=alpha1 + alpha2, pair=((0, end_a), (1, end_b)))


# ---------------------------------------------------------------------------
# Phase 1: cutting at predicted endpoints.


def _neighbor_runs(pixels: set[Pixel], q: Pixel) -> list[list[Pixel]]:
    """Foreground neighbors of q grouped into ring runs."""
    ring = neighbors8(q)
    flags = [n in pixels for n in ring]
    if not any(flags):
        return []
    runs: list[list[Pixel]] = []
    # find a background position to start the circular scan
    try:
        start = flags.index(False)
    except ValueError:
        return [[n for n in ring]]
    current: list[Pixel] = []
    for i in range(start, start + 8):
        idx = i % 8
        if flags[idx]:
            current.append(ring[idx])
        elif current:
            runs.append(current)
            current = []
    if current:
        runs.append(current)
    return runs


def _cut_at(pixels: set[Pixel], junction_members: set[Pixel], q: Pixel) -> None:
    """Remove q and one flanking path pixel per branch, sparing junctions.

    Cutting a plain line point removes three pixels, which guarantees the two
    sides are no longer 8-adjacent. Flanks inside a junction cluster are kept
    so that an intact crossing nearby is still resolved by the junction pass.
    """
    runs = _neighbor_runs(pixels, q)
    doomed = {q}
    for run in runs:
        run_sorted = sorted(run, key=lambda n: (abs(n[0] - q[0]) + abs(n[1] - q[1]), n))
        flank = run_sorted[0]
        if flank not in junction_members:
            doomed.add(flank)
    pixels -= doomed


# ---------------------------------------------------------------------------
# Phase 2 bookkeeping: segments, free ends, greedy pairing.


@dataclass
class _EndInfo:
    seg: int
    side: End
    pos: Pixel
    direction: tuple[float, float]
    free: bool = True


class _Chains:
    """Union-find over segments plus the merge links between their ends."""

    def __init__(self, n: int) -> None:
        self.parent = list(range(n))
        self.links: list[tuple[tuple[int, End], tuple[int, End]]] = []

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        self.parent[self.find(a)] = self.find(b)


def _assemble(seg: Segment, side_first: End) -> list[Pixel]:
    return list(seg.path) if side_first == "a" else list(seg.path[::-1])


def _chain_paths(
    segments: list[Segment], chains: _Chains
) -> list[tuple[list[Pixel], list[int]]]:
    """Walk each merged chain from one free end to the other."""
    by_end: dict[tuple[int, End], tuple[int, End]] = {}
    for (e1, e2) in chains.links:
        by_end[e1] = e2
        by_end[e2] = e1
    groups: dict[int, list[int]] = {}
    for i in range(len(segments)):
        groups.setdefault(chains.find(i), []).append(i)

    out = []
    for members in groups.values():
        free_ends = [
            (i, side)
            for i in members
            for side in ("a", "b")
            if (i, side) not in by_end
        ]
        # linear chains always expose exactly two unmerged ends
        start = min(
            free_ends,
            key=lambda e: (segments[e[0]].end_a if e[1] == "a" else segments[e[0]].end_b),
        )
        path: list[Pixel] = []
        provenance: list[int] = []
        seg_idx, side = start
        while True:
            oriented = _assemble(segments[seg_idx], side)
            if path:
                bridge = digital_line(path[-1], oriented[0])[1:-1]
                path.extend(bridge)
            path.extend(oriented)
            provenance.append(seg_idx)
            far = (seg_idx, "b" if side == "a" else "a")
            if far not in by_end:
                break
            seg_idx, other_side = by_end[far]
            side = other_side
        out.append((path, provenance))
    return out


def untangle(
    skel: Skeleton,
    ep: Sequence[EndpointDetection | Pixel],
    cfg: UntangleConfig = UntangleConfig(),
) -> list[WormSkeleton]:
    """Decompose a skeleton into one path per individual worm.

    ``ep`` lists the predicted body endpoints, most confident first. A
    predicted endpoint that already matches a geometric endpoint confirms it;
    one that instead matches mid-skeleton marks a fused tip and triggers a
    cut. Junctions that remain afterwards are resolved by greedily joining
    the incident segment ends with the smallest steering angle; pairs that
    would have to turn more than cfg.max_pair_angle stay separate.
    """
    pixels = set(skel.pixels)
    ep_points = [e.pos if isinstance(e, EndpointDetection) else tuple(e) for e in ep]

    # phase 1: cut where a predicted endpoint hits the middle of the skeleton
    for p in ep_points:
        if not pixels:
            break
        cls = classify(Skeleton(frozenset(pixels), skel.shape))
        if match_endpoint(p, cls.endpoints_geo, cfg.match_radius) is not None:
            continue
        q = match_endpoint(p, pixels, cfg.match_radius)
        if q is None:
            continue
        junction_members = {m for j in cls.junctions for m in j.members}
        junction_zone = junction_members | {
            n for m in junction_members for n in neighbors8(m)
        }
        if q in junction_zone:
            continue  # an intact crossing is handled by the junction pass
        _cut_at(pixels, junction_members, q)
        pixels = _cleanup(pixels)

    if not pixels:
        return []

    # phase 2: resolve the remaining junctions. The cut zone is the junction
    # cluster plus its adjacent skeleton pixels: on the pixel grid two
    # transversally crossing curves stay mutually adjacent slightly beyond
    # the crossing-number-positive pixels, and arms only separate reliably
    # once that collar is removed too.
    cut_skel = Skeleton(frozenset(pixels), skel.shape)
    cls = classify(cut_skel)
    removed: set[Pixel] = set()
    for junction in cls.junctions:
        removed |= junction.members
        for m in junction.members:
            removed |= {n for n in neighbors8(m) if n in pixels}
    segments = [
        s
        for s in segments_from_pixels(pixels - removed)
        if len(s) >= cfg.min_segment_len
    ]
    if not segments:
        return []

    ends: dict[tuple[int, End], _EndInfo] = {}
    for i, seg in enumerate(segments):
        for side in ("a", "b"):
            pos = seg.end_a if side == "a" else seg.end_b
            try:
                direction = _fit_direction(
                    _end_window(seg.path, side, cfg.direction_window), pos
                )
            except InputContractError:
                direction = (0.0, 0.0)
            ends[(i, side)] = _EndInfo(seg=i, side=side, pos=pos, direction=direction)

    chains = _Chains(len(segments))
    for junction in cls.junctions:
        site = junction.site
        limit2 = (2.0 * cfg.match_radius) ** 2
        cand = [
            info
            for info in ends.values()
            if info.free
            and (info.pos[0] - site[0]) ** 2 + (info.pos[1] - site[1]) ** 2 <= limit2
        ]
        scored = []
        for i in range(len(cand)):
            for k in range(i + 1, len(cand)):
                a, b = cand[i], cand[k]
                if a.seg == b.seg:
                    continue
                if a.direction == (0.0, 0.0) or b.direction == (0.0, 0.0):
                    continue
                link = (float(b.pos[0] - a.pos[0]), float(b.pos[1] - a.pos[1]))
                s_a = _angle_between(a.direction, link) + _angle_between(
                    b.direction, (-link[0], -link[1])
                )
                if s_a <= cfg.max_pair_angle:
                    scored.append((s_a, (a.seg, a.side), (b.seg, b.side)))
        scored.sort(key=lambda t: (t[0], t[1], t[2]))
        for s_a, key_a, key_b in scored:
            a, b = ends[key_a], ends[key_b]
            if not (a.free and b.free):
                continue
            if chains.find(a.seg) == chains.find(b.seg):
                continue  # joining would close a cycle
            a.free = False
            b.free = False
            chains.union(a.seg, b.seg)
            chains.links.append((key_a, key_b))

    worms = []
    for path, provenance in _chain_paths(segments, chains):
        worms.append(
            WormSkeleton(
                path=tuple(path),
                endpoints=(path[0], path[-1]),
                provenance=tuple(provenance),
            )
        )
    worms.sort(key=lambda w: min(w.path))
    return worms
