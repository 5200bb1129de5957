"""Skeleton extraction and pixel classification.

Probability maps are binarized and thinned to 1-pixel-wide skeletons; skeleton
pixels are then classified into geometric endpoints, intersections, and line
points, and the skeleton is split into segments between junctions.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.ndimage as ndi

from ._grid import COMPONENT_COUNT, NEIGHBOR_COUNT, RING, RUN_COUNT, neighbors8, ring_code
from .errors import InputContractError
from .raster import ProbMap

__all__ = [
    "Skeleton",
    "Junction",
    "SkeletonClassification",
    "Segment",
    "EndpointDetection",
    "binarize_and_thin",
    "classify",
    "extract_segments",
    "segments_from_pixels",
    "extract_endpoint_detections",
    "skeleton_to_json",
    "skeleton_from_json",
    "segment_to_json",
    "segment_from_json",
]

Pixel = tuple[int, int]


def _redundant(pixels: set[Pixel] | frozenset[Pixel], p: Pixel) -> bool:
    code = ring_code(pixels, p)
    return NEIGHBOR_COUNT[code] >= 2 and COMPONENT_COUNT[code] == 1


def _cleanup(pixels: set[Pixel]) -> set[Pixel]:
    """Delete pixels whose removal keeps their neighbors 8-connected.

    Deletions are applied one at a time in (row, col) order so the result is
    deterministic; endpoints (single neighbor) are never touched.
    """
    heap = [p for p in pixels if _redundant(pixels, p)]
    heapq.heapify(heap)
    while heap:
        p = heapq.heappop(heap)
        if p not in pixels or not _redundant(pixels, p):
            continue
        pixels.discard(p)
        for n in neighbors8(p):
            if n in pixels and _redundant(pixels, n):
                heapq.heappush(heap, n)
    return pixels


@dataclass(frozen=True)
class Skeleton:
    """1-pixel-wide set of skeleton pixels over a (height, width) canvas."""

    pixels: frozenset[Pixel]
    shape: tuple[int, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "pixels", frozenset(self.pixels))
        h, w = self.shape
        for r, c in self.pixels:
            if not (0 <= r < h and 0 <= c < w):
                raise InputContractError(f"skeleton pixel {(r, c)} outside shape {self.shape}")
        bad = next((p for p in self.pixels if _redundant(self.pixels, p)), None)
        if bad is not None:
            raise InputContractError(f"skeleton is not 1-pixel wide: {bad} is removable")

    def to_mask(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        if self.pixels:
            idx = np.array(sorted(self.pixels))
            out[idx[:, 0], idx[:, 1]] = True
        return out


@dataclass(frozen=True)
class Junction:
    """A cluster of mutually 8-adjacent intersection pixels."""

    site: Pixel
    members: frozenset[Pixel]


@dataclass(frozen=True)
class SkeletonClassification:
    endpoints_geo: frozenset[Pixel]
    intersections_geo: frozenset[Pixel]
    line_points: frozenset[Pixel]
    junctions: tuple[Junction, ...] = field(default=())


class EndpointDetection(NamedTuple):
    row: int
    col: int
    confidence: float

    @property
    def pos(self) -> Pixel:
        return (self.row, self.col)


@dataclass(frozen=True)
class Segment:
    """Ordered 8-connected pixel path between two cut ends."""

    path: tuple[Pixel, ...]

    def __post_init__(self) -> None:
        if len(self.path) < 1:
            raise InputContractError("segment path must contain at least one pixel")
        for a, b in zip(self.path, self.path[1:]):
            if max(abs(a[0] - b[0]), abs(a[1] - b[1])) != 1:
                raise InputContractError(f"segment pixels {a} and {b} are not 8-adjacent")

    @property
    def end_a(self) -> Pixel:
        return self.path[0]

    @property
    def end_b(self) -> Pixel:
        return self.path[-1]

    def __len__(self) -> int:
        return len(self.path)


# ---------------------------------------------------------------------------
# Thinning.

_ZS_RING = RING  # p2..p9, clockwise from north


def _neighbor_stack(a: np.ndarray) -> list[np.ndarray]:
    padded = np.pad(a, 1)
    h, w = a.shape
    return [padded[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w] for dr, dc in _ZS_RING]


def _zs_ok(img: np.ndarray, r: int, c: int, phase: int) -> bool:
    h, w = img.shape
    ring = [
        img[r + dr, c + dc] if 0 <= r + dr < h and 0 <= c + dc < w else 0
        for dr, dc in _ZS_RING
    ]
    b = sum(ring)
    if not (2 <= b <= 6):
        return False
    a = sum(1 for i in range(8) if ring[i] == 0 and ring[(i + 1) % 8] == 1)
    if a != 1:
        return False
    n, e, s, wst = ring[0], ring[2], ring[4], ring[6]
    if phase == 0:
        return n * e * s == 0 and e * s * wst == 0
    return n * e * wst == 0 and n * s * wst == 0


def _zhang_suen(mask: np.ndarray) -> np.ndarray:
    img = mask.astype(np.uint8)
    while True:
        changed = False
        for phase in (0, 1):
            p = _neighbor_stack(img)
            b = sum(p)
            a = sum(((p[i] == 0) & (p[(i + 1) % 8] == 1)).astype(np.uint8) for i in range(8))
            # ring indices: 0=N 2=E 4=S 6=W
            if phase == 0:
                cond = (p[0] * p[2] * p[4] == 0) & (p[2] * p[4] * p[6] == 0)
            else:
                cond = (p[0] * p[2] * p[6] == 0) & (p[0] * p[4] * p[6] == 0)
            kill = (img == 1) & (b >= 2) & (b <= 6) & (a == 1) & cond
            # confirm deletions one at a time so a batch can never break
            # connectivity or erase a component outright
            for r, c in np.argwhere(kill):
                if _zs_ok(img, r, c, phase):
                    img[r, c] = 0
                    changed = True
        if not changed:
            return img.astype(bool)


def _skeleton_tail(pixels: set[Pixel], endpoint: Pixel, length: int = 6) -> list[Pixel]:
    """Walk inward from an endpoint along the 1-px skeleton."""
    tail = [endpoint]
    while len(tail) < length:
        nxts = [
            n
            for n in neighbors8(tail[-1])
            if n in pixels and n not in tail and (len(tail) < 2 or n not in neighbors8(tail[-2]))
        ]
        if len(nxts) != 1:
            break
        tail.append(nxts[0])
    return tail


def _extend_tips(pixels: set[Pixel], binary: np.ndarray, max_steps: int = 64) -> set[Pixel]:
    """Re-grow skeleton endpoints along their direction inside the support.

    Thinning retracts the open ends of a thresholded band, badly so for
    diagonal bands; the lost tip is recovered by stepping outward through
    still-foreground pixels until the support ends or another skeleton part
    comes too close. Every appended pixel touches exactly one skeleton pixel,
    so the result stays 1 px wide.
    """
    h, w = binary.shape
    endpoints = sorted(
        p for p in pixels if NEIGHBOR_COUNT[ring_code(pixels, p)] == 1
    )
    for e in endpoints:
        hist = _skeleton_tail(pixels, e, 6)[::-1]  # oriented toward the tip
        if len(hist) < 2:
            continue
        tip = hist[-1]
        for _ in range(max_steps):
            anchor = hist[max(0, len(hist) - 6)]
            dr, dc = tip[0] - anchor[0], tip[1] - anchor[1]
            best = None
            for n in neighbors8(tip):
                if not (0 <= n[0] < h and 0 <= n[1] < w):
                    continue
                if not binary[n] or n in pixels:
                    continue
                if any(m != tip and m in pixels for m in neighbors8(n)):
                    continue
                step = (n[0] - tip[0], n[1] - tip[1])
                dot = dr * step[0] + dc * step[1]
                if dot <= 0:
                    continue
                score = dot / math.sqrt(step[0] * step[0] + step[1] * step[1])
                if best is None or (-score, n) < best:
                    best = (-score, n)
            if best is None:
                break
            tip = best[1]
            pixels.add(tip)
            hist.append(tip)
    return pixels


def binarize_and_thin(pmap: ProbMap, threshold: float = 0.5) -> Skeleton:
    """Threshold a probability map and thin each component to 1 pixel wide.

    Thinning preserves the 8-connectivity of every component; a cleanup pass
    removes pixels that are redundant for connectivity and eroded tips are
    re-grown inside the thresholded support, so re-running the operation on
    its own output is the identity.
    """
    if not (0.0 < threshold < 1.0):
        raise InputContractError(f"threshold must lie in (0, 1), got {threshold}")
    binary = pmap.data >= threshold
    thinned = _zhang_suen(binary)
    pixels = _cleanup({(int(r), int(c)) for r, c in np.argwhere(thinned)})
    pixels = _extend_tips(pixels, binary)
    return Skeleton(frozenset(pixels), pmap.shape)


# ---------------------------------------------------------------------------
# Classification.


def _codes(skel: Skeleton) -> dict[Pixel, int]:
    return {p: ring_code(skel.pixels, p) for p in skel.pixels}


def classify(skel: Skeleton) -> SkeletonClassification:
    """Partition skeleton pixels into endpoints, intersections, line points.

    An endpoint has exactly one skeleton neighbor; an intersection has at
    least three branches by the crossing number of its neighborhood ring.
    Mutually adjacent intersection pixels are merged into one junction,
    reported at the member closest to the cluster centroid.
    """
    codes = _codes(skel)
    endpoints, intersections, line_points = set(), set(), set()
    for p, code in codes.items():
        if NEIGHBOR_COUNT[code] == 1:
            endpoints.add(p)
        elif RUN_COUNT[code] >= 3:
            intersections.add(p)
        else:
            line_points.add(p)

    junctions = []
    remaining = set(intersections)
    while remaining:
        seed = min(remaining)
        cluster = {seed}
        frontier = [seed]
        while frontier:
            q = frontier.pop()
            for n in neighbors8(q):
                if n in remaining and n not in cluster:
                    cluster.add(n)
                    frontier.append(n)
        remaining -= cluster
        cr = sum(p[0] for p in cluster) / len(cluster)
        cc = sum(p[1] for p in cluster) / len(cluster)
        site = min(cluster, key=lambda p: ((p[0] - cr) ** 2 + (p[1] - cc) ** 2, p))
        junctions.append(Junction(site=site, members=frozenset(cluster)))
    junctions.sort(key=lambda j: j.site)

    return SkeletonClassification(
        endpoints_geo=frozenset(endpoints),
        intersections_geo=frozenset(intersections),
        line_points=frozenset(line_points),
        junctions=tuple(junctions),
    )


# ---------------------------------------------------------------------------
# Segment extraction.


def _trace_component(comp: set[Pixel]) -> list[list[Pixel]]:
    """Order a path-like component; returns one or more ordered pixel runs."""

    def comp_neighbors(p: Pixel) -> list[Pixel]:
        return [n for n in neighbors8(p) if n in comp]

    runs = []
    left = set(comp)
    while left:
        ends = sorted(p for p in left if sum(1 for n in neighbors8(p) if n in left) <= 1)
        start = ends[0] if ends else min(left)
        path = [start]
        left.discard(start)
        while True:
            # prefer 4-adjacent continuation, then lexicographic order
            options = [n for n in neighbors8(path[-1]) if n in left]
            if not options:
                break
            options.sort(key=lambda n: (abs(n[0] - path[-1][0]) + abs(n[1] - path[-1][1]), n))
            nxt = options[0]
            path.append(nxt)
            left.discard(nxt)
        runs.append(path)
    return runs


def segments_from_pixels(working: set[Pixel]) -> list[Segment]:
    """Ordered maximal paths of a junction-free pixel set; singletons dropped."""
    segments = []
    seen: set[Pixel] = set()
    for seed in sorted(working):
        if seed in seen:
            continue
        comp = {seed}
        frontier = [seed]
        while frontier:
            q = frontier.pop()
            for n in neighbors8(q):
                if n in working and n not in comp:
                    comp.add(n)
                    frontier.append(n)
        seen |= comp
        if len(comp) < 2:
            continue
        for run in _trace_component(comp):
            if len(run) >= 2:
                segments.append(Segment(path=tuple(run)))
    segments.sort(key=lambda s: min(s.path))
    return segments


def extract_segments(skel: Skeleton, classification: SkeletonClassification) -> list[Segment]:
    """Split the skeleton into maximal paths by removing junction clusters.

    Isolated single pixels left over after the removal are dropped. A closed
    loop with no junction comes back as a single segment whose two ends are
    adjacent.
    """
    removed = set()
    for j in classification.junctions:
        removed |= j.members
    return segments_from_pixels(set(skel.pixels) - removed)


# ---------------------------------------------------------------------------
# JSON interchange: skeletons as sorted pixel arrays, segments as ordered
# path arrays.


def skeleton_to_json(skel: Skeleton) -> dict:
    return {
        "shape": [skel.shape[0], skel.shape[1]],
        "pixels": [[r, c] for r, c in sorted(skel.pixels)],
    }


def skeleton_from_json(doc: dict) -> Skeleton:
    return Skeleton(
        pixels=frozenset((int(r), int(c)) for r, c in doc["pixels"]),
        shape=(int(doc["shape"][0]), int(doc["shape"][1])),
    )


def segment_to_json(segment: Segment) -> list[list[int]]:
    return [[r, c] for r, c in segment.path]


def segment_from_json(path: list) -> Segment:
    return Segment(path=tuple((int(r), int(c)) for r, c in path))


# ---------------------------------------------------------------------------
# Endpoint detections from the endpoint probability branch.


def extract_endpoint_detections(pmap: ProbMap, threshold: float = 0.5) -> list[EndpointDetection]:
    """Connected components above threshold, reduced to one detection each.

    Each component reports its probability-weighted centroid rounded to the
    nearest pixel and the component's peak probability as confidence; results
    are sorted by descending confidence, then (row, col).
    """
    if not (0.0 < threshold < 1.0):
        raise InputContractError(f"threshold must lie in (0, 1), got {threshold}")
    above = pmap.data >= threshold
    if not above.any():
        return []
    labels, n = ndi.label(above, structure=np.ones((3, 3), dtype=int))
    detections = []
    for lab in range(1, n + 1):
        sel = labels == lab
        weights = pmap.data[sel]
        coords = np.argwhere(sel)
        total = weights.sum()
        cr = float((coords[:, 0] * weights).sum() / total)
        cc = float((coords[:, 1] * weights).sum() / total)
        detections.append(
            EndpointDetection(
                row=int(np.floor(cr + 0.5)),
                col=int(np.floor(cc + 0.5)),
                confidence=float(weights.max()),
            )
        )
    detections.sort(key=lambda d: (-d.confidence, d.row, d.col))
    return detections
