"""Pixel-grid helpers: 8-neighborhoods, ring topology tables, digital lines.

All coordinates are (row, col). The neighborhood ring is ordered clockwise
starting north; the lookup tables below are indexed by the 8-bit code whose
bit i is set when ring position i is foreground.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

# Clockwise from north: N, NE, E, SE, S, SW, W, NW.
RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))

# Ring positions that are 8-adjacent as pixels: consecutive positions plus the
# four side-to-side pairs that touch diagonally across a corner.
_RING_ADJ = tuple(
    [(i, (i + 1) % 8) for i in range(8)] + [(0, 2), (2, 4), (4, 6), (6, 0)]
)


def _components_of_code(code: int) -> int:
    present = [i for i in range(8) if code >> i & 1]
    if not present:
        return 0
    parent = {i: i for i in present}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in _RING_ADJ:
        if a in parent and b in parent:
            parent[find(a)] = find(b)
    return len({find(i) for i in present})


def _runs_of_code(code: int) -> int:
    count = 0
    for i in range(8):
        if not (code >> i & 1) and (code >> ((i + 1) % 8) & 1):
            count += 1
    return count


COMPONENT_COUNT = tuple(_components_of_code(c) for c in range(256))
RUN_COUNT = tuple(_runs_of_code(c) for c in range(256))
NEIGHBOR_COUNT = tuple(bin(c).count("1") for c in range(256))


def ring_code(pixels: set | frozenset, p: tuple[int, int]) -> int:
    r, c = p
    code = 0
    for i, (dr, dc) in enumerate(RING):
        if (r + dr, c + dc) in pixels:
            code |= 1 << i
    return code


def neighbors8(p: tuple[int, int]) -> list[tuple[int, int]]:
    r, c = p
    return [(r + dr, c + dc) for dr, dc in RING]


def is_redundant(code: int) -> bool:
    """True when the pixel can be dropped without splitting its neighbors."""
    return NEIGHBOR_COUNT[code] >= 2 and COMPONENT_COUNT[code] == 1


def chebyshev(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5) * (1.0 if x >= 0 else -1.0))


def digital_line(a: tuple[int, int], b: tuple[int, int]) -> list[tuple[int, int]]:
    """8-connected straight line from a to b, both inclusive.

    Sampling uses round-half-away-from-zero so the pixel set commutes exactly
    with 90-degree grid rotations.
    """
    n = chebyshev(a, b)
    if n == 0:
        return [a]
    pts = []
    for k in range(n + 1):
        t = k / n
        r = _round_half_away(a[0] + t * (b[0] - a[0]))
        c = _round_half_away(a[1] + t * (b[1] - a[1]))
        pts.append((r, c))
    return pts


def path_lengths(path: Sequence[tuple[int, int]]) -> list[float]:
    """Cumulative geodesic length along an 8-connected path (diagonal = sqrt 2)."""
    out = [0.0]
    for (r0, c0), (r1, c1) in zip(path, path[1:]):
        step = math.sqrt(2.0) if (r0 != r1 and c0 != c1) else 1.0
        out.append(out[-1] + step)
    return out


def sort_pixels(pixels: Iterable[tuple[int, int]]) -> list[tuple[int, int]]:
    return sorted(pixels)
