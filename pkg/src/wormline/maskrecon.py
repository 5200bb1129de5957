"""Rebuild filled body masks from untangled skeletons.

The body half-width at each skeleton pixel is taken as the distance to the
nearest detected edge, smoothed along the path, and capped near the path ends
so the reconstruction tapers into a tip instead of a blunt disc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._grid import path_lengths
from .errors import InputContractError
from .raster import BinaryMask, distance_transform
from .untangle import WormSkeleton

__all__ = ["RadiusProfile", "WormMask", "estimate_radii", "fill_mask", "stamp_discs"]


@dataclass(frozen=True)
class RadiusProfile:
    """Per-path-pixel body radii, aligned with a worm's skeleton path."""

    radii: tuple[float, ...]

    def __post_init__(self) -> None:
        if any(r < 0 for r in self.radii):
            raise InputContractError("radii must be >= 0")


@dataclass(frozen=True)
class WormMask:
    mask: BinaryMask
    source: int


def _moving_average(values: np.ndarray, half_window: int = 2) -> np.ndarray:
    n = len(values)
    out = np.empty(n)
    for i in range(n):
        lo = max(0, i - half_window)
        hi = min(n, i + half_window + 1)
        out[i] = values[lo:hi].mean()
    return out


def estimate_radii(
    worm: WormSkeleton,
    edges: BinaryMask,
    edge_distance: np.ndarray | None = None,
) -> RadiusProfile:
    """Body radius at every skeleton pixel of one worm.

    The raw radius is the Euclidean distance to the nearest edge pixel.
    Radii are then smoothed with a five-sample moving average (shrunk at the
    path ends) and capped by the geodesic distance to the nearer path end;
    the terminal pixels are capped at 1 so the mask forms a tip.

    A precomputed distance transform of the edge mask may be passed to share
    it across the worms of one image.
    """
    if not worm.path:
        raise InputContractError("worm path is empty")
    if edge_distance is None:
        if not edges.data.any():
            raise InputContractError("edge mask is empty; no width evidence")
        edge_distance = distance_transform(edges)
    idx = np.array(worm.path)
    raw = edge_distance[idx[:, 0], idx[:, 1]].astype(np.float64)
    smooth = _moving_average(raw, 2)
    cum = np.asarray(path_lengths(worm.path))
    cap = np.minimum(cum, cum[-1] - cum)
    cap[0] = 1.0
    cap[-1] = 1.0
    return RadiusProfile(radii=tuple(np.minimum(smooth, cap)))


def stamp_discs(
    pixels: Sequence[tuple[int, int]],
    radii: Sequence[float],
    shape: tuple[int, int],
) -> np.ndarray:
    """Union of closed discs: pixel included iff center distance <= radius."""
    h, w = shape
    out = np.zeros(shape, dtype=bool)
    for (r, c), radius in zip(pixels, radii):
        out[r, c] = True
        reach = int(math.floor(radius))
        if reach < 1:
            continue
        r0, r1 = max(0, r - reach), min(h, r + reach + 1)
        c0, c1 = max(0, c - reach), min(w, c + reach + 1)
        rr, cc = np.ogrid[r0:r1, c0:c1]
        out[r0:r1, c0:c1] |= (rr - r) ** 2 + (cc - c) ** 2 <= radius * radius
    return out


def fill_mask(
    worm: WormSkeleton, profile: RadiusProfile, shape: tuple[int, int], source: int = 0
) -> WormMask:
    """Union of filled discs along the worm path; always covers the path."""
    if len(profile.radii) != len(worm.path):
        raise InputContractError(
            f"profile length {len(profile.radii)} does not match path length {len(worm.path)}"
        )
    for r, c in worm.path:
        if not (0 <= r < shape[0] and 0 <= c < shape[1]):
            raise InputContractError(f"worm pixel {(r, c)} outside shape {shape}")
    return WormMask(mask=BinaryMask(stamp_discs(worm.path, profile.radii, shape)), source=source)
