"""Data augmentation: gamma-contrast variants crossed with 30-degree
rotations, expanding each pair to 36."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.ndimage as ndi

GAMMAS = (1.0, 0.5, 2.0)
ANGLES = tuple(range(0, 360, 30))


@dataclass(frozen=True)
class AugmentedPair:
    image: np.ndarray
    skel_target: np.ndarray
    ep_target: np.ndarray
    gamma: float
    angle: int


def _rotate(arr: np.ndarray, angle: int, order: int) -> np.ndarray:
    angle = angle % 360
    if angle == 0:
        return arr.copy()
    if angle == 180:
        return np.rot90(arr, 2).copy()
    if angle in (90, 270) and arr.shape[0] == arr.shape[1]:
        return np.rot90(arr, angle // 90).copy()
    return ndi.rotate(arr.astype(np.float64), angle, reshape=False, order=order, mode="constant", cval=0.0)


def rotate_image(image: np.ndarray, angle: int) -> np.ndarray:
    return np.clip(_rotate(image, angle, order=1), 0.0, 1.0)


def rotate_target(target: np.ndarray, angle: int) -> np.ndarray:
    # nearest neighbor keeps targets strictly binary
    return _rotate(target.astype(np.float64), angle, order=0) > 0.5


def augment(
    image: np.ndarray,
    skel_target: np.ndarray,
    ep_target: np.ndarray,
    contrast: bool = True,
    rotations: bool = True,
) -> list[AugmentedPair]:
    """All gamma/rotation combinations; the identity member comes first."""
    gammas = GAMMAS if contrast else (1.0,)
    angles = ANGLES if rotations else (0,)
    out = []
    for gamma in gammas:
        shaded = np.clip(image, 0.0, 1.0) ** gamma
        for angle in angles:
            out.append(
                AugmentedPair(
                    image=rotate_image(shaded, angle),
                    skel_target=rotate_target(skel_target, angle),
                    ep_target=rotate_target(ep_target, angle),
                    gamma=gamma,
                    angle=angle,
                )
            )
    return out
