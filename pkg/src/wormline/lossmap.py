"""Training-target machinery: ground-truth rendering, distance-based weight
maps, and the class-balanced focal loss used to train the prediction heads.

The weight map softens the penalty of negative pixels near positives: it is
an unnormalized Gaussian of the Euclidean distance transform of the ground
truth, so annotation offsets of a few pixels stop dominating the loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputContractError
from .raster import BinaryMask, ProbMap, distance_transform
from .untangle import WormSkeleton

__all__ = [
    "SlackConfig",
    "WeightMap",
    "LossParams",
    "render_targets",
    "weight_map",
    "focal_loss",
    "focal_loss_grad",
    "EPSILON",
]

EPSILON = 1e-7


@dataclass(frozen=True)
class SlackConfig:
    """Gaussian standard deviations of the distance slack, in pixels.

    Zero disables the slack: the weight map becomes the binary ground truth.
    """

    sigma_skeleton: float = 2.0
    sigma_endpoint: float = 3.0

    def __post_init__(self) -> None:
        if self.sigma_skeleton < 0 or self.sigma_endpoint < 0:
            raise InputContractError("slack sigmas must be >= 0")


@dataclass(frozen=True)
class WeightMap:
    """Per-pixel weights in [0, 1]; exactly 1 on ground-truth positives."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise InputContractError("weight map must be 2-D")
        if data.min() < 0.0 or data.max() > 1.0:
            raise InputContractError("weights must lie in [0, 1]")
        out = np.array(data, copy=True, order="C")
        out.setflags(write=False)
        object.__setattr__(self, "data", out)

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class LossParams:
    gamma: float = 2.0
    beta: float = 4.0
    n_objects: int = 1

    def __post_init__(self) -> None:
        if self.gamma < 0 or self.beta < 0:
            raise InputContractError("gamma and beta must be >= 0")
        if self.n_objects < 1:
            raise InputContractError("n_objects must be >= 1")


def render_targets(
    worms: Sequence[WormSkeleton], shape: tuple[int, int]
) -> tuple[BinaryMask, BinaryMask]:
    """Rasterize worm paths into a skeleton mask and an endpoint mask."""
    h, w = shape
    skel = np.zeros(shape, dtype=bool)
    ends = np.zeros(shape, dtype=bool)
    for worm in worms:
        for r, c in worm.path:
            if not (0 <= r < h and 0 <= c < w):
                raise InputContractError(f"worm pixel {(r, c)} outside shape {shape}")
            skel[r, c] = True
        for r, c in worm.endpoints:
            ends[r, c] = True
    return BinaryMask(skel), BinaryMask(ends)


def weight_map(gt: BinaryMask, sigma: float) -> WeightMap:
    """Gaussian of the distance to the nearest ground-truth pixel."""
    if sigma < 0:
        raise InputContractError("sigma must be >= 0")
    if not gt.data.any():
        raise InputContractError("weight map needs at least one positive pixel")
    if sigma == 0:
        return WeightMap(gt.data.astype(np.float64))
    d = distance_transform(gt)
    return WeightMap(np.exp(-(d * d) / (2.0 * sigma * sigma)))


def _check_shapes(pred: ProbMap, gt: BinaryMask, w: WeightMap) -> None:
    if pred.shape != gt.shape or pred.shape != w.shape:
        raise InputContractError(
            f"shape mismatch: pred {pred.shape}, gt {gt.shape}, weights {w.shape}"
        )


def focal_loss(pred: ProbMap, gt: BinaryMask, w: WeightMap, params: LossParams) -> float:
    """Class-balanced focal loss over one probability map.

    Positive pixels contribute (1-p)^gamma * log p; negative pixels
    contribute (1-w)^beta * p^gamma * log(1-p), so negatives with weight 1
    (i.e. on the target itself) are ignored entirely. The sum is normalized
    by object count times pixel count and negated.
    """
    _check_shapes(pred, gt, w)
    p = np.clip(pred.data, EPSILON, 1.0 - EPSILON)
    pos = gt.data
    terms = np.where(
        pos,
        (1.0 - p) ** params.gamma * np.log(p),
        (1.0 - w.data) ** params.beta * p**params.gamma * np.log1p(-p),
    )
    h, w_ = pred.shape
    return float(-terms.sum() / (params.n_objects * h * w_))


def focal_loss_grad(
    pred: ProbMap, gt: BinaryMask, w: WeightMap, params: LossParams
) -> np.ndarray:
    """Closed-form d(loss)/d(p) for every pixel of the prediction."""
    _check_shapes(pred, gt, w)
    p = np.clip(pred.data, EPSILON, 1.0 - EPSILON)
    g, b = params.gamma, params.beta
    one_m_p = 1.0 - p
    # d/dp[(1-p)^g log p] = -g (1-p)^(g-1) log p + (1-p)^g / p
    pos_term = -g * one_m_p ** (g - 1.0) * np.log(p) + one_m_p**g / p if g != 0 else 1.0 / p
    # d/dp[(1-w)^b p^g log(1-p)] = (1-w)^b [g p^(g-1) log(1-p) - p^g/(1-p)]
    if g != 0:
        neg_inner = g * p ** (g - 1.0) * np.log1p(-p) - p**g / one_m_p
    else:
        neg_inner = -1.0 / one_m_p
    neg_term = (1.0 - w.data) ** b * neg_inner
    h, w_ = pred.shape
    grad = np.where(gt.data, pos_term, neg_term) / (-params.n_objects * h * w_)
    # outside the clamp range the loss is constant
    grad[(pred.data < EPSILON) | (pred.data > 1.0 - EPSILON)] = 0.0
    return grad


def masked_cross_entropy_reference(
    pred: ProbMap, gt: BinaryMask, w: WeightMap, beta: float, n_objects: int
) -> float:
    """Explicit gamma=0 formula used to cross-check limit behavior in tests."""
    p = np.clip(pred.data, EPSILON, 1.0 - EPSILON)
    pos_sum = np.log(p)[gt.data].sum()
    neg_sum = ((1.0 - w.data) ** beta * np.log1p(-p))[~gt.data].sum()
    h, w_ = pred.shape
    return float(-(pos_sum + neg_sum) / (n_objects * h * w_))
