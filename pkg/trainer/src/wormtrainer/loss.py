"""Torch version of the class-balanced focal loss with distance slack.

Must agree with wormline.lossmap.focal_loss to 1e-5 relative on identical
tensors; the parity test in tests/test_loss_parity.py holds the two
implementations together.
"""

from __future__ import annotations

import torch

EPSILON = 1e-7


def focal_loss(
    pred: torch.Tensor,
    target: torch.Tensor,
    weights: torch.Tensor,
    gamma: float,
    beta: float,
    n_objects: torch.Tensor | int,
) -> torch.Tensor:
    """Per-image normalized focal loss, averaged over the batch.

    ``pred`` holds positive-class probabilities (B, H, W); ``target`` is the
    boolean ground truth; ``weights`` the slack map; ``n_objects`` the object
    count per image (scalar or (B,) tensor).
    """
    if pred.shape != target.shape or pred.shape != weights.shape:
        raise ValueError(
            f"shape mismatch: pred {tuple(pred.shape)}, target {tuple(target.shape)}, "
            f"weights {tuple(weights.shape)}"
        )
    p = pred.clamp(EPSILON, 1.0 - EPSILON)
    pos = (1.0 - p) ** gamma * torch.log(p)
    neg = (1.0 - weights) ** beta * p**gamma * torch.log1p(-p)
    terms = torch.where(target.bool(), pos, neg)
    per_image = terms.flatten(1).sum(dim=1)
    n = torch.as_tensor(n_objects, dtype=pred.dtype, device=pred.device)
    if n.ndim == 0:
        n = n.expand(pred.shape[0])
    h, w = pred.shape[-2:]
    return (-per_image / (n * h * w)).mean()
