"""Training configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

from wormline.lossmap import LossParams, SlackConfig

FOLDS = ("A", "B")
FOLD_A_ROWS = ("A", "B")  # wells A01-B24
FOLD_B_ROWS = ("C", "D", "E")  # wells C01-E04


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run.

    ``fold`` names the fold to TRAIN on; the other fold becomes the held-out
    export set. Optimizer settings are deliberately plain defaults; they are
    documented here rather than asserted anywhere.
    """

    slack: SlackConfig = field(default_factory=SlackConfig)
    loss: LossParams = field(default_factory=LossParams)
    fold: str = "A"
    augment_contrast: bool = True
    augment_rotations: bool = True
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 2
    base_channels: int = 16
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.fold not in FOLDS:
            raise ValueError(f"fold must be one of {FOLDS}, got {self.fold!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs, batch_size, and learning_rate must be positive")


def fold_of_well(well: str) -> str:
    row = well[0].upper()
    if row in FOLD_A_ROWS:
        return "A"
    if row in FOLD_B_ROWS:
        return "B"
    raise ValueError(f"well {well!r} does not belong to either fold")
