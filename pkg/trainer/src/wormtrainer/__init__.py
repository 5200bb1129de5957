"""Training side of the worm-detection pipeline: prepares skeleton/endpoint
targets from per-worm masks, trains a two-branch U-Net with the distance-slack
focal loss, and exports 16-bit probability maps in wormline's file contract."""

__version__ = "0.1.0"

from .config import TrainConfig

__all__ = ["TrainConfig", "__version__"]
