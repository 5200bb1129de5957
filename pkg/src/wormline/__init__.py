"""Worm-shaped object detection toolkit: skeleton untangling, mask
reconstruction, training-target generation, and matching-based evaluation."""

__version__ = "0.1.0"

from .errors import FormatError, InputContractError, WormlineError
from .raster import BinaryMask, GrayImage, ProbMap

__all__ = [
    "BinaryMask",
    "FormatError",
    "GrayImage",
    "InputContractError",
    "ProbMap",
    "WormlineError",
    "__version__",
]
