"""Raster containers, grayscale file I/O, distance transform, Canny edges.

Coordinates are (row, col) with the origin at the top-left; arrays are
row-major with shape (height, width). Containers are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, InputContractError

__all__ = [
    "GrayImage",
    "ProbMap",
    "BinaryMask",
    "load_image",
    "save_image",
    "load_prob_map",
    "save_prob_map",
    "load_mask",
    "save_mask",
    "load_labels",
    "save_labels",
    "distance_transform",
    "canny_edges",
]

PROB_SCALE = 65535


def _freeze(data: np.ndarray) -> np.ndarray:
    # always copy: freezing a view would flip the caller's writeable flag
    out = np.array(data, copy=True, order="C")
    out.setflags(write=False)
    return out


def _check_shape(data: np.ndarray) -> None:
    if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
        raise InputContractError(f"expected a 2-D grid with positive size, got shape {data.shape}")


@dataclass(frozen=True)
class GrayImage:
    """Single-channel image with 8- or 16-bit intensities."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        _check_shape(data)
        if data.dtype not in (np.dtype(np.uint8), np.dtype(np.uint16)):
            raise InputContractError(f"intensities must be uint8 or uint16, got {data.dtype}")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def to_float(self) -> np.ndarray:
        """Intensities scaled to [0, 1] by the dtype maximum."""
        peak = 255.0 if self.data.dtype == np.uint8 else 65535.0
        return self.data.astype(np.float64) / peak


@dataclass(frozen=True)
class ProbMap:
    """Per-pixel probabilities in [0, 1]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        _check_shape(data)
        if not np.isfinite(data).all():
            raise InputContractError("probability map contains non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise InputContractError("probability values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(data))

    width = GrayImage.width
    height = GrayImage.height
    shape = GrayImage.shape


@dataclass(frozen=True)
class BinaryMask:
    """Boolean pixel grid."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        _check_shape(data)
        if data.dtype != np.bool_:
            raise InputContractError(f"mask must be boolean, got {data.dtype}")
        object.__setattr__(self, "data", _freeze(data))

    width = GrayImage.width
    height = GrayImage.height
    shape = GrayImage.shape

    def count(self) -> int:
        return int(self.data.sum())


# ---------------------------------------------------------------------------
# File I/O: 8/16-bit grayscale PNG plus binary PGM (P5).


def _read_pgm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        if raw[:2] != b"P5":
            raise FormatError(f"{path}: only binary PGM (P5) is supported")
        tokens: list[int] = []
        pos = 2
        while len(tokens) < 3:
            while pos < len(raw) and raw[pos : pos + 1].isspace():
                pos += 1
            if raw[pos : pos + 1] == b"#":
                while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                    pos += 1
                continue
            start = pos
            while pos < len(raw) and not raw[pos : pos + 1].isspace():
                pos += 1
            tokens.append(int(raw[start:pos]))
        pos += 1  # single whitespace after maxval
        width, height, maxval = tokens
    except (ValueError, IndexError) as exc:
        raise FormatError(f"{path}: malformed PGM header") from exc
    if maxval < 1 or maxval > 65535:
        raise FormatError(f"{path}: unsupported PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    expected = width * height * dtype.itemsize
    body = raw[pos : pos + expected]
    if len(body) != expected:
        raise FormatError(f"{path}: truncated PGM raster")
    arr = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return arr.astype(np.uint16) if maxval > 255 else arr.copy()


def _write_pgm(arr: np.ndarray, path: Path) -> None:
    maxval = 255 if arr.dtype == np.uint8 else 65535
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    body = arr.astype(">u2").tobytes() if maxval == 65535 else arr.tobytes()
    with open(path, "wb") as fh:
        fh.write(header + body)


def load_image(path: str | Path) -> GrayImage:
    """Read an 8- or 16-bit grayscale PNG or binary PGM.

    16-bit values are preserved without truncation. Color or paletted images
    are rejected with a FormatError.
    """
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        return GrayImage(_read_pgm(path))
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"{path}: unreadable image ({exc})") from exc
    if mode == "L":
        return GrayImage(arr.astype(np.uint8))
    if mode in ("I", "I;16"):
        if arr.min() < 0 or arr.max() > 65535:
            raise FormatError(f"{path}: integer image out of 16-bit range")
        return GrayImage(arr.astype(np.uint16))
    raise FormatError(f"{path}: unsupported color model {mode!r}; expected 8/16-bit grayscale")


def save_image(img: GrayImage, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        _write_pgm(img.data, path)
        return
    if img.data.dtype == np.uint8:
        Image.fromarray(img.data, mode="L").save(path)
    else:
        Image.fromarray(img.data.astype("<u2")).save(path)


def load_prob_map(path: str | Path) -> ProbMap:
    """Read a probability map stored as 16-bit grayscale (p = v / 65535)."""
    img = load_image(path)
    if img.data.dtype != np.uint16:
        raise FormatError(f"{path}: probability maps must be 16-bit (got {img.data.dtype})")
    return ProbMap(img.data.astype(np.float64) / PROB_SCALE)


def save_prob_map(pmap: ProbMap, path: str | Path) -> None:
    values = np.round(pmap.data * PROB_SCALE).astype(np.uint16)
    save_image(GrayImage(values), path)


def load_mask(path: str | Path) -> BinaryMask:
    img = load_image(path)
    return BinaryMask(img.data > 0)


def save_mask(mask: BinaryMask, path: str | Path) -> None:
    save_image(GrayImage(np.where(mask.data, 255, 0).astype(np.uint8)), path)


def load_labels(path: str | Path) -> np.ndarray:
    """Read a 16-bit instance-label image (0 = background)."""
    img = load_image(path)
    if img.data.dtype != np.uint16:
        raise FormatError(f"{path}: label images must be 16-bit")
    return img.data


def save_labels(labels: np.ndarray, path: str | Path) -> None:
    arr = np.asarray(labels)
    if arr.min() < 0 or arr.max() > 65535:
        raise InputContractError("label values must fit in 16 bits")
    save_image(GrayImage(arr.astype(np.uint16)), path)


# ---------------------------------------------------------------------------
# Distance transform and edges.


def distance_transform(mask: BinaryMask) -> np.ndarray:
    """Exact Euclidean distance from every pixel to the nearest true pixel."""
    if not mask.data.any():
        raise InputContractError("distance transform is undefined for an all-false mask")
    return ndi.distance_transform_edt(~mask.data)


def _gradient(img: GrayImage, sigma: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    f = img.to_float()
    if sigma > 0:
        f = ndi.gaussian_filter(f, sigma, mode="nearest")
    gr = ndi.sobel(f, axis=0, mode="nearest") / 8.0
    gc = ndi.sobel(f, axis=1, mode="nearest") / 8.0
    return np.hypot(gr, gc), gr, gc


def _shift(a: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """Array translated by (dr, dc), zero-filled at the border."""
    out = np.zeros_like(a)
    h, w = a.shape
    rs, re = max(dr, 0), h + min(dr, 0)
    cs, ce = max(dc, 0), w + min(dc, 0)
    out[rs:re, cs:ce] = a[rs - dr : re - dr, cs - dc : ce - dc]
    return out


_SECTOR_OFFSETS = (((0, 1), (0, -1)), ((1, 1), (-1, -1)), ((1, 0), (-1, 0)), ((1, -1), (-1, 1)))


def _local_maxima(mag: np.ndarray, gr: np.ndarray, gc: np.ndarray) -> np.ndarray:
    """Pixels whose magnitude is maximal along the quantized gradient direction.

    The comparison carries a tiny relative tolerance so that the two pixels
    straddling a symmetric step both survive instead of one winning by a
    floating-point ulp.
    """
    theta = np.mod(np.arctan2(gr, gc), np.pi)
    sector = (np.floor((theta + np.pi / 8) / (np.pi / 4)).astype(int)) % 4
    bumped = mag * (1.0 + 1e-9)
    keep = np.zeros(mag.shape, dtype=bool)
    for s, (fwd, bwd) in enumerate(_SECTOR_OFFSETS):
        sel = sector == s
        ok = (bumped >= _shift(mag, *fwd)) & (bumped >= _shift(mag, *bwd))
        keep |= sel & ok
    return keep


def canny_edges(img: GrayImage, low: float, high: float, sigma: float = 1.0) -> BinaryMask:
    """Edge detection: Gaussian blur, Sobel gradients, non-maximum suppression
    along the gradient direction, then hysteresis thresholding.

    Thresholds apply to the gradient magnitude of the intensity image scaled
    to [0, 1], so the same values work for 8- and 16-bit inputs.
    """
    if not (0 <= low <= high):
        raise InputContractError(f"thresholds must satisfy 0 <= low <= high, got {low}, {high}")
    mag, gr, gc = _gradient(img, sigma)
    ridge = _local_maxima(mag, gr, gc) & (mag > 0)
    weak = ridge & (mag >= low)
    strong = ridge & (mag >= high)
    if not strong.any():
        return BinaryMask(np.zeros(mag.shape, dtype=bool))
    labels, _ = ndi.label(weak, structure=np.ones((3, 3), dtype=int))
    keep = np.unique(labels[strong])
    return BinaryMask(np.isin(labels, keep) & weak)
