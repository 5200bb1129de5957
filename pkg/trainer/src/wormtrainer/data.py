"""Dataset preparation: per-worm ground-truth masks become skeleton and
endpoint targets plus distance-slack weight maps.

Expected raw layout (convert TIFFs to 8/16-bit grayscale PNG first):

    raw_dir/
      images/<WELL>*.png        one grayscale image per well (A01 .. E04)
      masks/<WELL>_*.png        one binary mask per individual worm
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from wormline.lossmap import render_targets, weight_map
from wormline.raster import BinaryMask, ProbMap, load_image, load_mask
from wormline.skelgeo import binarize_and_thin, segments_from_pixels
from wormline.untangle import WormSkeleton

from .config import fold_of_well

_WELL_RE = re.compile(r"([A-Ea-e]\d{2})")


@dataclass(frozen=True)
class TrainingPair:
    """One image with its rendered targets and weight maps."""

    well: str
    image: np.ndarray  # float in [0, 1]
    skel_target: np.ndarray  # bool
    ep_target: np.ndarray  # bool
    w_skel: np.ndarray  # float in [0, 1]
    w_ep: np.ndarray
    n_objects: int


def well_of(path: Path) -> str | None:
    m = _WELL_RE.search(path.stem)
    return m.group(1).upper() if m else None


def mask_to_worm(mask: BinaryMask) -> WormSkeleton | None:
    """Morphological skeleton of one worm mask as an ordered path."""
    skel = binarize_and_thin(ProbMap(mask.data.astype(np.float64)), 0.5)
    segments = segments_from_pixels(set(skel.pixels))
    if not segments:
        return None
    # one worm: take the longest traced path
    path = max(segments, key=len).path
    return WormSkeleton(path=path, endpoints=(path[0], path[-1]))


def prepare_dataset(
    raw_dir: str | Path,
    sigma_skeleton: float,
    sigma_endpoint: float,
) -> list[TrainingPair]:
    """Scan the raw layout and build one TrainingPair per non-empty well.

    Raises FileNotFoundError listing whatever is absent; wells whose masks
    are all empty are skipped with a warning.
    """
    raw = Path(raw_dir)
    image_dir = raw / "images"
    mask_dir = raw / "masks"
    missing = [str(d) for d in (image_dir, mask_dir) if not d.is_dir()]
    if missing:
        raise FileNotFoundError(f"missing data directories: {missing}")

    images: dict[str, Path] = {}
    for f in sorted(image_dir.glob("*.png")) + sorted(image_dir.glob("*.pgm")):
        well = well_of(f)
        if well:
            images[well] = f
    masks: dict[str, list[Path]] = {}
    for f in sorted(mask_dir.glob("*.png")) + sorted(mask_dir.glob("*.pgm")):
        well = well_of(f)
        if well:
            masks.setdefault(well, []).append(f)

    if not images:
        raise FileNotFoundError(f"no well images found under {image_dir}")
    orphans = sorted(set(images) ^ set(masks))
    if orphans:
        raise FileNotFoundError(f"wells without image/mask counterpart: {orphans}")

    pairs = []
    for well in sorted(images):
        img = load_image(images[well])
        worms = []
        for mask_file in masks[well]:
            mask = load_mask(mask_file)
            if mask.shape != img.shape:
                raise FileNotFoundError(
                    f"{mask_file}: mask shape {mask.shape} != image shape {img.shape}"
                )
            if not mask.data.any():
                continue
            worm = mask_to_worm(mask)
            if worm is not None:
                worms.append(worm)
        if not worms:
            print(f"warning: well {well} has no usable worms, skipped", file=sys.stderr)
            continue
        skel_t, ep_t = render_targets(worms, img.shape)
        pairs.append(
            TrainingPair(
                well=well,
                image=img.to_float(),
                skel_target=skel_t.data,
                ep_target=ep_t.data,
                w_skel=weight_map(skel_t, sigma_skeleton).data,
                w_ep=weight_map(ep_t, sigma_endpoint).data,
                n_objects=len(worms),
            )
        )
    return pairs


def split_folds(pairs: list[TrainingPair]) -> dict[str, list[TrainingPair]]:
    out: dict[str, list[TrainingPair]] = {"A": [], "B": []}
    for pair in pairs:
        out[fold_of_well(pair.well)].append(pair)
    return out
