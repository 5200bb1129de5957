"""Deterministic synthetic worm scenes: images, ground truth, and degraded
pseudo probability maps that stand in for model predictions.

Every scene is a pure function of its seed. All randomness flows from one
splitmix-style 64-bit generator whose exact behavior is pinned by test
vectors, so a manifest of seeds reproduces a corpus bit for bit.
"""

from __future__ import annotations

import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi

from ._grid import chebyshev, digital_line, neighbors8, _round_half_away
from .errors import InputContractError
from .lossmap import render_targets
from .maskrecon import stamp_discs
from .raster import (
    BinaryMask,
    GrayImage,
    ProbMap,
    save_image,
    save_labels,
    save_mask,
    save_prob_map,
)
from .detections import worms_from_json, worms_to_json
from .skelgeo import binarize_and_thin, classify, segments_from_pixels
from .untangle import WormSkeleton

__all__ = ["SplitMix64", "SceneSpec", "GeneratedWorm", "Scene", "generate", "corpus",
           "corpus_from_manifest", "write_scene", "worms_to_json", "worms_from_json"]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """Counter-based splitmix64; scalar and array draws share one stream."""

    def __init__(self, seed: int) -> None:
        self._seed = seed & _MASK64
        self._count = 0

    def _states(self, n: int) -> np.ndarray:
        idx = np.arange(self._count + 1, self._count + n + 1, dtype=np.uint64)
        self._count += n
        return (np.uint64(self._seed) + idx * np.uint64(_GOLDEN)) & np.uint64(_MASK64)

    @staticmethod
    def _mix(z: np.ndarray) -> np.ndarray:
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))

    def raw(self, n: int) -> np.ndarray:
        return self._mix(self._states(n))

    def next_u64(self) -> int:
        return int(self.raw(1)[0])

    def floats(self, n: int) -> np.ndarray:
        """Uniform samples in [0, 1) with 53-bit resolution."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def random(self) -> float:
        return float(self.floats(1)[0])

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integer(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi); modulo reduction (spans are tiny vs 2^64)."""
        if hi <= lo:
            raise InputContractError("empty integer range")
        return lo + self.next_u64() % (hi - lo)

    def normals(self, n: int) -> np.ndarray:
        u1 = (self.raw(n) >> np.uint64(11)).astype(np.float64)
        u2 = self.floats(n)
        u1 = (u1 + 1.0) * 2.0**-53  # (0, 1]
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        return mu + sigma * float(self.normals(1)[0])


# ---------------------------------------------------------------------------
# Scene parameters and contents.


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of one synthetic scene; fully determines it with the seed."""

    seed: int
    n_worms: int = 5
    length_range: tuple[float, float] = (60.0, 110.0)
    half_width_range: tuple[float, float] = (3.0, 4.0)
    curvature_max: float = 0.055  # radians per pixel of arc length
    shape: tuple[int, int] = (256, 256)
    overlap: str = "none"  # none | allow | force
    crossings: int = 0  # crossing pairs under the force policy
    crossing_angle_deg: tuple[float, float] = (30.0, 90.0)
    clutter_density: float = 0.0  # blobs per 10^4 pixels

    def __post_init__(self) -> None:
        if self.n_worms < 0 or self.curvature_max < 0 or self.clutter_density < 0:
            raise InputContractError("counts, curvature, and density must be >= 0")
        for lo, hi in (self.length_range, self.half_width_range, self.crossing_angle_deg):
            if lo > hi or lo <= 0:
                raise InputContractError(f"invalid range ({lo}, {hi})")
        if self.overlap not in ("none", "allow", "force"):
            raise InputContractError(f"unknown overlap policy {self.overlap!r}")
        if self.overlap == "force" and 2 * self.crossings > self.n_worms:
            raise InputContractError("not enough worms for the requested crossings")


@dataclass(frozen=True)
class GeneratedWorm:
    skeleton: WormSkeleton
    half_width: float

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        return stamp_discs(self.skeleton.path, [self.half_width] * len(self.skeleton.path), shape)


@dataclass(frozen=True)
class Scene:
    spec: SceneSpec
    image: GrayImage
    worms: tuple[GeneratedWorm, ...]
    skeleton_gt: BinaryMask
    endpoints_gt: BinaryMask
    labels: np.ndarray  # uint16 instance labels, later worm wins overlaps
    prob_skel: ProbMap
    prob_ep: ProbMap


# ---------------------------------------------------------------------------
# Centerline construction: bounded-turn control walk + Catmull-Rom spline.

_CTRL_SPACING = 8.0
_SAMPLE_STEP = 0.4
_TIP_SEPARATION = 12.0
_TIP_BODY_CLEARANCE = 6.0
_BG_TONE = 200.0
_BODY_TONE = 70.0
_IMAGE_NOISE = 2.5
_PROB_NOISE = 0.02
_MAX_ATTEMPTS = 1000


def _draw_half_width(rng: SplitMix64, spec: SceneSpec) -> float:
    """Half-widths land on integers: the intensity step then sits exactly
    between two pixel rings and edge-based width recovery is unbiased."""
    return float(round(rng.uniform(*spec.half_width_range)))


def _control_walk(
    rng: SplitMix64,
    start: tuple[float, float],
    heading: float,
    length: float,
    curvature_max: float,
) -> list[tuple[float, float]]:
    n_steps = max(2, int(round(length / _CTRL_SPACING)))
    pts = [start]
    theta = heading
    for _ in range(n_steps):
        theta += rng.uniform(-curvature_max * _CTRL_SPACING, curvature_max * _CTRL_SPACING)
        prev = pts[-1]
        pts.append(
            (prev[0] + _CTRL_SPACING * math.sin(theta), prev[1] + _CTRL_SPACING * math.cos(theta))
        )
    return pts


def _catmull_rom(ctrl: list[tuple[float, float]]) -> list[tuple[float, float]]:
    p = np.asarray(ctrl, dtype=np.float64)
    n = len(p)
    tangents = np.empty_like(p)
    tangents[0] = p[1] - p[0]
    tangents[-1] = p[-1] - p[-2]
    if n > 2:
        tangents[1:-1] = 0.5 * (p[2:] - p[:-2])
    samples: list[tuple[float, float]] = []
    for k in range(n - 1):
        span = float(np.hypot(*(p[k + 1] - p[k])))
        steps = max(2, int(math.ceil(span / _SAMPLE_STEP)))
        ts = np.linspace(0.0, 1.0, steps, endpoint=(k == n - 2))
        for t in ts:
            h00 = 2 * t**3 - 3 * t**2 + 1
            h10 = t**3 - 2 * t**2 + t
            h01 = -2 * t**3 + 3 * t**2
            h11 = t**3 - t**2
            q = h00 * p[k] + h10 * tangents[k] + h01 * p[k + 1] + h11 * tangents[k + 1]
            samples.append((float(q[0]), float(q[1])))
    return samples


def _rasterize(samples: list[tuple[float, float]]) -> list[tuple[int, int]]:
    path: list[tuple[int, int]] = []
    for q in samples:
        px = (_round_half_away(q[0]), _round_half_away(q[1]))
        if path and px == path[-1]:
            continue
        if path and chebyshev(path[-1], px) > 1:
            path.extend(digital_line(path[-1], px)[1:-1])
        path.append(px)
    return _sparsify(path)


def _sparsify(path: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Drop staircase middles so the path is a minimal 8-connected curve.

    Without this the centerline is denser than a thinned skeleton, which
    depresses one-to-one pixel-matching scores for no geometric reason.
    """
    while True:
        if len(path) < 3:
            return path
        out = [path[0]]
        i = 1
        dropped = False
        while i < len(path):
            if i + 1 < len(path) and chebyshev(out[-1], path[i + 1]) == 1:
                dropped = True
                i += 1
                continue
            out.append(path[i])
            i += 1
        if not dropped:
            return out
        path = out


def _self_clear(path: list[tuple[int, int]], clearance: float) -> bool:
    """No two distant path pixels come closer than `clearance`."""
    pts = np.asarray(path, dtype=np.float64)
    gap = max(8, int(2 * clearance))
    for i in range(len(pts)):
        ahead = pts[i + gap :]
        if len(ahead) == 0:
            continue
        d2 = ((ahead - pts[i]) ** 2).sum(axis=1)
        if d2.min() < clearance * clearance:
            return False
    return True


def _in_bounds(path: list[tuple[int, int]], shape: tuple[int, int], margin: int) -> bool:
    return all(
        margin <= r < shape[0] - margin and margin <= c < shape[1] - margin for r, c in path
    )


def _heading_at(path: list[tuple[int, int]], idx: int) -> float:
    a = path[max(0, idx - 4)]
    b = path[min(len(path) - 1, idx + 4)]
    return math.atan2(b[0] - a[0], b[1] - a[1])


def _tips_clear(
    path: list[tuple[int, int]],
    others: list[GeneratedWorm],
    other_masks: list[np.ndarray],
) -> bool:
    tips = [path[0], path[-1]]
    for other in others:
        for tip in tips:
            for otip in (other.skeleton.path[0], other.skeleton.path[-1]):
                if (tip[0] - otip[0]) ** 2 + (tip[1] - otip[1]) ** 2 < _TIP_SEPARATION**2:
                    return False
    for mask in other_masks:
        dil = ndi.binary_dilation(mask, iterations=int(_TIP_BODY_CLEARANCE))
        for tip in tips:
            if dil[tip]:
                return False
    return True


def _make_worm(
    rng: SplitMix64, spec: SceneSpec, margin: int
) -> tuple[list[tuple[int, int]], float] | None:
    h, w = spec.shape
    length = rng.uniform(*spec.length_range)
    half_width = _draw_half_width(rng, spec)
    start = (rng.uniform(margin, h - margin), rng.uniform(margin, w - margin))
    heading = rng.uniform(0.0, 2.0 * math.pi)
    ctrl = _control_walk(rng, start, heading, length, spec.curvature_max)
    path = _rasterize(_catmull_rom(ctrl))
    if len(path) < 8:
        return None
    if not _in_bounds(path, spec.shape, margin):
        return None
    if not _self_clear(path, 2 * half_width + 3):
        return None
    return path, half_width


def _make_crossing_partner(
    rng: SplitMix64, spec: SceneSpec, host: GeneratedWorm, margin: int
) -> tuple[list[tuple[int, int]], float] | None:
    host_path = list(host.skeleton.path)
    length = rng.uniform(*spec.length_range)
    half_width = _draw_half_width(rng, spec)
    idx = rng.integer(len(host_path) // 3, 2 * len(host_path) // 3)
    p = host_path[idx]
    angle = math.radians(rng.uniform(*spec.crossing_angle_deg))
    if rng.random() < 0.5:
        angle = -angle
    theta = _heading_at(host_path, idx) + angle
    start = (float(p[0]), float(p[1]))
    fwd = _control_walk(rng, start, theta, length / 2, spec.curvature_max)
    bwd = _control_walk(rng, start, theta + math.pi, length / 2, spec.curvature_max)
    ctrl = bwd[::-1][:-1] + fwd
    path = _rasterize(_catmull_rom(ctrl))
    if len(path) < 8:
        return None
    if not _in_bounds(path, spec.shape, margin):
        return None
    if not _self_clear(path, 2 * half_width + 3):
        return None
    # the pair must cross exactly once, transversally: centerline contact is
    # confined to a small disc around the crossing point, never a graze
    host_px = set(host_path)
    contact = [
        q
        for q in path
        if q in host_px
        or any((q[0] + dr, q[1] + dc) in host_px for dr in (-1, 0, 1) for dc in (-1, 0, 1))
    ]
    if not contact:
        return None
    if any(chebyshev(q, p) > 4 for q in contact):
        return None
    host_mask = host.mask(spec.shape)
    new_mask = stamp_discs(path, [half_width] * len(path), spec.shape)
    inter = host_mask & new_mask
    _, n_regions = ndi.label(inter, structure=np.ones((3, 3), dtype=int))
    if n_regions != 1:
        return None
    if not _crossing_resolvable(host_path, path, spec.shape):
        return None
    # tips must stay clear of the partner's body and vice versa
    dil = ndi.binary_dilation(host_mask, iterations=int(_TIP_BODY_CLEARANCE))
    if dil[path[0]] or dil[path[-1]]:
        return None
    dil_new = ndi.binary_dilation(new_mask, iterations=int(_TIP_BODY_CLEARANCE))
    if dil_new[host_path[0]] or dil_new[host_path[-1]]:
        return None
    return path, half_width


def _gauss_kernel_center(sigma: float, truncate: float = 4.0) -> float:
    """Center weight of the normalized discrete Gaussian kernel.

    Equals the blurred peak of an ideal straight 1-px line; its square is the
    peak of an isolated pixel.
    """
    radius = int(truncate * sigma + 0.5)
    weights = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    return float(weights[radius] / weights.sum())


def _crossing_resolvable(
    host_path: list[tuple[int, int]],
    path: list[tuple[int, int]],
    shape: tuple[int, int],
) -> bool:
    """True when the thinned pair forms one junction with four clean arms."""
    union = np.zeros(shape, dtype=bool)
    for q in host_path:
        union[q] = True
    for q in path:
        union[q] = True
    skel = binarize_and_thin(ProbMap(union.astype(np.float64)), 0.5)
    cls = classify(skel)
    if len(cls.junctions) != 1:
        return False
    removed = set(cls.junctions[0].members)
    for m in cls.junctions[0].members:
        removed |= {n for n in neighbors8(m) if n in skel.pixels}
    arms = [s for s in segments_from_pixels(set(skel.pixels) - removed) if len(s) >= 3]
    return len(arms) == 4


def _make_clutter(
    rng: SplitMix64, spec: SceneSpec, forbidden: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Irregular blob mask and per-pixel tones, kept off the worm bodies."""
    h, w = spec.shape
    count = int(round(spec.clutter_density * h * w / 1e4))
    blob_mask = np.zeros(spec.shape, dtype=bool)
    tones = np.zeros(spec.shape, dtype=np.float64)
    keep_out = ndi.binary_dilation(forbidden, iterations=2) if forbidden.any() else forbidden
    rr, cc = np.mgrid[0:h, 0:w]
    for _ in range(count):
        for _attempt in range(20):
            cr = rng.uniform(8, h - 8)
            ccen = rng.uniform(8, w - 8)
            blob = np.zeros(spec.shape, dtype=bool)
            for _e in range(rng.integer(2, 5)):
                ar = rng.uniform(2.0, 6.0)
                ac = rng.uniform(2.0, 6.0)
                rot = rng.uniform(0, math.pi)
                offr = cr + rng.uniform(-3, 3)
                offc = ccen + rng.uniform(-3, 3)
                dr = rr - offr
                dc = cc - offc
                u = dr * math.cos(rot) - dc * math.sin(rot)
                v = dr * math.sin(rot) + dc * math.cos(rot)
                blob |= (u / ar) ** 2 + (v / ac) ** 2 <= 1.0
            if not (blob & keep_out).any():
                blob_mask |= blob
                tones[blob] = rng.uniform(100.0, 150.0)
                break
    return blob_mask, tones


def generate(spec: SceneSpec) -> Scene:
    """Build one scene deterministically from its spec."""
    rng = SplitMix64(spec.seed)
    h, w = spec.shape
    margin = int(math.ceil(spec.half_width_range[1])) + 3

    worms: list[GeneratedWorm] = []
    masks: list[np.ndarray] = []
    crossing_pairs = spec.crossings if spec.overlap == "force" else 0

    def admissible(path, mask, ignore_mask=None) -> bool:
        if spec.overlap == "allow":
            return True
        others = [m for m in masks if m is not ignore_mask]
        if others:
            union = np.logical_or.reduce(others)
            if (ndi.binary_dilation(union, iterations=2) & mask).any():
                return False
        return _tips_clear(path, worms, others)

    def as_worm(path, half_width) -> GeneratedWorm:
        return GeneratedWorm(
            skeleton=WormSkeleton(path=tuple(path), endpoints=(path[0], path[-1])),
            half_width=half_width,
        )

    def place_free() -> None:
        for _ in range(_MAX_ATTEMPTS):
            made = _make_worm(rng, spec, margin)
            if made is None:
                continue
            path, half_width = made
            mask = stamp_discs(path, [half_width] * len(path), spec.shape)
            if not admissible(path, mask):
                continue
            worms.append(as_worm(path, half_width))
            masks.append(mask)
            return
        raise InputContractError(
            f"infeasible packing: could not place worm {len(worms) + 1} of {spec.n_worms}"
        )

    def place_crossing_pair() -> None:
        # hosts near the border rarely admit a partner, so retry the pair
        for _ in range(_MAX_ATTEMPTS):
            made = _make_worm(rng, spec, margin)
            if made is None:
                continue
            host_path, host_hw = made
            host_mask = stamp_discs(host_path, [host_hw] * len(host_path), spec.shape)
            if not admissible(host_path, host_mask):
                continue
            host = as_worm(host_path, host_hw)
            for _k in range(30):
                partner = _make_crossing_partner(rng, spec, host, margin)
                if partner is None:
                    continue
                p_path, p_hw = partner
                p_mask = stamp_discs(p_path, [p_hw] * len(p_path), spec.shape)
                # the host is not in `masks` yet, so this permits their overlap
                if not admissible(p_path, p_mask):
                    continue
                tip_gap2 = _TIP_SEPARATION**2
                if any(
                    (a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 < tip_gap2
                    for a in (p_path[0], p_path[-1])
                    for b in (host_path[0], host_path[-1])
                ):
                    continue
                worms.extend([host, as_worm(p_path, p_hw)])
                masks.extend([host_mask, p_mask])
                return
        raise InputContractError(
            f"infeasible packing: could not place crossing pair {len(worms) // 2 + 1}"
        )

    for _pair in range(crossing_pairs):
        place_crossing_pair()
    for _ in range(spec.n_worms - 2 * crossing_pairs):
        place_free()

    skeleton_gt, endpoints_gt = render_targets(
        [wm.skeleton for wm in worms], spec.shape
    )

    labels = np.zeros(spec.shape, dtype=np.uint16)
    for i, mask in enumerate(masks):
        labels[mask] = i + 1

    canvas = np.full(spec.shape, _BG_TONE)
    for mask in masks:
        tone = _BODY_TONE + rng.uniform(-12.0, 12.0)
        canvas[mask] = np.minimum(canvas[mask], tone)
    if spec.clutter_density > 0:
        blob_mask, tones = _make_clutter(
            rng, spec, np.logical_or.reduce(masks) if masks else np.zeros(spec.shape, bool)
        )
        canvas[blob_mask] = tones[blob_mask]
    canvas = canvas + rng.normals(h * w).reshape(spec.shape) * _IMAGE_NOISE
    image = GrayImage(np.clip(canvas, 0, 255).astype(np.uint8))

    def pseudo(gt: BinaryMask, peak: float) -> ProbMap:
        # scale by the blur response of an ideal isolated target so body
        # pixels sit near 1.0; overlapping responses saturate via the clip
        g = ndi.gaussian_filter(gt.data.astype(np.float64), 1.0, mode="constant")
        g = g / peak + rng.normals(h * w).reshape(spec.shape) * _PROB_NOISE
        return ProbMap(np.clip(g, 0.0, 1.0))

    line_peak = _gauss_kernel_center(1.0)
    return Scene(
        spec=spec,
        image=image,
        worms=tuple(worms),
        skeleton_gt=skeleton_gt,
        endpoints_gt=endpoints_gt,
        labels=labels,
        prob_skel=pseudo(skeleton_gt, line_peak),
        prob_ep=pseudo(endpoints_gt, line_peak * line_peak),
    )


# ---------------------------------------------------------------------------
# On-disk layout and corpus generation.


def write_scene(scene: Scene, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_image(scene.image, out / "image.png")
    save_mask(scene.skeleton_gt, out / "skeleton_gt.png")
    save_mask(scene.endpoints_gt, out / "endpoints_gt.png")
    save_labels(scene.labels, out / "labels_gt.png")
    save_prob_map(scene.prob_skel, out / "prob_skel.png")
    save_prob_map(scene.prob_ep, out / "prob_ep.png")
    doc = worms_to_json("image.png", scene.worms)
    (out / "worms_gt.json").write_text(json.dumps(doc, indent=1))
    meta = {"spec": _spec_to_dict(scene.spec), "half_widths": [w.half_width for w in scene.worms]}
    (out / "scene_meta.json").write_text(json.dumps(meta, indent=1))


def _spec_to_dict(spec: SceneSpec) -> dict:
    d = asdict(spec)
    d["length_range"] = list(spec.length_range)
    d["half_width_range"] = list(spec.half_width_range)
    d["crossing_angle_deg"] = list(spec.crossing_angle_deg)
    d["shape"] = list(spec.shape)
    return d


def spec_from_dict(d: dict) -> SceneSpec:
    kwargs = dict(d)
    for key in ("length_range", "half_width_range", "crossing_angle_deg", "shape"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    return SceneSpec(**kwargs)


def corpus(template: SceneSpec, count: int, out_dir: str | Path) -> dict:
    """Write `count` scenes with per-scene seeds derived from the template.

    The manifest lists every seed, so the corpus can be regenerated exactly.
    """
    if count < 0:
        raise InputContractError("count must be >= 0")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeder = SplitMix64(template.seed)
    seeds = [int(s) for s in (seeder.raw(count) >> np.uint64(12))]
    manifest = {
        "template": _spec_to_dict(template),
        "scenes": [
            {"dir": f"scene_{i:03d}", "seed": seed} for i, seed in enumerate(seeds)
        ],
    }
    if len(set(seeds)) != len(seeds):
        warnings.warn("duplicate seeds in corpus; the affected scenes are identical")
    for entry in manifest["scenes"]:
        spec = spec_from_dict({**_spec_to_dict(template), "seed": entry["seed"]})
        write_scene(generate(spec), out / entry["dir"])
        print(f"wrote {entry['dir']}", file=sys.stderr)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest


def corpus_from_manifest(manifest_path: str | Path, out_dir: str | Path) -> None:
    """Regenerate a corpus byte-for-byte from its manifest."""
    doc = json.loads(Path(manifest_path).read_text())
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    template = doc["template"]
    seeds = [entry["seed"] for entry in doc["scenes"]]
    if len(set(seeds)) != len(seeds):
        warnings.warn("duplicate seeds in manifest; the affected scenes are identical")
    for entry in doc["scenes"]:
        spec = spec_from_dict({**template, "seed": entry["seed"]})
        write_scene(generate(spec), out / entry["dir"])
