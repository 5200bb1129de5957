"""Command-line front end: probability maps in, untangled skeletons and
reconstructed masks out, plus evaluation, weight-map export, and synthetic
data tooling.

Exit codes: 0 on success, 2 when an input violates its contract (unreadable
file, shape mismatch, out-of-bounds path), 1 for any other failure. Progress
goes to standard error; machine-readable output goes to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, fields, replace
from multiprocessing import Pool
from pathlib import Path

import numpy as np

from . import detections as detjson
from .errors import InputContractError, WormlineError
from .lossmap import LossParams, weight_map
from .maskrecon import estimate_radii, fill_mask
from .metrics import evaluate, report_table
from .raster import (
    BinaryMask,
    canny_edges,
    distance_transform,
    load_image,
    load_labels,
    load_mask,
    load_prob_map,
    save_labels,
    save_mask,
)
from .skelgeo import binarize_and_thin, extract_endpoint_detections
from .synth import SceneSpec, corpus, generate, write_scene
from .untangle import UntangleConfig, untangle


@dataclass(frozen=True)
class PipelineConfig:
    """Flat configuration; precedence is defaults < config file < flags."""

    skeleton_threshold: float = 0.5
    endpoint_threshold: float = 0.5
    match_radius: float = 5.0
    direction_window: int = 5
    min_segment_len: int = 3
    max_pair_angle_deg: float = 90.0
    canny_low: float = 0.04
    canny_high: float = 0.10
    canny_sigma: float = 1.0
    sigma_skeleton: float = 2.0
    sigma_endpoint: float = 3.0
    gamma: float = 2.0
    beta: float = 4.0
    match_range: float = 3.0
    range_metric: str = "euclidean"

    def untangle_config(self) -> UntangleConfig:
        return UntangleConfig(
            match_radius=self.match_radius,
            direction_window=self.direction_window,
            min_segment_len=self.min_segment_len,
            max_pair_angle=math.radians(self.max_pair_angle_deg),
        )


_CONFIG_KEYS = {f.name for f in fields(PipelineConfig)}


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputContractError(f"{args.config}: unreadable config ({exc})") from exc
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise InputContractError(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **doc)
    overrides = {
        k: v
        for k, v in vars(args).items()
        if k in _CONFIG_KEYS and v is not None
    }
    return replace(cfg, **overrides)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (defaults < file < flags)")
    p.add_argument("--skeleton-threshold", dest="skeleton_threshold", type=float)
    p.add_argument("--endpoint-threshold", dest="endpoint_threshold", type=float)
    p.add_argument("--match-radius", dest="match_radius", type=float)
    p.add_argument("--direction-window", dest="direction_window", type=int)
    p.add_argument("--min-segment-len", dest="min_segment_len", type=int)
    p.add_argument("--max-pair-angle-deg", dest="max_pair_angle_deg", type=float)
    p.add_argument("--canny-low", dest="canny_low", type=float)
    p.add_argument("--canny-high", dest="canny_high", type=float)
    p.add_argument("--canny-sigma", dest="canny_sigma", type=float)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


# ---------------------------------------------------------------------------
# untangle


def _run_untangle(prob_skel_path, prob_ep_path, cfg: PipelineConfig):
    prob_skel = load_prob_map(prob_skel_path)
    prob_ep = load_prob_map(prob_ep_path)
    if prob_skel.shape != prob_ep.shape:
        raise InputContractError(
            f"probability maps disagree on shape: {prob_skel.shape} vs {prob_ep.shape}"
        )
    skel = binarize_and_thin(prob_skel, cfg.skeleton_threshold)
    endpoints = extract_endpoint_detections(prob_ep, cfg.endpoint_threshold)
    return untangle(skel, endpoints, cfg.untangle_config())


def cmd_untangle(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    worms = _run_untangle(args.prob_skel, args.prob_ep, cfg)
    detjson.save_detections(Path(args.prob_skel).name, worms, args.output)
    _log(f"untangled {len(worms)} worms -> {args.output}")
    return 0


# ---------------------------------------------------------------------------
# reconstruct


def _run_reconstruct(image_path, worms, cfg: PipelineConfig, out_dir: Path, overlay: bool):
    image = load_image(image_path)
    out_dir.mkdir(parents=True, exist_ok=True)
    labels = np.zeros(image.shape, dtype=np.uint16)
    masks = []
    if worms:
        edges = canny_edges(image, cfg.canny_low, cfg.canny_high, cfg.canny_sigma)
        if not edges.data.any():
            raise InputContractError("no edges detected; cannot estimate widths")
        dt = distance_transform(edges)
        for i, worm in enumerate(worms):
            profile = estimate_radii(worm, edges, edge_distance=dt)
            wm = fill_mask(worm, profile, image.shape, source=i + 1)
            masks.append(wm)
            save_mask(wm.mask, out_dir / f"mask_{i + 1:03d}.png")
            labels[wm.mask.data] = i + 1
    save_labels(labels, out_dir / "labels.png")
    if overlay:
        _write_overlay(image, worms, masks, out_dir / "overlay.png")
    return masks


def _write_overlay(image, worms, masks, path: Path) -> None:
    from PIL import Image

    base = (image.to_float() * 255).astype(np.uint8)
    rgb = np.stack([base, base, base], axis=-1)
    for wm in masks:
        sel = wm.mask.data
        rgb[sel, 1] = np.minimum(255, rgb[sel, 1].astype(int) + 70).astype(np.uint8)
    for worm in worms:
        for r, c in worm.path:
            rgb[r, c] = (255, 40, 40)
        for r, c in worm.endpoints:
            rgb[max(0, r - 1) : r + 2, max(0, c - 1) : c + 2] = (40, 90, 255)
    Image.fromarray(rgb, mode="RGB").save(path)


def cmd_reconstruct(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    worms = detjson.load_detections(args.detections)
    masks = _run_reconstruct(args.image, worms, cfg, Path(args.output), args.overlay)
    _log(f"reconstructed {len(masks)} masks -> {args.output}")
    return 0


# ---------------------------------------------------------------------------
# eval


def _masks_from_labels(path) -> list[BinaryMask]:
    labels = load_labels(path)
    return [BinaryMask(labels == v) for v in np.unique(labels) if v != 0]


def _masks_from_dir(path) -> list[BinaryMask]:
    files = sorted(Path(path).glob("mask_*.png"))
    if not files:
        raise InputContractError(f"{path}: no mask_*.png files found")
    return [load_mask(f) for f in files]


def cmd_eval(args: argparse.Namespace) -> int:
    thresholds = tuple(float(t) for t in args.thresholds.split(","))
    if args.mode == "skeleton":
        preds = [list(w.path) for w in detjson.load_detections(args.pred)]
        gts = [list(w.path) for w in detjson.load_detections(args.gt)]
        report = evaluate(
            preds, gts, mode="skeleton", thresholds=thresholds,
            range_=args.range, metric=args.range_metric,
        )
    else:
        if args.pred_masks_dir:
            preds = _masks_from_dir(args.pred_masks_dir)
        elif args.pred_labels:
            preds = _masks_from_labels(args.pred_labels)
        else:
            raise InputContractError("mask mode needs --pred-masks-dir or --pred-labels")
        if args.gt_masks_dir:
            gts = _masks_from_dir(args.gt_masks_dir)
        elif args.gt_labels:
            gts = _masks_from_labels(args.gt_labels)
        else:
            raise InputContractError("mask mode needs --gt-masks-dir or --gt-labels")
        report = evaluate(preds, gts, mode="mask", thresholds=thresholds)
    sys.stdout.write(report_table(report))
    if args.output:
        Path(args.output).write_text(json.dumps(report.to_dict(), indent=1))
        _log(f"report -> {args.output}")
    return 0


# ---------------------------------------------------------------------------
# weightmap


def cmd_weightmap(args: argparse.Namespace) -> int:
    from .raster import ProbMap, save_prob_map

    gt = load_mask(args.gt)
    w = weight_map(gt, args.sigma)
    save_prob_map(ProbMap(w.data), args.output)
    params = LossParams(gamma=args.gamma, beta=args.beta)
    sidecar = {
        "sigma": args.sigma,
        "gamma": params.gamma,
        "beta": params.beta,
        "scale": 65535,
    }
    Path(args.output).with_suffix(".json").write_text(json.dumps(sidecar, indent=1))
    _log(f"weight map -> {args.output}")
    return 0


# ---------------------------------------------------------------------------
# synth


def _spec_from_args(args: argparse.Namespace, seed: int) -> SceneSpec:
    return SceneSpec(
        seed=seed,
        n_worms=args.n_worms,
        length_range=(args.length_min, args.length_max),
        half_width_range=(args.half_width_min, args.half_width_max),
        shape=(args.height, args.width),
        overlap=args.overlap,
        crossings=args.crossings,
        clutter_density=args.clutter_density,
    )


def cmd_synth_scene(args: argparse.Namespace) -> int:
    scene = generate(_spec_from_args(args, args.seed))
    write_scene(scene, args.output)
    _log(f"scene seed={args.seed} -> {args.output}")
    return 0


def cmd_synth_corpus(args: argparse.Namespace) -> int:
    corpus(_spec_from_args(args, args.seed), args.count, args.output)
    _log(f"{args.count} scenes -> {args.output}")
    return 0


# ---------------------------------------------------------------------------
# pipeline (untangle + reconstruct), single scene or corpus batch


def _pipeline_one(task) -> str:
    scene_dir, out_dir, cfg = task
    scene_dir = Path(scene_dir)
    out_dir = Path(out_dir)
    worms = _run_untangle(scene_dir / "prob_skel.png", scene_dir / "prob_ep.png", cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    detjson.save_detections("image.png", worms, out_dir / "detections.json")
    _run_reconstruct(scene_dir / "image.png", worms, cfg, out_dir, overlay=False)
    return scene_dir.name


def cmd_pipeline(args: argparse.Namespace) -> int:
    cfg = _load_config(args)
    if args.corpus:
        root = Path(args.corpus)
        scene_dirs = sorted(
            d for d in root.iterdir() if d.is_dir() and (d / "prob_skel.png").exists()
        )
        if not scene_dirs:
            raise InputContractError(f"{root}: no scene directories with prob_skel.png")
        out_root = Path(args.output)
        tasks = [(str(d), str(out_root / d.name), cfg) for d in scene_dirs]
        if args.jobs > 1:
            with Pool(args.jobs) as pool:
                for name in pool.imap(_pipeline_one, tasks):
                    _log(f"done {name}")
        else:
            for task in tasks:
                _log(f"done {_pipeline_one(task)}")
        return 0
    for required in ("prob_skel", "prob_ep", "image"):
        if getattr(args, required) is None:
            raise InputContractError(
                "pipeline needs --corpus or all of --prob-skel/--prob-ep/--image"
            )
    worms = _run_untangle(args.prob_skel, args.prob_ep, cfg)
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    detjson.save_detections(Path(args.image).name, worms, out_dir / "detections.json")
    _run_reconstruct(args.image, worms, cfg, out_dir, overlay=args.overlay)
    _log(f"pipeline -> {args.output}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wormline",
        description="Untangle worm skeletons from probability maps and rebuild masks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("untangle", help="probability maps -> detections JSON")
    p.add_argument("--prob-skel", required=True)
    p.add_argument("--prob-ep", required=True)
    p.add_argument("-o", "--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_untangle)

    p = sub.add_parser("reconstruct", help="image + detections -> instance masks")
    p.add_argument("--image", required=True)
    p.add_argument("--detections", required=True)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--overlay", action="store_true", help="write overlay.png")
    _add_config_flags(p)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("eval", help="score detections against ground truth")
    p.add_argument("--pred", help="predicted detections JSON (skeleton mode)")
    p.add_argument("--gt", help="ground-truth detections JSON (skeleton mode)")
    p.add_argument("--mode", choices=("skeleton", "mask"), default="skeleton")
    p.add_argument("--pred-masks-dir")
    p.add_argument("--gt-masks-dir")
    p.add_argument("--pred-labels")
    p.add_argument("--gt-labels")
    p.add_argument("--thresholds", default="0.5,0.6,0.7,0.8,0.9")
    p.add_argument("--range", type=float, default=3.0, help="skeleton matching range")
    p.add_argument("--range-metric", choices=("euclidean", "chebyshev"), default="euclidean")
    p.add_argument("-o", "--output", help="also write the report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("weightmap", help="ground-truth mask -> 16-bit weight map")
    p.add_argument("--gt", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=4.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_weightmap)

    p = sub.add_parser("synth", help="generate synthetic scenes")
    synth_sub = p.add_subparsers(dest="synth_command", required=True)
    for name, func in (("scene", cmd_synth_scene), ("corpus", cmd_synth_corpus)):
        q = synth_sub.add_parser(name)
        q.add_argument("--seed", type=int, required=True)
        q.add_argument("-o", "--output", required=True)
        q.add_argument("--n-worms", type=int, default=5)
        q.add_argument("--length-min", type=float, default=60.0)
        q.add_argument("--length-max", type=float, default=110.0)
        q.add_argument("--half-width-min", type=float, default=3.0)
        q.add_argument("--half-width-max", type=float, default=4.0)
        q.add_argument("--width", type=int, default=256)
        q.add_argument("--height", type=int, default=256)
        q.add_argument("--overlap", choices=("none", "allow", "force"), default="none")
        q.add_argument("--crossings", type=int, default=0)
        q.add_argument("--clutter-density", type=float, default=0.0)
        if name == "corpus":
            q.add_argument("--count", type=int, required=True)
        q.set_defaults(func=func)

    p = sub.add_parser("pipeline", help="untangle + reconstruct, single scene or corpus")
    p.add_argument("--corpus", help="directory of scene subdirectories")
    p.add_argument("--prob-skel")
    p.add_argument("--prob-ep")
    p.add_argument("--image")
    p.add_argument("--overlay", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except WormlineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure, stable exit code for CI
        print(f"internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
