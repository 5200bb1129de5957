#!/usr/bin/env python3
"""Two-fold cross-validation on a BBBC010-style dataset, end to end.

Trains fold A and fold B models (skeleton slack sigma 2, endpoint slack
sigma 3), exports probability maps for each held-out well, runs the wormline
untangle + reconstruct pipeline on them, and scores masks against the
per-worm ground truth at the usual F thresholds. Expect several hours on CPU.

Layout expected under --raw (convert the published TIFFs to PNG first):

    images/<WELL>*.png
    masks/<WELL>_*.png    one binary PNG per individual worm
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from wormline.lossmap import LossParams, SlackConfig
from wormline.metrics import combine_reports, evaluate, report_table
from wormline.raster import load_labels, load_mask, BinaryMask

from wormtrainer.config import TrainConfig, fold_of_well
from wormtrainer.data import well_of
from wormtrainer.train import train


def run_pipeline(maps_dir: Path, image_path: Path, out_dir: Path) -> None:
    subprocess.run(
        [
            "wormline", "pipeline",
            "--prob-skel", str(maps_dir / "prob_skel.png"),
            "--prob-ep", str(maps_dir / "prob_ep.png"),
            "--image", str(image_path),
            "-o", str(out_dir),
        ],
        check=True,
    )


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--raw", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--device", default="cpu")
    args = ap.parse_args()

    raw = Path(args.raw)
    out = Path(args.out)
    images = {
        w: f
        for f in sorted((raw / "images").glob("*.png"))
        if (w := well_of(f)) is not None
    }
    masks: dict[str, list[Path]] = {}
    for f in sorted((raw / "masks").glob("*.png")):
        well = well_of(f)
        if well:
            masks.setdefault(well, []).append(f)

    reports = []
    for fold in ("A", "B"):
        cfg = TrainConfig(
            slack=SlackConfig(2.0, 3.0),
            loss=LossParams(gamma=2.0, beta=4.0),
            fold=fold,
            epochs=args.epochs,
            device=args.device,
        )
        maps_root = train(raw, out / f"maps_trained_{fold}", cfg)
        manifest = json.loads((maps_root / "manifest.json").read_text())
        for entry in manifest["images"]:
            well = entry["well"]
            result_dir = out / "results" / well
            run_pipeline(maps_root / entry["dir"], images[well], result_dir)
            labels = load_labels(result_dir / "labels.png")
            pred = [BinaryMask(labels == v) for v in np.unique(labels) if v]
            gt = [load_mask(f) for f in masks[well]]
            gt = [g for g in gt if g.data.any()]
            reports.append(evaluate(pred, gt, mode="mask"))
            print(f"scored {well} (held out from fold {fold})", file=sys.stderr)

    combined = combine_reports(reports)
    sys.stdout.write(report_table(combined))
    (out / "report.json").write_text(json.dumps(combined.to_dict(), indent=1))
    i = combined.thresholds.index(0.8)
    print(
        f"\nmask precision/recall at F>=0.8: "
        f"{combined.precision(i) * 100:.2f} / {combined.recall(i) * 100:.2f}",
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
