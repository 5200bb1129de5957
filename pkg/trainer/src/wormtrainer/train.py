"""Training loop and held-out export.

The model trains on one fold and exports skeleton/endpoint probability maps
for every image of the other fold as 16-bit PNGs (wormline's bit-exact
contract), plus a manifest describing the run.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np
import torch

from wormline.lossmap import weight_map
from wormline.raster import BinaryMask, ProbMap, save_prob_map

from .augment import augment
from .config import TrainConfig
from .data import TrainingPair, prepare_dataset, split_folds
from .loss import focal_loss
from .unet import TwoBranchUNet, pad_to_multiple


def _expand(pairs: list[TrainingPair], cfg: TrainConfig) -> list[dict]:
    """Augment and attach slack weight maps recomputed from rotated targets."""
    samples = []
    for pair in pairs:
        for aug in augment(
            pair.image,
            pair.skel_target,
            pair.ep_target,
            contrast=cfg.augment_contrast,
            rotations=cfg.augment_rotations,
        ):
            if not aug.skel_target.any() or not aug.ep_target.any():
                continue
            samples.append(
                {
                    "image": aug.image.astype(np.float32),
                    "skel": aug.skel_target,
                    "ep": aug.ep_target,
                    "w_skel": weight_map(
                        BinaryMask(aug.skel_target), cfg.slack.sigma_skeleton
                    ).data.astype(np.float32),
                    "w_ep": weight_map(
                        BinaryMask(aug.ep_target), cfg.slack.sigma_endpoint
                    ).data.astype(np.float32),
                    "n": pair.n_objects,
                }
            )
    return samples


def _batches(samples: list[dict], batch_size: int, rng: np.random.Generator):
    order = rng.permutation(len(samples))
    for start in range(0, len(order), batch_size):
        chunk = [samples[i] for i in order[start : start + batch_size]]
        shapes = {s["image"].shape for s in chunk}
        if len(shapes) > 1:  # mixed sizes train one by one
            for s in chunk:
                yield [s]
        else:
            yield chunk


def _to_tensors(chunk: list[dict], device: str):
    image = torch.from_numpy(np.stack([s["image"] for s in chunk])[:, None]).to(device)
    skel = torch.from_numpy(np.stack([s["skel"] for s in chunk])).to(device)
    ep = torch.from_numpy(np.stack([s["ep"] for s in chunk])).to(device)
    w_skel = torch.from_numpy(np.stack([s["w_skel"] for s in chunk])).to(device)
    w_ep = torch.from_numpy(np.stack([s["w_ep"] for s in chunk])).to(device)
    n = torch.tensor([s["n"] for s in chunk], dtype=torch.float32, device=device)
    return image, skel, ep, w_skel, w_ep, n


def batch_loss(model: TwoBranchUNet, chunk: list[dict], cfg: TrainConfig) -> torch.Tensor:
    """Sum of both branch losses on one batch (the training objective)."""
    image, skel, ep, w_skel, w_ep, n = _to_tensors(chunk, cfg.device)
    padded, (h, w) = pad_to_multiple(image)
    pred_skel, pred_ep = model(padded)
    pred_skel = pred_skel[:, :h, :w]
    pred_ep = pred_ep[:, :h, :w]
    loss_skel = focal_loss(pred_skel, skel, w_skel, cfg.loss.gamma, cfg.loss.beta, n)
    loss_ep = focal_loss(pred_ep, ep, w_ep, cfg.loss.gamma, cfg.loss.beta, n)
    return loss_skel + loss_ep


def predict(model: TwoBranchUNet, image: np.ndarray, device: str = "cpu"):
    """Full-image probability maps for one grayscale image in [0, 1]."""
    model.eval()
    with torch.no_grad():
        x = torch.from_numpy(image.astype(np.float32))[None, None].to(device)
        padded, (h, w) = pad_to_multiple(x)
        pred_skel, pred_ep = model(padded)
    return (
        ProbMap(pred_skel[0, :h, :w].cpu().double().clamp(0, 1).numpy()),
        ProbMap(pred_ep[0, :h, :w].cpu().double().clamp(0, 1).numpy()),
    )


def export_fold(
    model: TwoBranchUNet, pairs: list[TrainingPair], out_dir: Path, cfg: TrainConfig
) -> list[dict]:
    entries = []
    for pair in sorted(pairs, key=lambda p: p.well):
        well_dir = out_dir / pair.well
        well_dir.mkdir(parents=True, exist_ok=True)
        prob_skel, prob_ep = predict(model, pair.image, cfg.device)
        save_prob_map(prob_skel, well_dir / "prob_skel.png")
        save_prob_map(prob_ep, well_dir / "prob_ep.png")
        entries.append({"well": pair.well, "dir": pair.well})
    return entries


def train(raw_dir: str | Path, out_dir: str | Path, cfg: TrainConfig) -> Path:
    """Train on cfg.fold, export probability maps for the held-out fold.

    Returns the output directory. Aborts with RuntimeError if the loss goes
    non-finite.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    pairs = prepare_dataset(raw_dir, cfg.slack.sigma_skeleton, cfg.slack.sigma_endpoint)
    folds = split_folds(pairs)
    train_pairs = folds[cfg.fold]
    held_out = folds["B" if cfg.fold == "A" else "A"]
    if not train_pairs:
        raise RuntimeError(f"fold {cfg.fold} has no training images")
    samples = _expand(train_pairs, cfg)
    print(
        f"training on fold {cfg.fold}: {len(train_pairs)} images -> {len(samples)} samples",
        file=sys.stderr,
    )

    model = TwoBranchUNet(base=cfg.base_channels).to(cfg.device)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    for epoch in range(cfg.epochs):
        model.train()
        total, count = 0.0, 0
        for chunk in _batches(samples, cfg.batch_size, rng):
            optimizer.zero_grad()
            loss = batch_loss(model, chunk, cfg)
            if not math.isfinite(loss.item()):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch + 1} "
                    f"(lr={cfg.learning_rate}, batch={cfg.batch_size})"
                )
            loss.backward()
            optimizer.step()
            total += loss.item()
            count += 1
        print(f"epoch {epoch + 1}/{cfg.epochs}: loss {total / max(count, 1):.6f}", file=sys.stderr)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = export_fold(model, held_out, out, cfg)
    manifest = {
        "trained_fold": cfg.fold,
        "exported_fold": "B" if cfg.fold == "A" else "A",
        "images": entries,
        "sigma_skeleton": cfg.slack.sigma_skeleton,
        "sigma_endpoint": cfg.slack.sigma_endpoint,
        "gamma": cfg.loss.gamma,
        "beta": cfg.loss.beta,
        "epochs": cfg.epochs,
        "learning_rate": cfg.learning_rate,
        "base_channels": cfg.base_channels,
        "seed": cfg.seed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1))
    torch.save(model.state_dict(), out / "model.pt")
    return out
