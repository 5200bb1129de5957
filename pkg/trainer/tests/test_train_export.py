import json
import subprocess
import sys

import numpy as np
import pytest
import torch

from wormline.lossmap import LossParams, SlackConfig
from wormline.raster import load_prob_map

from wormtrainer.config import TrainConfig
from wormtrainer.data import prepare_dataset
from wormtrainer.train import batch_loss, predict, train
from wormtrainer.unet import TwoBranchUNet, pad_to_multiple


def tiny_config(**overrides):
    base = dict(
        slack=SlackConfig(2.0, 3.0),
        loss=LossParams(2.0, 4.0),
        fold="A",
        augment_contrast=False,
        augment_rotations=False,
        epochs=2,
        learning_rate=1e-3,
        batch_size=1,
        base_channels=8,
        seed=0,
        device="cpu",
    )
    base.update(overrides)
    return TrainConfig(**base)


def test_unet_shapes_and_probability_range():
    model = TwoBranchUNet(base=8)
    x = torch.rand(1, 1, 40, 56)
    with torch.no_grad():
        padded, (h, w) = pad_to_multiple(x)
        skel, ep = model(padded)
    assert skel.shape[-2:] == padded.shape[-2:]
    assert ep.shape == skel.shape
    assert skel[:, :h, :w].shape == (1, 40, 56)
    assert float(skel.min()) >= 0.0 and float(skel.max()) <= 1.0


def test_loss_decreases_when_overfitting_one_image(raw_dataset):
    raw, _ = raw_dataset
    cfg = tiny_config()
    torch.manual_seed(0)
    pairs = prepare_dataset(raw, 2.0, 3.0)
    sample = {
        "image": pairs[0].image.astype(np.float32),
        "skel": pairs[0].skel_target,
        "ep": pairs[0].ep_target,
        "w_skel": pairs[0].w_skel.astype(np.float32),
        "w_ep": pairs[0].w_ep.astype(np.float32),
        "n": pairs[0].n_objects,
    }
    model = TwoBranchUNet(base=8)
    optimizer = torch.optim.Adam(model.parameters(), lr=2e-3)
    losses = []
    for _ in range(25):
        optimizer.zero_grad()
        loss = batch_loss(model, [sample], cfg)
        loss.backward()
        optimizer.step()
        losses.append(loss.item())
    assert losses[-1] < losses[0] * 0.7, losses[::6]


def test_train_exports_holdout_maps(raw_dataset, tmp_path):
    raw, _ = raw_dataset
    out = train(raw, tmp_path / "run", tiny_config(epochs=1))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["trained_fold"] == "A"
    assert manifest["exported_fold"] == "B"
    wells = [e["well"] for e in manifest["images"]]
    assert wells == ["C01", "D02"]
    for well in wells:
        for name in ("prob_skel.png", "prob_ep.png"):
            pm = load_prob_map(out / well / name)
            assert pm.data.min() >= 0.0 and pm.data.max() <= 1.0
    assert (out / "model.pt").exists()


def test_exported_maps_round_trip_and_feed_wormline_cli(raw_dataset, tmp_path):
    raw, _ = raw_dataset
    out = train(raw, tmp_path / "run", tiny_config(epochs=1, fold="B"))
    manifest = json.loads((out / "manifest.json").read_text())
    well = manifest["images"][0]["well"]

    # bit-exact contract: saving quantizes to v/65535, reloading is exact
    pairs = prepare_dataset(raw, 2.0, 3.0)
    pair = next(p for p in pairs if p.well == well)
    model = TwoBranchUNet(base=8)
    model.load_state_dict(torch.load(out / "model.pt", weights_only=True))
    prob_skel, _ = predict(model, pair.image)
    reloaded = load_prob_map(out / well / "prob_skel.png")
    assert np.max(np.abs(reloaded.data - prob_skel.data)) <= 0.5 / 65535

    # the primary CLI accepts the exported maps end to end
    result = subprocess.run(
        [
            sys.executable, "-m", "wormline.cli", "untangle",
            "--prob-skel", str(out / well / "prob_skel.png"),
            "--prob-ep", str(out / well / "prob_ep.png"),
            "-o", str(tmp_path / "det.json"),
        ],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stderr
    doc = json.loads((tmp_path / "det.json").read_text())
    assert "worms" in doc


def test_divergence_aborts_with_diagnostics(raw_dataset, tmp_path):
    raw, _ = raw_dataset
    with pytest.raises(RuntimeError, match="diverged|no training images"):
        # an absurd learning rate reliably blows the loss up to nan/inf
        train(raw, tmp_path / "boom", tiny_config(epochs=3, learning_rate=1e12))


def test_plain_bce_control_collapses_to_background(raw_dataset):
    # control run: training the same architecture with an unweighted
    # cross-entropy on the heavily unbalanced labels drives the skeleton
    # branch toward predicting background everywhere, which is exactly the
    # failure mode the balanced focal loss exists to prevent
    raw, _ = raw_dataset
    pairs = prepare_dataset(raw, 2.0, 3.0)
    image = torch.from_numpy(pairs[0].image.astype(np.float32))[None, None]
    target = torch.from_numpy(pairs[0].skel_target.copy())[None].float()

    torch.manual_seed(0)
    model = TwoBranchUNet(base=8)
    optimizer = torch.optim.Adam(model.parameters(), lr=2e-3)
    padded, (h, w) = pad_to_multiple(image)
    for _ in range(30):
        optimizer.zero_grad()
        pred = model(padded)[0][:, :h, :w].clamp(1e-7, 1 - 1e-7)
        bce = -(target * pred.log() + (1 - target) * (1 - pred).log()).mean()
        bce.backward()
        optimizer.step()
    with torch.no_grad():
        pred = model(padded)[0][:, :h, :w]
    positive_fraction = float((pred > 0.5).float().mean())
    assert positive_fraction < 0.002  # all-background collapse

    # the focal-loss run from the same init keeps positive predictions alive
    torch.manual_seed(0)
    model2 = TwoBranchUNet(base=8)
    cfg = tiny_config()
    sample = {
        "image": pairs[0].image.astype(np.float32),
        "skel": pairs[0].skel_target,
        "ep": pairs[0].ep_target,
        "w_skel": pairs[0].w_skel.astype(np.float32),
        "w_ep": pairs[0].w_ep.astype(np.float32),
        "n": pairs[0].n_objects,
    }
    optimizer2 = torch.optim.Adam(model2.parameters(), lr=2e-3)
    for _ in range(30):
        optimizer2.zero_grad()
        loss = batch_loss(model2, [sample], cfg)
        loss.backward()
        optimizer2.step()
    with torch.no_grad():
        pred2 = model2(padded)[0][:, :h, :w]
    skel_sel = torch.from_numpy(pairs[0].skel_target.copy())
    on_skel_focal = float(pred2[0][skel_sel].mean())
    on_skel_bce = float(pred[0][skel_sel].mean())
    assert on_skel_focal > 2 * on_skel_bce
