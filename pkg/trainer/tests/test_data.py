import math

import numpy as np
import pytest

from wormline.raster import BinaryMask, load_mask

from wormtrainer.config import TrainConfig, fold_of_well
from wormtrainer.data import mask_to_worm, prepare_dataset, split_folds


def test_fold_assignment():
    assert fold_of_well("A01") == "A"
    assert fold_of_well("B24") == "A"
    assert fold_of_well("C01") == "B"
    assert fold_of_well("E04") == "B"
    with pytest.raises(ValueError):
        fold_of_well("F01")
    with pytest.raises(ValueError):
        TrainConfig(fold="C")


def test_prepare_builds_targets_and_weights(raw_dataset):
    raw, scenes = raw_dataset
    pairs = prepare_dataset(raw, sigma_skeleton=2.0, sigma_endpoint=3.0)
    assert [p.well for p in pairs] == ["A01", "B03", "C01", "D02"]
    for pair in pairs:
        assert pair.n_objects == 2
        assert pair.skel_target.any() and pair.ep_target.any()
        # weight maps are 1 on targets and follow exp(-d^2 / 2 sigma^2)
        assert np.all(pair.w_skel[pair.skel_target] == 1.0)
        d = 2.0
        off_target = np.isclose(pair.w_skel, math.exp(-(d * d) / (2 * 4.0)), atol=1e-9)
        assert off_target.any()


def test_single_worm_mask_has_two_endpoints(raw_dataset):
    raw, scenes = raw_dataset
    mask_file = sorted((raw / "masks").glob("A01_*.png"))[0]
    worm = mask_to_worm(load_mask(mask_file))
    assert worm is not None
    assert worm.endpoints[0] != worm.endpoints[1]
    assert len(worm.path) >= 20


def test_well_with_only_empty_masks_skipped(raw_dataset, tmp_path, capsys):
    import shutil

    raw, _ = raw_dataset
    clone = tmp_path / "clone"
    shutil.copytree(raw, clone)
    # blank out every mask of one well; its image stays in place
    from wormline.raster import save_mask

    for f in (clone / "masks").glob("B03_*.png"):
        save_mask(BinaryMask(np.zeros((96, 96), dtype=bool)), f)
    pairs = prepare_dataset(clone, 2.0, 3.0)
    assert [p.well for p in pairs] == ["A01", "C01", "D02"]
    assert "B03" in capsys.readouterr().err


def test_missing_directories_listed(tmp_path):
    with pytest.raises(FileNotFoundError) as err:
        prepare_dataset(tmp_path, 2.0, 3.0)
    assert "images" in str(err.value)


def test_orphan_wells_rejected(raw_dataset, tmp_path):
    raw, _ = raw_dataset
    import shutil

    clone = tmp_path / "clone"
    shutil.copytree(raw, clone)
    for f in (clone / "masks").glob("D02_*.png"):
        f.unlink()
    with pytest.raises(FileNotFoundError) as err:
        prepare_dataset(clone, 2.0, 3.0)
    assert "D02" in str(err.value)


def test_split_folds(raw_dataset):
    raw, _ = raw_dataset
    pairs = prepare_dataset(raw, 2.0, 3.0)
    folds = split_folds(pairs)
    assert [p.well for p in folds["A"]] == ["A01", "B03"]
    assert [p.well for p in folds["B"]] == ["C01", "D02"]
