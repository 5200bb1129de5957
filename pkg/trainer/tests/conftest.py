import pytest

from wormline.maskrecon import stamp_discs
from wormline.raster import BinaryMask, save_image, save_mask
from wormline.synth import SceneSpec, generate


def write_well(raw_dir, well, seed, shape=(96, 96)):
    """One BBBC010-style well built from a synthetic scene."""
    scene = generate(
        SceneSpec(seed=seed, n_worms=2, shape=shape, length_range=(30.0, 45.0))
    )
    (raw_dir / "images").mkdir(parents=True, exist_ok=True)
    (raw_dir / "masks").mkdir(parents=True, exist_ok=True)
    save_image(scene.image, raw_dir / "images" / f"{well}_image.png")
    for i, worm in enumerate(scene.worms):
        mask = stamp_discs(
            worm.skeleton.path, [worm.half_width] * len(worm.skeleton.path), shape
        )
        save_mask(BinaryMask(mask), raw_dir / "masks" / f"{well}_{i + 1:02d}.png")
    return scene


@pytest.fixture(scope="session")
def raw_dataset(tmp_path_factory):
    raw = tmp_path_factory.mktemp("bbbc_like")
    scenes = {
        "A01": write_well(raw, "A01", seed=101),
        "B03": write_well(raw, "B03", seed=202),
        "C01": write_well(raw, "C01", seed=303),
        "D02": write_well(raw, "D02", seed=404),
    }
    return raw, scenes
