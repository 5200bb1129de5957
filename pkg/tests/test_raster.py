import math

import numpy as np
import pytest

from wormline.errors import FormatError, InputContractError
from wormline.raster import (
    BinaryMask,
    GrayImage,
    ProbMap,
    canny_edges,
    distance_transform,
    load_image,
    load_prob_map,
    save_image,
    save_prob_map,
)


def brute_force_edt(mask: np.ndarray) -> np.ndarray:
    """O(n^2) oracle: scan every true pixel for every query pixel."""
    true_px = np.argwhere(mask)
    out = np.empty(mask.shape, dtype=np.float64)
    for r in range(mask.shape[0]):
        for c in range(mask.shape[1]):
            d2 = (true_px[:, 0] - r) ** 2 + (true_px[:, 1] - c) ** 2
            out[r, c] = math.sqrt(d2.min())
    return out


# --- containers -------------------------------------------------------------


def test_grayimage_rejects_bad_dtype_and_shape():
    with pytest.raises(InputContractError):
        GrayImage(np.zeros((4, 4), dtype=np.float32))
    with pytest.raises(InputContractError):
        GrayImage(np.zeros((0, 4), dtype=np.uint8))
    with pytest.raises(InputContractError):
        GrayImage(np.zeros(16, dtype=np.uint8))


def test_probmap_range_checked():
    ProbMap(np.full((2, 2), 0.5))
    with pytest.raises(InputContractError):
        ProbMap(np.full((2, 2), 1.5))
    with pytest.raises(InputContractError):
        ProbMap(np.full((2, 2), np.nan))


def test_containers_immutable():
    img = GrayImage(np.zeros((3, 3), dtype=np.uint8))
    with pytest.raises(ValueError):
        img.data[0, 0] = 1


# --- file I/O ---------------------------------------------------------------


def test_png_round_trip_2x2(tmp_path):
    img = GrayImage(np.array([[0, 255], [128, 64]], dtype=np.uint8))
    p = tmp_path / "t.png"
    save_image(img, p)
    back = load_image(p)
    assert back.data.dtype == np.uint8
    assert np.array_equal(back.data, img.data)


@pytest.mark.parametrize("dtype", [np.uint8, np.uint16])
@pytest.mark.parametrize("suffix", [".png", ".pgm"])
def test_round_trip_random_64x64(tmp_path, dtype, suffix):
    rng = np.random.default_rng(7)
    peak = 255 if dtype == np.uint8 else 65535
    img = GrayImage(rng.integers(0, peak + 1, size=(64, 64)).astype(dtype))
    p = tmp_path / f"t{suffix}"
    save_image(img, p)
    back = load_image(p)
    assert back.data.dtype == dtype
    assert np.array_equal(back.data, img.data)


def test_16bit_values_preserved(tmp_path):
    img = GrayImage(np.array([[0, 65535], [300, 40000]], dtype=np.uint16))
    p = tmp_path / "t16.png"
    save_image(img, p)
    assert np.array_equal(load_image(p).data, img.data)


def test_rgb_png_rejected(tmp_path):
    from PIL import Image

    p = tmp_path / "rgb.png"
    Image.new("RGB", (4, 4), (10, 20, 30)).save(p)
    with pytest.raises(FormatError):
        load_image(p)


def test_unreadable_file_rejected(tmp_path):
    p = tmp_path / "junk.png"
    p.write_bytes(b"this is not an image")
    with pytest.raises(FormatError):
        load_image(p)


def test_prob_map_contract(tmp_path):
    rng = np.random.default_rng(3)
    values = rng.integers(0, 65536, size=(16, 16)).astype(np.uint16)
    pmap = ProbMap(values / 65535.0)
    p = tmp_path / "p.png"
    save_prob_map(pmap, p)
    back = load_prob_map(p)
    # bit-exact: v/65535 survives the round trip
    assert np.array_equal(back.data, values / 65535.0)


def test_prob_map_requires_16bit(tmp_path):
    p = tmp_path / "p8.png"
    save_image(GrayImage(np.zeros((4, 4), dtype=np.uint8)), p)
    with pytest.raises(FormatError):
        load_prob_map(p)


# --- distance transform -----------------------------------------------------


def test_edt_single_corner_pixel():
    mask = np.zeros((3, 3), dtype=bool)
    mask[0, 0] = True
    d = distance_transform(BinaryMask(mask))
    assert d[0, 0] == 0.0
    assert d[2, 2] == pytest.approx(2 * math.sqrt(2.0), abs=1e-12)


def test_edt_all_true_is_zero():
    d = distance_transform(BinaryMask(np.ones((5, 7), dtype=bool)))
    assert np.all(d == 0.0)


def test_edt_all_false_rejected():
    with pytest.raises(InputContractError):
        distance_transform(BinaryMask(np.zeros((4, 4), dtype=bool)))


def test_edt_matches_brute_force_on_random_masks():
    rng = np.random.default_rng(11)
    for _ in range(12):
        mask = rng.random((32, 32)) < 0.08
        if not mask.any():
            mask[rng.integers(32), rng.integers(32)] = True
        d = distance_transform(BinaryMask(mask))
        assert np.max(np.abs(d - brute_force_edt(mask))) <= 1e-6


def test_edt_zero_on_true_pixels():
    rng = np.random.default_rng(5)
    mask = rng.random((20, 20)) < 0.2
    mask[0, 0] = True
    d = distance_transform(BinaryMask(mask))
    assert np.all(d[mask] == 0.0)


# --- canny ------------------------------------------------------------------


def test_canny_constant_image_empty():
    img = GrayImage(np.full((32, 32), 77, dtype=np.uint8))
    edges = canny_edges(img, 0.01, 0.05)
    assert edges.count() == 0


def test_canny_threshold_order_checked():
    img = GrayImage(np.zeros((8, 8), dtype=np.uint8))
    with pytest.raises(InputContractError):
        canny_edges(img, 0.5, 0.1)


def test_canny_vertical_step_edge_localized():
    c = 16
    data = np.zeros((32, 32), dtype=np.uint8)
    data[:, c:] = 200
    edges = canny_edges(GrayImage(data), 0.02, 0.05, sigma=1.0)
    cols = np.unique(np.argwhere(edges.data)[:, 1])
    assert len(cols) > 0
    assert set(cols) <= {c - 1, c, c + 1}


def test_canny_disc_edge_near_ideal_circle():
    h = w = 64
    rr, cc = np.mgrid[0:h, 0:w]
    radius = 20.0
    dist = np.hypot(rr - 32.0, cc - 32.0)
    data = np.where(dist <= radius, 60, 200).astype(np.uint8)
    edges = canny_edges(GrayImage(data), 0.02, 0.06, sigma=1.0)
    pts = np.argwhere(edges.data)
    assert len(pts) > 40
    radial = np.hypot(pts[:, 0] - 32.0, pts[:, 1] - 32.0)
    # every edge pixel near the ideal circle
    assert np.max(np.abs(radial - radius)) <= 1.0
    # every circle point near an edge pixel
    for ang in np.linspace(0.0, 2 * math.pi, 90, endpoint=False):
        pr, pc = 32.0 + radius * math.sin(ang), 32.0 + radius * math.cos(ang)
        d = np.hypot(pts[:, 0] - pr, pts[:, 1] - pc)
        assert d.min() <= 1.0


def test_canny_edges_are_local_gradient_maxima():
    from wormline.raster import _gradient, _local_maxima

    rng = np.random.default_rng(2)
    data = (ndi_smooth(rng.random((48, 48))) * 255).astype(np.uint8)
    img = GrayImage(data)
    edges = canny_edges(img, 0.005, 0.02, sigma=1.0)
    mag, gr, gc = _gradient(img, 1.0)
    ridge = _local_maxima(mag, gr, gc)
    assert np.all(ridge[edges.data])


def ndi_smooth(a):
    import scipy.ndimage as ndi

    return ndi.gaussian_filter(a, 3.0)
