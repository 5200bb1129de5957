import numpy as np
import pytest
import scipy.ndimage as ndi

from wormline.errors import InputContractError
from wormline.raster import ProbMap
from wormline.skelgeo import (
    Skeleton,
    binarize_and_thin,
    classify,
    extract_endpoint_detections,
    extract_segments,
)


def make_skeleton(pixels, shape=(32, 32)):
    return Skeleton(frozenset(pixels), shape)


def prob_from_pixels(pixels, shape=(32, 32), value=1.0):
    data = np.zeros(shape)
    for r, c in pixels:
        data[r, c] = value
    return ProbMap(data)


def component_count(mask: np.ndarray) -> int:
    _, n = ndi.label(mask, structure=np.ones((3, 3), dtype=int))
    return int(n)


# --- thinning ---------------------------------------------------------------


def test_thin_line_is_identity():
    line = [(5, c) for c in range(4, 20)]
    skel = binarize_and_thin(prob_from_pixels(line), 0.5)
    assert skel.pixels == frozenset(line)


def test_thin_wide_bar_gives_single_row_line():
    data = np.zeros((32, 32))
    data[10:15, 4:28] = 1.0
    skel = binarize_and_thin(ProbMap(data), 0.5)
    mask = skel.to_mask()
    assert component_count(mask) == 1
    rows = {r for r, _ in skel.pixels}
    assert len(rows) == 1
    cols = sorted(c for _, c in skel.pixels)
    assert cols[-1] - cols[0] >= 18  # spans most of the bar


def test_thin_preserves_component_count():
    rng = np.random.default_rng(0)
    for _ in range(10):
        data = np.zeros((48, 48))
        for _ in range(3):
            r, c = rng.integers(5, 35, size=2)
            data[r : r + rng.integers(2, 8), c : c + rng.integers(2, 8)] = 1.0
        before = component_count(data > 0.5)
        skel = binarize_and_thin(ProbMap(data), 0.5)
        if skel.pixels:
            assert component_count(skel.to_mask()) == before


def test_thin_idempotent():
    rng = np.random.default_rng(1)
    for _ in range(8):
        data = (ndi.gaussian_filter(rng.random((40, 40)), 2.5) > 0.5).astype(float)
        skel = binarize_and_thin(ProbMap(data), 0.5)
        again = binarize_and_thin(prob_from_pixels(skel.pixels, (40, 40)), 0.5)
        assert again.pixels == skel.pixels


def test_threshold_validated():
    with pytest.raises(InputContractError):
        binarize_and_thin(prob_from_pixels([(1, 1)]), 0.0)


def test_skeleton_rejects_thick_blob():
    with pytest.raises(InputContractError):
        make_skeleton([(1, 1), (1, 2), (2, 1), (2, 2), (3, 1)])


def test_skeleton_rejects_out_of_bounds():
    with pytest.raises(InputContractError):
        make_skeleton([(40, 1)], shape=(32, 32))


# --- classification ---------------------------------------------------------


def test_classify_straight_line():
    line = [(5, c) for c in range(4, 14)]
    cls = classify(make_skeleton(line))
    assert cls.endpoints_geo == {(5, 4), (5, 13)}
    assert not cls.intersections_geo
    assert len(cls.line_points) == 8


def test_classify_perfect_x():
    arms = set()
    for k in range(-10, 11):
        arms.add((15 + k, 15 + k))
        arms.add((15 + k, 15 - k))
    cls = classify(make_skeleton(arms))
    assert len(cls.endpoints_geo) == 4
    assert len(cls.junctions) == 1
    assert (15, 15) in cls.junctions[0].members


def diamond_ring(center=(15, 15), radius=6):
    # pure-diagonal closed ring; square corners would not be 1-px thin
    cr, cc = center
    return [
        (cr + dr, cc + dc)
        for dr in range(-radius, radius + 1)
        for dc in range(-radius, radius + 1)
        if abs(dr) + abs(dc) == radius
    ]


def test_classify_ring_has_no_endpoints_or_intersections():
    cls = classify(make_skeleton(diamond_ring()))
    assert not cls.endpoints_geo
    assert not cls.intersections_geo


def test_classify_partition_property():
    rng = np.random.default_rng(9)
    for _ in range(10):
        data = (ndi.gaussian_filter(rng.random((40, 40)), 2.0) > 0.52).astype(float)
        skel = binarize_and_thin(ProbMap(data), 0.5)
        cls = classify(skel)
        union = cls.endpoints_geo | cls.intersections_geo | cls.line_points
        assert union == skel.pixels
        total = len(cls.endpoints_geo) + len(cls.intersections_geo) + len(cls.line_points)
        assert total == len(skel.pixels)
        for p in cls.endpoints_geo:
            n8 = sum(
                1
                for dr in (-1, 0, 1)
                for dc in (-1, 0, 1)
                if (dr, dc) != (0, 0) and (p[0] + dr, p[1] + dc) in skel.pixels
            )
            assert n8 == 1


def test_classify_endpoint_parity_on_open_curves():
    # junction-free, non-cyclic component has exactly 2 endpoints
    rng = np.random.default_rng(3)
    for _ in range(10):
        r, c = rng.integers(5, 25, size=2)
        length = rng.integers(5, 14)
        direction = rng.choice([(0, 1), (1, 0), (1, 1)])
        pix = [(r + k * direction[0], c + k * direction[1]) for k in range(length)]
        cls = classify(make_skeleton(pix, shape=(48, 48)))
        assert len(cls.endpoints_geo) == 2
        assert not cls.intersections_geo


def test_non_thin_input_raises_at_construction():
    # a square corner triple has a removable pixel
    with pytest.raises(InputContractError):
        make_skeleton([(1, 1), (1, 2), (2, 1)])
    with pytest.raises(InputContractError):
        make_skeleton([(1, 1), (1, 2), (2, 2), (2, 1)])


# --- segments ---------------------------------------------------------------


def test_segments_straight_line_identity():
    line = [(5, c) for c in range(4, 14)]
    skel = make_skeleton(line)
    segs = extract_segments(skel, classify(skel))
    assert len(segs) == 1
    assert list(segs[0].path) == line or list(segs[0].path) == line[::-1]


def test_segments_x_shape_four_arms():
    arms = set()
    for k in range(-10, 11):
        arms.add((15 + k, 15 + k))
        arms.add((15 + k, 15 - k))
    skel = make_skeleton(arms)
    cls = classify(skel)
    segs = extract_segments(skel, cls)
    assert len(segs) == 4
    union = set()
    for s in segs:
        union |= set(s.path)
    junction_pixels = set()
    for j in cls.junctions:
        junction_pixels |= j.members
    assert union | junction_pixels == skel.pixels


def test_segments_reassembly_property():
    rng = np.random.default_rng(17)
    for _ in range(10):
        data = (ndi.gaussian_filter(rng.random((40, 40)), 2.0) > 0.52).astype(float)
        skel = binarize_and_thin(ProbMap(data), 0.5)
        cls = classify(skel)
        segs = extract_segments(skel, cls)
        union = set()
        for s in segs:
            for a, b in zip(s.path, s.path[1:]):
                assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1
            assert not (union & set(s.path))  # segments are disjoint
            union |= set(s.path)
        junction_pixels = set()
        for j in cls.junctions:
            junction_pixels |= j.members
        leftovers = skel.pixels - union - junction_pixels
        # only isolated single pixels may be dropped
        for p in leftovers:
            assert all(n not in (skel.pixels - junction_pixels) for n in neighbors(p))


def neighbors(p):
    r, c = p
    return [
        (r + dr, c + dc)
        for dr in (-1, 0, 1)
        for dc in (-1, 0, 1)
        if (dr, dc) != (0, 0)
    ]


def test_closed_ring_single_segment():
    ring = diamond_ring()
    skel = make_skeleton(ring)
    segs = extract_segments(skel, classify(skel))
    assert len(segs) == 1
    assert set(segs[0].path) == set(ring)


# --- endpoint detections ----------------------------------------------------


def gaussian_bump(shape, center, sigma=2.0, amp=1.0):
    rr, cc = np.mgrid[0 : shape[0], 0 : shape[1]]
    return amp * np.exp(-((rr - center[0]) ** 2 + (cc - center[1]) ** 2) / (2 * sigma**2))


def test_endpoint_single_bump():
    pm = ProbMap(np.clip(gaussian_bump((32, 32), (10, 10)), 0, 1))
    dets = extract_endpoint_detections(pm, 0.5)
    assert [(d.row, d.col) for d in dets] == [(10, 10)]


def test_endpoint_empty_map():
    assert extract_endpoint_detections(ProbMap(np.zeros((16, 16))), 0.5) == []


def test_endpoint_component_count_matches_flood_fill():
    rng = np.random.default_rng(23)
    for _ in range(10):
        data = np.zeros((48, 48))
        for _ in range(4):
            r, c = rng.integers(6, 42, size=2)
            data += gaussian_bump((48, 48), (r, c), sigma=rng.uniform(1.0, 2.5))
        pm = ProbMap(np.clip(data, 0, 1))
        dets = extract_endpoint_detections(pm, 0.5)
        # flood-fill oracle on the thresholded map
        _, n = ndi.label(pm.data >= 0.5, structure=np.ones((3, 3), dtype=int))
        assert len(dets) == n


def test_endpoint_detections_sorted_by_confidence():
    data = np.zeros((40, 40))
    data += gaussian_bump((40, 40), (10, 10), amp=0.9)
    data += gaussian_bump((40, 40), (30, 30), amp=0.7)
    dets = extract_endpoint_detections(ProbMap(np.clip(data, 0, 1)), 0.5)
    assert len(dets) == 2
    assert dets[0].confidence >= dets[1].confidence
    assert (dets[0].row, dets[0].col) == (10, 10)


def test_skeleton_and_segment_json_round_trip():
    import json

    from wormline.skelgeo import (
        segment_from_json,
        segment_to_json,
        skeleton_from_json,
        skeleton_to_json,
    )

    line = [(5, c) for c in range(4, 14)]
    skel = make_skeleton(line)
    doc = json.loads(json.dumps(skeleton_to_json(skel)))
    assert doc["pixels"] == sorted([list(p) for p in line])
    assert skeleton_from_json(doc) == skel

    seg = extract_segments(skel, classify(skel))[0]
    payload = json.loads(json.dumps(segment_to_json(seg)))
    assert segment_from_json(payload) == seg
