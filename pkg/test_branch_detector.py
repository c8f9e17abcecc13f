import numpy as np
import pytest

from broncholoc.branch_detector import (BranchDetection, DetectorParams,
                                        LumenInstance, count_lumens,
                                        darkest_pixel_mask, detect_branch,
                                        intensity_threshold, label_components,
                                        render_overlay)
from broncholoc.errors import ImageError
from broncholoc.imaging import GrayImage
from broncholoc.synthgen import LumenSpec, render_frame
from conftest import disc

SIZE = 128
SLOTS = [(r, c) for r in (20, 64, 108) for c in (20, 64, 108)]
BIG_RADIUS = {1: 15, 2: 15, 3: 12, 4: 10}
SMALL_RADIUS = 5


def instance(area):
    return LumenInstance(label=1, area=area, bbox=(0, 0, 1, 1), first_index=0)


# ---------------------------------------------------------------------------
# darkest_pixel_mask
# ---------------------------------------------------------------------------

def test_constant_image_has_empty_mask():
    gray = GrayImage(np.full((10, 10), 77, dtype=np.uint8))
    assert not darkest_pixel_mask(gray, 10.0).any()


def test_nearest_rank_threshold_on_ramp():
    gray = GrayImage(np.arange(100, dtype=np.uint8).reshape(10, 10))
    assert intensity_threshold(gray, 10.0) == 9
    mask = darkest_pixel_mask(gray, 10.0)
    assert mask.sum() == 9
    assert set(gray.data[mask]) == set(range(9))


def test_half_black_image_has_empty_mask():
    data = np.zeros((10, 20), dtype=np.uint8)
    data[:, 10:] = 255
    gray = GrayImage(data)
    assert intensity_threshold(gray, 10.0) == 0
    assert not darkest_pixel_mask(gray, 10.0).any()


# ---------------------------------------------------------------------------
# label_components / count_lumens
# ---------------------------------------------------------------------------

def test_empty_mask_has_no_components():
    assert label_components(np.zeros((5, 5), dtype=bool), 8) == []


def test_diagonal_pixels_depend_on_connectivity():
    mask = np.zeros((4, 4), dtype=bool)
    mask[1, 1] = mask[2, 2] = True
    assert len(label_components(mask, 8)) == 1
    assert len(label_components(mask, 4)) == 2


def test_three_blocks():
    mask = np.zeros((12, 12), dtype=bool)
    mask[0:3, 0:3] = True
    mask[0:3, 6:9] = True
    mask[7:10, 2:5] = True
    found = label_components(mask, 8)
    assert [inst.area for inst in found] == [9, 9, 9]
    # ordered by smallest row-major pixel
    assert [inst.first_index for inst in found] == [0, 6, 7 * 12 + 2]
    assert found[1].bbox == (0, 6, 3, 9)


def test_bad_connectivity_rejected():
    with pytest.raises(ImageError):
        label_components(np.zeros((3, 3), dtype=bool), 6)


def test_count_lumens_examples():
    area = 256 * 256
    assert count_lumens([instance(700), instance(700), instance(100)], area,
                        0.01) == 2
    assert count_lumens([], area, 0.01) == 0
    assert count_lumens([instance(656)], area, 0.01) == 1
    assert count_lumens([instance(655)], area, 0.01) == 0


# ---------------------------------------------------------------------------
# detect_branch
# ---------------------------------------------------------------------------

def ellipse_frame(count, size=160):
    """`count` dark ellipses, each about 3% of the frame, on a bright field."""
    radius = np.sqrt(0.03 * size * size / np.pi)
    centers = [(size * 0.27, size * 0.27), (size * 0.27, size * 0.73),
               (size * 0.73, size * 0.5)]
    specs = [LumenSpec(center=centers[i], axes=(radius * 0.9, radius / 0.9),
                       intensity=10) for i in range(count)]
    return render_frame(specs, 200, size)


@pytest.mark.parametrize('count, is_branch', [(1, False), (2, True),
                                              (3, True)])
def test_detect_ellipse_frames(count, is_branch):
    detection = detect_branch(ellipse_frame(count))
    assert detection.lumen_count == count
    assert detection.is_branch is is_branch


def layout_frame(rng, big, small):
    slots = rng.permutation(len(SLOTS))[:big + small]
    dark = np.zeros((SIZE, SIZE), dtype=bool)
    data = np.full((SIZE, SIZE), int(rng.integers(120, 251)), dtype=np.uint8)
    for k, slot in enumerate(slots):
        radius = BIG_RADIUS[big] if k < big else SMALL_RADIUS
        blob = disc((SIZE, SIZE), SLOTS[slot], radius)
        dark |= blob
        data[blob] = int(rng.integers(0, 60))
    return GrayImage(data), dark


def test_detector_oracle_suite():
    rng = np.random.default_rng(2024)
    budget = np.ceil(0.1 * SIZE * SIZE)
    frames = 0
    for big in range(5):
        for small in range(3):
            for _ in range(4):
                gray, dark = layout_frame(rng, big, small)
                assert dark.sum() < budget
                for connectivity in (4, 8):
                    params = DetectorParams(connectivity=connectivity)
                    detection = detect_branch(gray, params)
                    assert np.array_equal(detection.mask, dark)
                    assert detection.lumen_count == big
                    assert detection.is_branch == (big >= 2)
                frames += 1
    assert frames >= 50


def test_detection_is_rank_invariant():
    rng = np.random.default_rng(99)
    for _ in range(100):
        shape = tuple(rng.integers(8, 20, size=2))
        data = rng.integers(0, 100, size=shape)
        # blocky structure gives non-trivial components
        data[rng.random(shape) < 0.3] = rng.integers(0, 10)
        gray = GrayImage(data.astype(np.uint8))
        params = DetectorParams(area_fraction=float(rng.uniform(0.001, 0.05)))
        reference = detect_branch(gray, params)
        for _ in range(20):
            mapping = np.sort(rng.choice(256, size=100, replace=False))
            remapped = detect_branch(GrayImage(mapping[gray.data]), params)
            assert np.array_equal(remapped.mask, reference.mask)
            assert remapped.lumen_count == reference.lumen_count


def test_detection_invariants():
    rng = np.random.default_rng(4)
    for _ in range(50):
        data = rng.integers(0, 256, size=(24, 24)).astype(np.uint8)
        gray = GrayImage(data)
        detection = detect_branch(gray)
        assert np.all(gray.data[detection.mask] < detection.intensity_threshold)
        assert sum(i.area for i in detection.instances) == detection.mask.sum()
        labels = detection.labels[detection.mask]
        assert np.all(labels > 0)
        assert len(np.unique(labels)) == len(detection.instances)
        assert detection.lumen_count == len(detection.lumens())
        previous = None
        for fraction in (0.001, 0.005, 0.01, 0.02, 0.1):
            n = count_lumens(detection.instances, gray.area, fraction)
            assert previous is None or n <= previous
            previous = n


@pytest.mark.parametrize('kwargs', [
    {'percentile': 0.0}, {'percentile': 100.0}, {'area_fraction': 0.0},
    {'area_fraction': 1.0}, {'connectivity': 6}, {'min_lumens_for_branch': 0},
])
def test_bad_params(kwargs):
    with pytest.raises(ImageError) as info:
        DetectorParams(**kwargs)
    assert info.value.err_code == ImageError.BAD_PARAM


def test_render_overlay_panels():
    gray = ellipse_frame(2, size=96)
    detection = detect_branch(gray)
    assert isinstance(detection, BranchDetection)
    panel = render_overlay(gray, detection)
    assert panel.shape == (96, 3 * 96, 3)
    assert panel.dtype == np.uint8
    middle = panel[:, 96:192]
    assert np.all(middle[detection.mask] == (255, 0, 0))
    left = panel[:, :96]
    assert np.array_equal(left[..., 0], gray.data)
