"""
branch_detector.py

Branching-point detector. Three stages:

    1. keep the darkest pixels (strictly below the nearest-rank percentile
       intensity of the frame),
    2. group them into connected components,
    3. count components whose area reaches a fraction of the frame area.

A frame showing two or more such lumens is taken to be at a branching point.

"""
import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
from matplotlib import colormaps
from scipy import ndimage

from .config import (DEFAULT_AREA_FRACTION, DEFAULT_CONNECTIVITY,
                     DEFAULT_MIN_LUMENS, DEFAULT_PERCENTILE)
from .errors import ImageError
from .imaging import GrayImage, nearest_rank_index

logger = logging.getLogger(__name__)

STRUCTURES = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}

MASK_RGB = (255, 0, 0)
SMALL_INSTANCE_RGB = (90, 90, 90)


@dataclass(frozen=True)
class DetectorParams:
    percentile: float = DEFAULT_PERCENTILE
    area_fraction: float = DEFAULT_AREA_FRACTION
    connectivity: int = DEFAULT_CONNECTIVITY
    min_lumens_for_branch: int = DEFAULT_MIN_LUMENS

    def __post_init__(self):
        if not 0.0 < self.percentile < 100.0:
            raise ImageError(ImageError.BAD_PARAM,
                             'percentile={0}'.format(self.percentile))
        if not 0.0 < self.area_fraction < 1.0:
            raise ImageError(ImageError.BAD_PARAM,
                             'area_fraction={0}'.format(self.area_fraction))
        if self.connectivity not in STRUCTURES:
            raise ImageError(ImageError.BAD_PARAM,
                             'connectivity={0}'.format(self.connectivity))
        if self.min_lumens_for_branch < 1:
            raise ImageError(ImageError.BAD_PARAM,
                             'min_lumens_for_branch={0}'.format(
                                 self.min_lumens_for_branch))


@dataclass(frozen=True)
class LumenInstance:
    label: int
    area: int
    bbox: Tuple[int, int, int, int]   # row0, col0, row1, col1 (exclusive)
    first_index: int                  # smallest row-major pixel index


@dataclass(frozen=True)
class BranchDetection:
    mask: np.ndarray
    labels: np.ndarray
    instances: Tuple[LumenInstance, ...]
    lumen_count: int
    is_branch: bool
    intensity_threshold: int
    area_threshold: float = field(default=0.0)

    def lumens(self) -> List[LumenInstance]:
        """Instances that pass the area filter."""
        return [inst for inst in self.instances
                if inst.area >= self.area_threshold]


def intensity_threshold(gray: GrayImage, percentile: float) -> int:
    """Nearest-rank percentile of the pixel intensities."""
    counts = np.bincount(gray.data.ravel(), minlength=256)
    present = np.nonzero(counts)[0]
    cumulative = np.cumsum(counts[present])
    return int(present[nearest_rank_index(cumulative, percentile / 100.0)])


def darkest_pixel_mask(gray: GrayImage, percentile: float) -> np.ndarray:
    """Pixels strictly darker than the nearest-rank percentile intensity."""
    return gray.data < intensity_threshold(gray, percentile)


def _label_raster(mask: np.ndarray, connectivity: int):
    if connectivity not in STRUCTURES:
        raise ImageError(ImageError.BAD_PARAM,
                         'connectivity={0}'.format(connectivity))
    raw, count = ndimage.label(mask, structure=STRUCTURES[connectivity])
    if count == 0:
        return raw, []
    flat = raw.ravel()
    found, first = np.unique(flat, return_index=True)
    order = sorted((int(idx), int(lab)) for idx, lab in zip(first, found)
                   if lab != 0)
    # relabel 1..K by first row-major pixel
    relabel = np.zeros(count + 1, dtype=raw.dtype)
    for new, (_, old) in enumerate(order, start=1):
        relabel[old] = new
    labels = relabel[raw]
    areas = np.bincount(labels.ravel(), minlength=count + 1)
    slices = ndimage.find_objects(labels)
    instances = []
    for new, (first_index, _) in enumerate(order, start=1):
        rows, cols = slices[new - 1]
        instances.append(LumenInstance(
            label=new, area=int(areas[new]),
            bbox=(rows.start, cols.start, rows.stop, cols.stop),
            first_index=first_index))
    return labels, instances


def label_components(mask: np.ndarray, connectivity: int = DEFAULT_CONNECTIVITY
                     ) -> List[LumenInstance]:
    """
    Maximal connected components of the true pixels, ordered by their
    smallest row-major pixel index.
    """
    return _label_raster(np.asarray(mask, dtype=bool), connectivity)[1]


def count_lumens(instances, image_area: int, area_fraction: float) -> int:
    """Number of instances with area >= area_fraction * image_area."""
    threshold = area_fraction * image_area
    return sum(1 for inst in instances if inst.area >= threshold)


def detect_branch(gray: GrayImage, params: DetectorParams = DetectorParams()
                  ) -> BranchDetection:
    threshold = intensity_threshold(gray, params.percentile)
    mask = gray.data < threshold
    labels, instances = _label_raster(mask, params.connectivity)
    n_lumens = count_lumens(instances, gray.area, params.area_fraction)
    logger.debug('th_I=%d |D|=%d instances=%d lumens=%d', threshold,
                 int(mask.sum()), len(instances), n_lumens)
    return BranchDetection(
        mask=mask, labels=labels, instances=tuple(instances),
        lumen_count=n_lumens,
        is_branch=n_lumens >= params.min_lumens_for_branch,
        intensity_threshold=threshold,
        area_threshold=params.area_fraction * gray.area)


def render_overlay(gray: GrayImage, detection: BranchDetection) -> np.ndarray:
    """
    Three side-by-side RGB panels: input, darkest-pixel set in red, and one
    colour per lumen instance (instances below the area threshold in grey).
    """
    base = np.repeat(gray.data[..., None], 3, axis=2)
    masked = base.copy()
    masked[detection.mask] = MASK_RGB
    coloured = np.zeros_like(base)
    palette = colormaps['tab20']
    for k, inst in enumerate(detection.lumens()):
        rgb = np.asarray(palette(k % palette.N)[:3]) * 255
        coloured[detection.labels == inst.label] = rgb.astype(np.uint8)
    for inst in detection.instances:
        if inst.area < detection.area_threshold:
            coloured[detection.labels == inst.label] = SMALL_INSTANCE_RGB
    return np.concatenate([base, masked, coloured], axis=1)
