"""
imaging.py

Grayscale conversion and k-level intensity quantization. The quantized image
(five levels by default) keeps the main structures of a frame while dropping
the fine texture that differs between phantom and real footage.

"""
import logging
import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from .config import DEFAULT_KMEANS_MAX_ITER, DEFAULT_KMEANS_TOL, DEFAULT_LEVELS
from .errors import ImageError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GrayImage:
    """Row-major 8-bit intensity raster; `data` has shape (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ImageError(ImageError.BAD_SHAPE, 'shape={0}'.format(arr.shape))
        if arr.size == 0:
            raise ImageError(ImageError.EMPTY)
        if arr.dtype != np.uint8:
            if arr.min() < 0 or arr.max() > 255:
                raise ImageError(ImageError.BAD_RANGE)
            if np.issubdtype(arr.dtype, np.floating) and \
                    not np.array_equal(arr, np.round(arr)):
                raise ImageError(ImageError.BAD_RANGE, 'non-integer intensity')
        arr = np.array(arr, dtype=np.uint8, order='C')
        arr.setflags(write=False)
        object.__setattr__(self, 'data', arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def area(self) -> int:
        return self.data.size


@dataclass(frozen=True)
class QuantizedImage:
    """A GrayImage whose pixels take one of `levels` (ascending)."""

    base: GrayImage
    levels: Tuple[int, ...]

    @property
    def data(self) -> np.ndarray:
        return self.base.data


@dataclass(frozen=True)
class KMeansResult:
    centroids: np.ndarray
    assignment: np.ndarray
    objective: float
    history: Tuple[float, ...] = field(default=())
    iterations: int = 0


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5)


def to_grayscale(rgb) -> GrayImage:
    """
    Luma 0.299 R + 0.587 G + 0.114 B, rounded half-up. Computed in integer
    arithmetic so half-way cases round exactly.
    """
    arr = np.asarray(rgb)
    if arr.size == 0:
        raise ImageError(ImageError.EMPTY)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ImageError(ImageError.BAD_SHAPE, 'shape={0}'.format(arr.shape))
    if arr.min() < 0 or arr.max() > 255:
        raise ImageError(ImageError.BAD_RANGE)
    channels = arr.astype(np.int64)
    luma = (299 * channels[..., 0] + 587 * channels[..., 1]
            + 114 * channels[..., 2] + 500) // 1000
    return GrayImage(luma.astype(np.uint8))


def nearest_rank_index(cumulative: np.ndarray, q: float) -> int:
    """
    Index into sorted distinct values of the nearest-rank q-quantile
    (q in (0, 1]), given cumulative counts.
    """
    total = int(cumulative[-1])
    rank = min(max(math.ceil(q * total - 1e-9), 1), total)
    return int(np.searchsorted(cumulative, rank, side='left'))


def _assign(values: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # centroids ascending, so argmin's first-hit rule sends ties to the
    # darker centroid
    return np.abs(values[:, None] - centroids[None, :]).argmin(axis=1)


def _objective(values, weights, centroids, assignment) -> float:
    return float(np.sum(weights * (values - centroids[assignment]) ** 2))


def _optimal_partition(values: np.ndarray, weights: np.ndarray,
                       groups: int) -> np.ndarray:
    """
    Exact weighted 1-D k-means: dynamic program over splits of the sorted
    values into `groups` contiguous runs. Returns the run index per value.
    """
    m = values.size
    w = np.concatenate(([0.0], np.cumsum(weights)))
    s1 = np.concatenate(([0.0], np.cumsum(weights * values)))
    s2 = np.concatenate(([0.0], np.cumsum(weights * values ** 2)))
    lo = np.arange(m + 1)[:, None]
    hi = np.arange(m + 1)[None, :]
    valid = hi > lo
    with np.errstate(divide='ignore', invalid='ignore'):
        total = s1[hi] - s1[lo]
        # cost[i, j]: squared error of values[i:j] around their mean
        cost = (s2[hi] - s2[lo]) - total ** 2 / (w[hi] - w[lo])
    cost = np.where(valid, np.maximum(cost, 0.0), np.inf)

    best = np.full(m + 1, np.inf)
    best[0] = 0.0
    splits = np.zeros((groups + 1, m + 1), dtype=np.int64)
    for g in range(1, groups + 1):
        candidates = best[:, None] + cost
        splits[g] = np.argmin(candidates, axis=0)
        best = candidates[splits[g], np.arange(m + 1)]

    assignment = np.empty(m, dtype=np.int64)
    end = m
    for g in range(groups, 0, -1):
        start = splits[g, end]
        assignment[start:end] = g - 1
        end = start
    return assignment


def kmeans_1d(values, weights, k: int,
              max_iter: int = DEFAULT_KMEANS_MAX_ITER,
              tol: float = DEFAULT_KMEANS_TOL) -> KMeansResult:
    """
    Weighted 1-D Lloyd's k-means.

    Args:
        `values` : distinct sample values, ascending
        `weights` : positive count per value
        `k` (int) : number of clusters requested
    Kwargs:
        `max_iter` (int) : iteration cap
        `tol` (float) : stop once no centroid moves by `tol` or more

    Seeds are the (2r+1)/(2k) nearest-rank quantiles, r = 0..k-1, of the
    weighted distribution. Coinciding seeds and clusters that empty out are
    dropped during the Lloyd iterations. The converged clustering is then
    checked against the exact optimal split into k contiguous runs and
    replaced by it when Lloyd stopped in a worse local minimum; `history`
    keeps the Lloyd objectives. With k or fewer distinct values every value
    is its own cluster.
    """
    if k < 1:
        raise ImageError(ImageError.BAD_PARAM, 'k={0}'.format(k))
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if values.size == 0:
        raise ImageError(ImageError.EMPTY)

    if values.size <= k:
        assignment = np.arange(values.size)
        return KMeansResult(centroids=values.copy(), assignment=assignment,
                            objective=0.0, history=(0.0,), iterations=0)

    cumulative = np.cumsum(weights)
    seeds = [values[nearest_rank_index(cumulative, (2 * r + 1) / (2 * k))]
             for r in range(k)]
    centroids = np.unique(np.asarray(seeds, dtype=float))

    history = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        assignment = _assign(values, centroids)
        mass = np.bincount(assignment, weights=weights,
                           minlength=centroids.size)
        sums = np.bincount(assignment, weights=weights * values,
                           minlength=centroids.size)
        keep = mass > 0
        updated = sums[keep] / mass[keep]
        # relabel the assignment onto the surviving clusters
        remap = np.cumsum(keep) - 1
        history.append(_objective(values, weights, updated, remap[assignment]))
        if updated.size == centroids.size:
            movement = float(np.max(np.abs(updated - centroids)))
        else:
            movement = math.inf
        centroids = updated
        if movement < tol:
            break

    assignment = _assign(values, centroids)
    objective = _objective(values, weights, centroids, assignment)
    groups = min(k, values.size)
    exact = _optimal_partition(values, weights, groups)
    exact_centroids = (np.bincount(exact, weights=weights * values)
                       / np.bincount(exact, weights=weights))
    exact_objective = _objective(values, weights, exact_centroids, exact)
    if exact_objective <= objective:
        logger.debug('lloyd objective %.6g, optimal partition %.6g',
                     objective, exact_objective)
        centroids, assignment, objective = (exact_centroids, exact,
                                            exact_objective)
    return KMeansResult(centroids=centroids, assignment=assignment,
                        objective=objective, history=tuple(history),
                        iterations=iterations)


def quantize_with_result(gray: GrayImage, k: int = DEFAULT_LEVELS,
                         max_iter: int = DEFAULT_KMEANS_MAX_ITER,
                         tol: float = DEFAULT_KMEANS_TOL):
    """`quantize_levels` that also returns the underlying KMeansResult."""
    counts = np.bincount(gray.data.ravel(), minlength=256)
    present = np.nonzero(counts)[0]
    result = kmeans_1d(present, counts[present], k, max_iter=max_iter, tol=tol)
    written = round_half_up(result.centroids).astype(np.int64)
    lut = np.zeros(256, dtype=np.uint8)
    lut[present] = written[result.assignment]
    levels = tuple(int(v) for v in np.unique(written[result.assignment]))
    logger.debug('quantized to %d levels %s in %d iterations', len(levels),
                 levels, result.iterations)
    return QuantizedImage(base=GrayImage(lut[gray.data]), levels=levels), result


def quantize_levels(gray: GrayImage, k: int = DEFAULT_LEVELS,
                    max_iter: int = DEFAULT_KMEANS_MAX_ITER,
                    tol: float = DEFAULT_KMEANS_TOL) -> QuantizedImage:
    """Replace each pixel by its rounded k-means intensity centroid."""
    return quantize_with_result(gray, k, max_iter=max_iter, tol=tol)[0]
