"""
likelihood.py

Per-frame likelihood p(z_t | S_t) over tree nodes. Two providers sit
behind the same `likelihood(t, frame)` call:

`FileLikelihoodProvider`     : rows produced by an external frame classifier
                               and stored as CSV (header = node labels)
`CentroidLikelihoodProvider` : built-in nearest-centroid baseline over
                               area-averaged thumbnails of the quantized frame

"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from PIL import Image
from scipy.special import softmax

from .config import DEFAULT_TEMPERATURE, DEFAULT_THUMB_SIZE
from .errors import LikelihoodError
from .tables import format_float, read_csv_with_fallback, write_rows
from .tree_model import TreeModel

logger = logging.getLogger(__name__)

PROBABILITY_FLOOR = 1e-12


@dataclass(frozen=True)
class LikelihoodVector:
    probs: np.ndarray

    def __len__(self):
        return self.probs.shape[0]

    def argmax(self) -> int:
        return int(np.argmax(self.probs))


def normalize(v) -> LikelihoodVector:
    """v / sum(v); an all-zero vector carries no information and is refused."""
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise LikelihoodError(LikelihoodError.ROW_LENGTH,
                              'shape={0}'.format(arr.shape))
    if np.any(arr < 0):
        raise LikelihoodError(LikelihoodError.NEGATIVE)
    total = arr.sum()
    if not total > 0:
        raise LikelihoodError(LikelihoodError.ALL_ZERO)
    probs = arr / total
    probs.setflags(write=False)
    return LikelihoodVector(probs)


# ---------------------------------------------------------------------------
# Likelihood files
# ---------------------------------------------------------------------------

def _parse_cell(cell, row: int, column: str) -> float:
    if not isinstance(cell, str) or cell.strip() == '':
        raise LikelihoodError(LikelihoodError.ROW_LENGTH,
                              'row {0} is missing {1}'.format(row, column))
    try:
        value = float(cell)
    except ValueError:
        raise LikelihoodError(LikelihoodError.NON_NUMERIC,
                              'row {0}, {1}={2!r}'.format(row, column, cell))
    if not math.isfinite(value):
        raise LikelihoodError(LikelihoodError.NON_NUMERIC,
                              'row {0}, {1}={2!r}'.format(row, column, cell))
    if value < 0:
        raise LikelihoodError(LikelihoodError.NEGATIVE,
                              'row {0}, {1}={2}'.format(row, column, value))
    return value


def read_likelihood_table(path) -> Tuple[List[str], np.ndarray]:
    """Header labels and the raw (unnormalized) T x n value table."""
    try:
        df = read_csv_with_fallback(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as exc:
        raise LikelihoodError(LikelihoodError.ROW_LENGTH, str(exc))
    except pd.errors.EmptyDataError:
        raise LikelihoodError(LikelihoodError.LABEL_MISMATCH,
                              '{0} is empty'.format(path))
    labels = [str(c).strip() for c in df.columns]
    values = np.empty((len(df), len(labels)), dtype=float)
    for r, row in enumerate(df.itertuples(index=False, name=None)):
        for c, cell in enumerate(row):
            values[r, c] = _parse_cell(cell, r + 1, labels[c])
    return labels, values


def load_likelihood_file(path, tree: TreeModel) -> List[LikelihoodVector]:
    """
    One normalized vector per frame row, columns reordered to tree order.
    The header must name every tree node exactly once, in any order.
    """
    labels, values = read_likelihood_table(path)
    if len(labels) != len(set(labels)) or sorted(labels) != sorted(tree.nodes):
        raise LikelihoodError(LikelihoodError.LABEL_MISMATCH,
                              'header {0}'.format(labels))
    order = [labels.index(label) for label in tree.nodes]
    vectors = []
    for r, row in enumerate(values[:, order]):
        try:
            vectors.append(normalize(row))
        except LikelihoodError as exc:
            raise LikelihoodError(exc.err_code, 'row {0}'.format(r + 1))
    logger.info('loaded %d likelihood rows from %s', len(vectors), path)
    return vectors


def write_likelihood_file(path, labels: Sequence[str], rows) -> None:
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        write_rows(handle, list(labels),
                   ([format_float(v) for v in np.asarray(row, dtype=float)]
                    for row in rows))


# ---------------------------------------------------------------------------
# Nearest-centroid baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CentroidModel:
    """
    Per-class mean thumbnail. `present[i]` is False for classes that had no
    training frames; their rows in `centroids` are zero and unused.
    """

    labels: Tuple[str, ...]
    centroids: np.ndarray            # (n, h, w)
    present: Tuple[bool, ...]
    thumb_size: Tuple[int, int]
    temperature: float = DEFAULT_TEMPERATURE

    def reordered(self, tree: TreeModel) -> 'CentroidModel':
        if sorted(self.labels) != sorted(tree.nodes):
            raise LikelihoodError(LikelihoodError.LABEL_MISMATCH,
                                  'model labels {0}'.format(self.labels))
        order = [self.labels.index(label) for label in tree.nodes]
        return CentroidModel(labels=tree.nodes,
                             centroids=self.centroids[order],
                             present=tuple(self.present[i] for i in order),
                             thumb_size=self.thumb_size,
                             temperature=self.temperature)


def _as_size(thumb_size) -> Tuple[int, int]:
    if isinstance(thumb_size, int):
        return thumb_size, thumb_size
    h, w = thumb_size
    return int(h), int(w)


def thumbnail(frame, thumb_size=DEFAULT_THUMB_SIZE) -> np.ndarray:
    """Area-averaged (box filter) float thumbnail of a frame."""
    h, w = _as_size(thumb_size)
    data = np.asarray(getattr(frame, 'data', frame), dtype=np.float32)
    img = Image.fromarray(data)
    return np.asarray(img.resize((w, h), Image.Resampling.BOX),
                      dtype=float)


def train_centroids(frames: Iterable, tree: TreeModel,
                    thumb_size=DEFAULT_THUMB_SIZE,
                    temperature: float = DEFAULT_TEMPERATURE) -> CentroidModel:
    """
    Args:
        `frames` : iterable of (QuantizedImage, node) pairs, node given as a
                   label or an index into `tree.nodes`
        `tree` (TreeModel) : defines class order
    Kwargs:
        `thumb_size` : int or (h, w)
        `temperature` (float) : softmax temperature used at prediction
    """
    if not temperature > 0:
        raise LikelihoodError(LikelihoodError.BAD_MODEL,
                              'temperature={0}'.format(temperature))
    h, w = _as_size(thumb_size)
    sums = np.zeros((tree.n, h, w))
    counts = np.zeros(tree.n, dtype=np.int64)
    for frame, node in frames:
        i = tree.index(node) if isinstance(node, str) else int(node)
        sums[i] += thumbnail(frame, (h, w))
        counts[i] += 1
    present = counts > 0
    if present.sum() < 2:
        raise LikelihoodError(LikelihoodError.TOO_FEW_CLASSES,
                              'classes with data: {0}'.format(
                                  [tree.nodes[i] for i in np.nonzero(present)[0]]))
    centroids = np.zeros_like(sums)
    centroids[present] = sums[present] / counts[present][:, None, None]
    absent = [tree.nodes[i] for i in np.nonzero(~present)[0]]
    if absent:
        logger.warning('no training frames for %s', ', '.join(absent))
    return CentroidModel(labels=tree.nodes, centroids=centroids,
                         present=tuple(bool(p) for p in present),
                         thumb_size=(h, w), temperature=float(temperature))


def centroid_distances(model: CentroidModel, frame) -> np.ndarray:
    """Euclidean distance from the frame thumbnail to every centroid."""
    thumb = thumbnail(frame, model.thumb_size)
    diff = model.centroids - thumb[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=(1, 2)))


def scores_to_likelihood(distances, present, temperature: float
                         ) -> LikelihoodVector:
    """Softmax of -distance/temperature, floored, absent classes at floor."""
    present = np.asarray(present, dtype=bool)
    probs = np.full(len(present), PROBABILITY_FLOOR)
    probs[present] = softmax(-np.asarray(distances)[present] / temperature)
    return normalize(np.maximum(probs, PROBABILITY_FLOOR))


def predict_centroid(model: CentroidModel, frame) -> LikelihoodVector:
    return scores_to_likelihood(centroid_distances(model, frame),
                                model.present, model.temperature)


def save_centroid_model(model: CentroidModel, path) -> None:
    h, w = model.thumb_size
    lines = ['# nearest-centroid frame classifier',
             'thumb {0} {1}'.format(h, w),
             'temperature {0}'.format(format_float(model.temperature))]
    for label, centroid, ok in zip(model.labels, model.centroids,
                                   model.present):
        if ok:
            values = ' '.join(format_float(v) for v in centroid.ravel())
            lines.append('centroid {0} {1}'.format(label, values))
        else:
            lines.append('absent {0}'.format(label))
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write('\n'.join(lines) + '\n')


def load_centroid_model(path) -> CentroidModel:
    thumb = None
    temperature = DEFAULT_TEMPERATURE
    labels, rows, present = [], [], []
    with open(path, 'r', encoding='utf-8') as handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            try:
                if fields[0] == 'thumb':
                    thumb = (int(fields[1]), int(fields[2]))
                elif fields[0] == 'temperature':
                    temperature = float(fields[1])
                elif fields[0] == 'centroid':
                    labels.append(fields[1])
                    rows.append([float(v) for v in fields[2:]])
                    present.append(True)
                elif fields[0] == 'absent':
                    labels.append(fields[1])
                    rows.append(None)
                    present.append(False)
                else:
                    raise ValueError('unknown directive')
            except (IndexError, ValueError) as exc:
                raise LikelihoodError(LikelihoodError.BAD_MODEL,
                                      'line {0}: {1}'.format(lineno, exc))
    if thumb is None or not labels:
        raise LikelihoodError(LikelihoodError.BAD_MODEL,
                              'missing thumb size or classes')
    h, w = thumb
    centroids = np.zeros((len(labels), h, w))
    for i, row in enumerate(rows):
        if row is None:
            continue
        if len(row) != h * w:
            raise LikelihoodError(LikelihoodError.BAD_MODEL,
                                  '{0}: {1} values, expected {2}'.format(
                                      labels[i], len(row), h * w))
        centroids[i] = np.asarray(row).reshape(h, w)
    return CentroidModel(labels=tuple(labels), centroids=centroids,
                         present=tuple(present), thumb_size=thumb,
                         temperature=temperature)


# ---------------------------------------------------------------------------
# Providers
# ---------------------------------------------------------------------------

class LikelihoodProvider(Protocol):
    def likelihood(self, t: int, frame) -> LikelihoodVector:
        ...


class FileLikelihoodProvider(object):
    """Serves precomputed rows in frame order."""

    def __init__(self, vectors: Sequence[LikelihoodVector]):
        self.vectors = list(vectors)

    @classmethod
    def from_file(cls, path, tree: TreeModel) -> 'FileLikelihoodProvider':
        return cls(load_likelihood_file(path, tree))

    def __len__(self):
        return len(self.vectors)

    def likelihood(self, t, frame=None):
        if not 0 <= t < len(self.vectors):
            raise LikelihoodError(LikelihoodError.FRAME_COUNT,
                                  'frame {0} but {1} rows'.format(
                                      t, len(self.vectors)))
        return self.vectors[t]


class CentroidLikelihoodProvider(object):
    """Runs the nearest-centroid baseline on each quantized frame."""

    def __init__(self, model: CentroidModel):
        self.model = model

    @classmethod
    def from_file(cls, path, tree: TreeModel) -> 'CentroidLikelihoodProvider':
        return cls(load_centroid_model(path).reordered(tree))

    def likelihood(self, t, frame):
        return predict_centroid(self.model, frame)
