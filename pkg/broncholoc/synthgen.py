"""
synthgen.py

Synthetic bronchoscopy-like sequences for desk-scale testing. A walk through
the tree is rendered as flat frames with dark elliptical lumens on a bright
background: one lumen while dwelling in an airway, two to four while passing
a branching point. Each frame comes with its ground-truth node and a noisy
likelihood row standing in for a frame classifier.

Frame layout for a walk [a, b, c]:

    dwell(a) x F_node | transition(a->b) x F_trans | dwell(b) x F_node | ...

The first floor(F_trans/2) transition frames are labeled with the source
node, the remaining ones with the destination.

"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from skimage.draw import ellipse

from .errors import SynthesisError
from .evaluation import read_truth_file, write_truth_file
from .frames import frame_name, list_frames, read_frame, write_frame
from .imaging import GrayImage
from .likelihood import load_likelihood_file, write_likelihood_file
from .tree_model import TreeModel

logger = logging.getLogger(__name__)

DEFAULT_SIZE = 64
MIN_SIZE = 48
DEFAULT_FRAMES_PER_NODE = 5
DEFAULT_FRAMES_PER_TRANSITION = 3
DEFAULT_BRANCH_NOISE_SCALE = 1.0
NOISE_MODELS = ('flat', 'confusion')
DEFAULT_NOISE_MODEL = 'flat'

LUMEN_INTENSITY = (5, 40)
BACKGROUND_INTENSITY = (150, 220)

# radii as a fraction of the frame size, keyed by lumen count; the total
# dark area stays under the 10th-percentile budget of the detector
LUMEN_RADIUS = {1: 0.125, 2: 0.11, 3: 0.094, 4: 0.078}
RING_RADIUS = 0.22
CENTER_JITTER = 0.1

FRAMES_DIR = 'frames'
TRUTH_FILE = 'truth.txt'
LIKELIHOOD_FILE = 'likelihoods.csv'
WALK_FILE = 'walk.txt'


@dataclass(frozen=True)
class LumenSpec:
    center: Tuple[float, float]          # row, col
    axes: Tuple[float, float]            # row radius, col radius
    intensity: int
    rotation: float = 0.0


@dataclass(frozen=True)
class SyntheticSequence:
    frames: Tuple[GrayImage, ...]
    truth: Tuple[int, ...]
    walk: Tuple[int, ...]
    rng_seed: Optional[int]
    likelihoods: np.ndarray
    transition_frames: Tuple[bool, ...] = field(default=())

    def __len__(self):
        return len(self.frames)


def _as_shape(size) -> Tuple[int, int]:
    if isinstance(size, (int, np.integer)):
        return int(size), int(size)
    h, w = size
    return int(h), int(w)


def _half_extent(spec: LumenSpec) -> Tuple[float, float]:
    a, b = spec.axes
    if spec.rotation == 0.0:
        return a, b
    r = max(a, b)
    return r, r


def render_frame(lumen_specs: Sequence[LumenSpec], bg_intensity: int,
                 size=DEFAULT_SIZE) -> GrayImage:
    """
    Constant background with filled dark ellipses drawn on top (no
    anti-aliasing). Every ellipse must lie inside the frame and be darker
    than the background.
    """
    h, w = _as_shape(size)
    if not 0 <= bg_intensity <= 255:
        raise SynthesisError(SynthesisError.BAD_INTENSITY,
                             'background {0}'.format(bg_intensity))
    data = np.full((h, w), bg_intensity, dtype=np.uint8)
    for spec in lumen_specs:
        if not 0 <= spec.intensity < bg_intensity:
            raise SynthesisError(SynthesisError.BAD_INTENSITY,
                                 'lumen {0} vs background {1}'.format(
                                     spec.intensity, bg_intensity))
        (r, c), (dr, dc) = spec.center, _half_extent(spec)
        if r - dr < 0 or c - dc < 0 or r + dr > h - 1 or c + dc > w - 1:
            raise SynthesisError(SynthesisError.OUT_OF_BOUNDS,
                                 '{0} in {1}x{2}'.format(spec, h, w))
        rr, cc = ellipse(r, c, spec.axes[0], spec.axes[1], shape=(h, w),
                         rotation=spec.rotation)
        data[rr, cc] = spec.intensity
    return GrayImage(data)


def dwell_view(rng, size=DEFAULT_SIZE) -> Tuple[List[LumenSpec], int]:
    """Single lumen near the frame center."""
    h, w = _as_shape(size)
    s = min(h, w)
    radius = LUMEN_RADIUS[1] * s
    jitter = CENTER_JITTER * s
    center = (h / 2.0 + rng.uniform(-jitter, jitter),
              w / 2.0 + rng.uniform(-jitter, jitter))
    lumen = LumenSpec(center=center, axes=(radius, radius),
                      intensity=int(rng.integers(LUMEN_INTENSITY[0],
                                                 LUMEN_INTENSITY[1] + 1)))
    return [lumen], _background(rng)


def branch_view(rng, count: int, size=DEFAULT_SIZE
                ) -> Tuple[List[LumenSpec], int]:
    """`count` (2..4) lumens evenly spaced on a ring, randomly rotated."""
    if count not in LUMEN_RADIUS or count < 2:
        raise SynthesisError(SynthesisError.BAD_PARAM,
                             'lumen count {0}'.format(count))
    h, w = _as_shape(size)
    s = min(h, w)
    radius = LUMEN_RADIUS[count] * s
    ring = RING_RADIUS * s
    offset = rng.uniform(0.0, 2.0 * math.pi)
    lumens = []
    for k in range(count):
        angle = offset + 2.0 * math.pi * k / count
        center = (h / 2.0 + ring * math.sin(angle),
                  w / 2.0 + ring * math.cos(angle))
        lumens.append(LumenSpec(
            center=center, axes=(radius, radius),
            intensity=int(rng.integers(LUMEN_INTENSITY[0],
                                       LUMEN_INTENSITY[1] + 1))))
    return lumens, _background(rng)


def _background(rng) -> int:
    return int(rng.integers(BACKGROUND_INTENSITY[0],
                            BACKGROUND_INTENSITY[1] + 1))


def validate_walk(tree: TreeModel, walk: Sequence[int]) -> None:
    if not walk:
        raise SynthesisError(SynthesisError.INVALID_WALK, 'empty walk')
    if walk[0] != tree.root_index:
        raise SynthesisError(SynthesisError.INVALID_WALK,
                             'walk starts at {0}, not {1}'.format(
                                 tree.nodes[walk[0]], tree.root))
    for a, b in zip(walk, walk[1:]):
        if not (0 <= b < tree.n) or b not in tree.neighbors(a):
            raise SynthesisError(SynthesisError.INVALID_WALK,
                                 '{0} -> {1} is not a tree edge'.format(a, b))


def parse_walk(tree: TreeModel, text: str) -> List[int]:
    """Comma- or space-separated node labels, e.g. 'TRA,RMB,BronInt'."""
    labels = [t for t in text.replace(',', ' ').split() if t]
    try:
        walk = [tree.nodes.index(label) for label in labels]
    except ValueError:
        raise SynthesisError(SynthesisError.INVALID_WALK,
                             'unknown label in {0!r}'.format(text))
    validate_walk(tree, walk)
    return walk


def branch_lumen_count(tree: TreeModel, a: int, b: int) -> int:
    """Lumens visible when passing edge a-b: children of the upper node."""
    upper = a if tree.depth(a) < tree.depth(b) else b
    return min(max(len(tree.children(upper)), 2), 4)


def likelihood_row(n: int, truth: int, noise: float, rng,
                   noise_model: str = DEFAULT_NOISE_MODEL) -> np.ndarray:
    row = np.zeros(n)
    row[truth] = 1.0 - noise
    if noise_model == 'flat':
        row += noise / n
    else:
        row[int(rng.integers(n))] += noise
    return row


def generate_sequence(tree: TreeModel, walk: Sequence[int],
                      frames_per_node: int = DEFAULT_FRAMES_PER_NODE,
                      frames_per_transition: int = DEFAULT_FRAMES_PER_TRANSITION,
                      noise: float = 0.0, seed: int = 0,
                      size=DEFAULT_SIZE,
                      noise_model: str = DEFAULT_NOISE_MODEL,
                      branch_noise_scale: float = DEFAULT_BRANCH_NOISE_SCALE
                      ) -> SyntheticSequence:
    """
    Renders a walk into frames, truth labels and likelihood rows.

    Args:
        `tree` (TreeModel) : airway tree
        `walk` : node indices, starting at the root, stepping along edges
    Kwargs:
        `frames_per_node` (int) : single-lumen dwell frames per walk node
        `frames_per_transition` (int) : branch-view frames per walk step
        `noise` (float) : likelihood noise level in [0, 1]
        `seed` (int) : all randomness derives from this
        `size` : frame side (int) or (height, width), at least 48
        `noise_model` (str) : 'flat' (default) mixes the one-hot truth with
                              a uniform row, 'confusion' puts the noise
                              mass on one random node
        `branch_noise_scale` (float) : noise multiplier on transition
                                       frames, 1.0 by default
    """
    validate_walk(tree, list(walk))
    if frames_per_node < 1 or frames_per_transition < 0:
        raise SynthesisError(SynthesisError.BAD_PARAM,
                             'frames_per_node={0}, frames_per_transition={1}'
                             .format(frames_per_node, frames_per_transition))
    if not 0.0 <= noise <= 1.0:
        raise SynthesisError(SynthesisError.BAD_PARAM,
                             'noise={0}'.format(noise))
    if branch_noise_scale < 0 or noise * branch_noise_scale > 1.0:
        raise SynthesisError(SynthesisError.BAD_PARAM,
                             'branch_noise_scale={0}'.format(
                                 branch_noise_scale))
    if noise_model not in NOISE_MODELS:
        raise SynthesisError(SynthesisError.BAD_PARAM,
                             'noise_model={0!r}'.format(noise_model))
    if min(_as_shape(size)) < MIN_SIZE:
        raise SynthesisError(SynthesisError.BAD_PARAM,
                             'size {0} < {1}'.format(size, MIN_SIZE))

    rng = np.random.default_rng(seed)
    frames, truth, transition_flags, rows = [], [], [], []

    def emit(specs_bg, label, is_transition):
        specs, bg = specs_bg
        level = noise * branch_noise_scale if is_transition else noise
        frames.append(render_frame(specs, bg, size))
        truth.append(label)
        transition_flags.append(is_transition)
        rows.append(likelihood_row(tree.n, label, level, rng, noise_model))

    for pos, node in enumerate(walk):
        if pos > 0:
            prev = walk[pos - 1]
            count = branch_lumen_count(tree, prev, node)
            half = frames_per_transition // 2
            for k in range(frames_per_transition):
                emit(branch_view(rng, count, size),
                     prev if k < half else node, True)
        for _ in range(frames_per_node):
            emit(dwell_view(rng, size), node, False)

    logger.debug('generated %d frames over walk %s (seed %d)', len(frames),
                 [tree.nodes[i] for i in walk], seed)
    return SyntheticSequence(frames=tuple(frames), truth=tuple(truth),
                             walk=tuple(int(i) for i in walk), rng_seed=seed,
                             likelihoods=np.asarray(rows).reshape(-1, tree.n),
                             transition_frames=tuple(transition_flags))


def write_sequence(seq: SyntheticSequence, tree: TreeModel, out_dir) -> Path:
    """
    Writes `frames/frame_XXXXXX.pgm`, `truth.txt`, `likelihoods.csv` and
    `walk.txt` under `out_dir`.
    """
    out_dir = Path(out_dir)
    frames_dir = out_dir / FRAMES_DIR
    frames_dir.mkdir(parents=True, exist_ok=True)
    for t, frame in enumerate(seq.frames):
        write_frame(frames_dir / frame_name(t), frame)
    write_truth_file(out_dir / TRUTH_FILE, tree, seq.truth)
    write_likelihood_file(out_dir / LIKELIHOOD_FILE, tree.nodes,
                          seq.likelihoods)
    write_truth_file(out_dir / WALK_FILE, tree, seq.walk)
    logger.info('wrote %d frames to %s', len(seq.frames), out_dir)
    return out_dir


def read_sequence_dir(path, tree: TreeModel) -> SyntheticSequence:
    """Loads a directory written by `write_sequence` (frames read eagerly)."""
    path = Path(path)
    frames = tuple(read_frame(p) for p in list_frames(path / FRAMES_DIR))
    truth = tuple(read_truth_file(path / TRUTH_FILE, tree))
    vectors = load_likelihood_file(path / LIKELIHOOD_FILE, tree)
    walk_path = path / WALK_FILE
    walk = tuple(read_truth_file(walk_path, tree)) if walk_path.exists() \
        else ()
    if not (len(frames) == len(truth) == len(vectors)):
        raise SynthesisError(SynthesisError.BAD_PARAM,
                             '{0}: {1} frames, {2} labels, {3} rows'.format(
                                 path, len(frames), len(truth), len(vectors)))
    return SyntheticSequence(
        frames=frames, truth=truth, walk=walk, rng_seed=None,
        likelihoods=np.asarray([v.probs for v in vectors]).reshape(-1, tree.n))
