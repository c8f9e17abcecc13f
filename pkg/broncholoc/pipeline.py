"""
pipeline.py

Per-frame wiring (quantize -> detect -> gated filter), the streaming
localization loop used online, and the ablation runner that scores every
method variant on recorded or synthetic sequences.

"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .bayes_filter import GatePolicy, LocalizationFilter, Posterior, run_filter
from .branch_detector import BranchDetection, DetectorParams, detect_branch
from .config import DEFAULT_LEVELS, DEFAULT_TEMPERATURE, DEFAULT_THUMB_SIZE
from .errors import LikelihoodError
from .evaluation import (AblationRow, SequenceResult, result_from_posteriors,
                         result_from_scores, topk_accuracy, with_mean_rows)
from .imaging import GrayImage, QuantizedImage, quantize_levels
from .likelihood import predict_centroid, train_centroids
from .tree_model import TransitionModel, TreeModel
from .viterbi_offline import max_marginals

logger = logging.getLogger(__name__)

RAW = 'raw'
HMM = 'hmm'
ALWAYS = 'always'
BRANCH = 'branch'

# method -> (label, bayesian, branching detector)
VARIANTS = {
    RAW: ('Frame-clf', False, False),
    HMM: ('Frame-clf+HMM', False, False),
    ALWAYS: ('Bayesian', True, False),
    BRANCH: ('Bayesian+Branching', True, True),
}

# frame classifier sources for the ablation
FILE_CLASSIFIER = 'file'
RAW_GRAY = 'raw-gray'
QUANTIZED = 'quantized'
CLASSIFIERS = (FILE_CLASSIFIER, RAW_GRAY, QUANTIZED)


@dataclass(frozen=True)
class FrameStep:
    t: int
    posterior: Posterior
    detection: BranchDetection
    updated: bool


def process_frame(gray: GrayImage, params: DetectorParams = DetectorParams(),
                  levels: int = DEFAULT_LEVELS
                  ) -> Tuple[QuantizedImage, BranchDetection]:
    """
    The classifier sees the k-level image; the detector thresholds the raw
    grayscale frame.
    """
    return quantize_levels(gray, levels), detect_branch(gray, params)


def localize_stream(frames: Iterable[GrayImage], provider, tree: TreeModel,
                    transition: TransitionModel, policy=GatePolicy.BRANCH,
                    params: DetectorParams = DetectorParams(),
                    levels: int = DEFAULT_LEVELS,
                    debug: bool = False) -> Iterator[FrameStep]:
    """
    Online loop. Yields the posterior for frame t before frame t+1 is pulled
    from `frames`. Frame 0 is the trachea initialization; the likelihood
    provider is only consulted on frames where the gate lets it through.
    """
    filt = LocalizationFilter(tree, transition, policy, debug=debug)
    for t, gray in enumerate(frames):
        quantized, detection = process_frame(gray, params, levels)
        if t == 0:
            yield FrameStep(0, filt.posterior, detection, False)
            continue
        updated = filt.policy.applies(detection.is_branch)
        likelihood = provider.likelihood(t, quantized) if updated else None
        posterior = filt.step(likelihood, detection.is_branch)
        yield FrameStep(t, posterior, detection, updated)


def detect_sequence(frames: Sequence[GrayImage],
                    params: DetectorParams = DetectorParams()) -> List[bool]:
    return [detect_branch(f, params).is_branch for f in frames]


def run_variants(frames: Sequence[GrayImage], likelihoods, truth,
                 tree: TreeModel, transition: TransitionModel,
                 params: DetectorParams = DetectorParams(),
                 constrain_endpoints: bool = True,
                 sequence_id: str = '',
                 is_branch: Optional[Sequence[bool]] = None
                 ) -> Dict[str, SequenceResult]:
    """
    Scores one sequence under every method variant.

    Args:
        `frames` : GrayImage per frame
        `likelihoods` : T x n array (or LikelihoodVectors), one row per frame
        `truth` : ground-truth node index per frame
    Kwargs:
        `constrain_endpoints` (bool) : force the HMM path to end at the root
        `is_branch` : precomputed detector flags, detected from `frames`
                      when omitted
    """
    rows = np.asarray([np.asarray(getattr(v, 'probs', v), dtype=float)
                       for v in likelihoods]).reshape(-1, tree.n)
    if is_branch is None:
        is_branch = detect_sequence(frames, params)
    results = {
        RAW: result_from_posteriors(rows, truth, sequence_id),
        HMM: result_from_scores(
            max_marginals(rows, transition, tree.root_index,
                          constrain_endpoints), truth, sequence_id),
    }
    for key, policy in ((ALWAYS, GatePolicy.ALWAYS),
                        (BRANCH, GatePolicy.BRANCH)):
        posteriors = run_filter(rows, is_branch, transition, tree.root_index,
                                policy)
        results[key] = result_from_posteriors(posteriors, truth, sequence_id)
    logger.info('%s: %d frames, %d branch frames', sequence_id or 'sequence',
                len(frames), sum(is_branch))
    return results


def ablation_rows(results: Dict[str, SequenceResult], sequence_id: str,
                  frame_classifier: str) -> List[AblationRow]:
    rows = []
    for key, (method, bayesian, branching) in VARIANTS.items():
        result = results[key]
        rows.append(AblationRow(
            sequence=sequence_id, frame_classifier=frame_classifier,
            bayesian=bayesian, branching_detector=branching, method=method,
            top1=topk_accuracy(result, 1), top3=topk_accuracy(result, 3)))
    return rows


def classifier_label(source: str, levels: int = DEFAULT_LEVELS) -> str:
    """Frame Classifier column text for a classifier source."""
    if source == FILE_CLASSIFIER:
        return 'likelihood file'
    if source == RAW_GRAY:
        return 'baseline (raw gray)'
    if source == QUANTIZED:
        return '{0}-level grayscale'.format(levels)
    raise LikelihoodError(LikelihoodError.BAD_MODEL,
                          'unknown classifier {0!r}'.format(source))


def classifier_inputs(frames: Sequence[GrayImage], source: str,
                      levels: int = DEFAULT_LEVELS) -> list:
    """Images the centroid classifier sees: raw gray or the k-level image."""
    if source == QUANTIZED:
        return [quantize_levels(f, levels) for f in frames]
    return list(frames)


def held_out_likelihoods(inputs: Sequence[list], truths: Sequence,
                         held_out: int, tree: TreeModel,
                         thumb_size=DEFAULT_THUMB_SIZE,
                         temperature: float = DEFAULT_TEMPERATURE
                         ) -> np.ndarray:
    """
    Trains the nearest-centroid classifier on every sequence except
    `held_out` and returns its likelihood rows for the held-out frames.
    """
    pairs = ((image, node)
             for i, (images, truth) in enumerate(zip(inputs, truths))
             if i != held_out
             for image, node in zip(images, truth))
    model = train_centroids(pairs, tree, thumb_size=thumb_size,
                            temperature=temperature)
    return np.asarray([predict_centroid(model, image).probs
                       for image in inputs[held_out]]).reshape(-1, tree.n)


def run_ablation(sequences: Sequence[Tuple[str, object]], tree: TreeModel,
                 transition: TransitionModel,
                 params: DetectorParams = DetectorParams(),
                 constrain_endpoints: bool = True,
                 frame_classifier: Optional[str] = None,
                 workers: Optional[int] = 1,
                 classifiers: Sequence[str] = (FILE_CLASSIFIER,),
                 levels: int = DEFAULT_LEVELS,
                 thumb_size=DEFAULT_THUMB_SIZE,
                 temperature: float = DEFAULT_TEMPERATURE
                 ) -> List[AblationRow]:
    """
    Runs `run_variants` over (name, sequence) pairs for every classifier
    source, fanning out across sequences when `workers` > 1, and appends a
    Mean row per classifier and variant.

    Sequences need `frames`, `likelihoods` and `truth` attributes. The
    `file` source uses the stored likelihoods (reported as
    `frame_classifier` when given). The `raw-gray` and `quantized` sources
    train the centroid baseline on all other sequences and classify the
    held-out one, on raw grayscale or on the `levels`-level image.
    """
    sequences = list(sequences)
    centroid_sources = [c for c in classifiers if c != FILE_CLASSIFIER]
    labels = {source: classifier_label(source, levels)
              for source in classifiers}
    if frame_classifier and FILE_CLASSIFIER in labels:
        labels[FILE_CLASSIFIER] = frame_classifier
    if centroid_sources and len(sequences) < 2:
        raise LikelihoodError(LikelihoodError.TOO_FEW_CLASSES,
                              'held-out centroid training needs at least '
                              'two sequences')
    truths = [seq.truth for _, seq in sequences]
    inputs = {source: [classifier_inputs(seq.frames, source, levels)
                       for _, seq in sequences]
              for source in centroid_sources}

    def one(index):
        name, seq = sequences[index]
        is_branch = detect_sequence(seq.frames, params)
        rows = []
        for source in classifiers:
            if source == FILE_CLASSIFIER:
                likelihoods = seq.likelihoods
            else:
                likelihoods = held_out_likelihoods(
                    inputs[source], truths, index, tree,
                    thumb_size=thumb_size, temperature=temperature)
            results = run_variants(seq.frames, likelihoods, seq.truth, tree,
                                   transition, params, constrain_endpoints,
                                   name, is_branch=is_branch)
            rows.extend(ablation_rows(results, name, labels[source]))
        return rows

    indices = range(len(sequences))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_sequence = list(pool.map(one, indices))
    else:
        per_sequence = [one(i) for i in indices]
    rows = [row for chunk in per_sequence for row in chunk]
    return with_mean_rows(rows)
