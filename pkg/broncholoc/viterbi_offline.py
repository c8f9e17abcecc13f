"""
viterbi_offline.py

Offline HMM baseline: the single most probable node path over a whole
recorded sequence, starting at the trachea and (optionally) forced to end
there as well. Uses the same transition prior as the online filter.

"""
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import DecodeError
from .tree_model import TransitionModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DecodedPath:
    states: Tuple[int, ...]
    log_score: float

    def labels(self, tree) -> Tuple[str, ...]:
        return tuple(tree.nodes[i] for i in self.states)


def _log_emissions(likelihoods, n: int) -> np.ndarray:
    rows = np.asarray([np.asarray(getattr(v, 'probs', v), dtype=float)
                       for v in likelihoods])
    if rows.shape[0] == 0:
        raise DecodeError(DecodeError.EMPTY_SEQUENCE)
    if rows.ndim != 2 or rows.shape[1] != n:
        raise DecodeError(DecodeError.DIMENSION,
                          'likelihoods {0}, n={1}'.format(rows.shape, n))
    # per-frame scale does not change the best path; normalizing makes the
    # score independent of it too
    totals = rows.sum(axis=1, keepdims=True)
    if np.any(totals <= 0):
        raise DecodeError(DecodeError.DIMENSION, 'all-zero likelihood row')
    with np.errstate(divide='ignore'):
        return np.log(rows / totals)


def _log_transition(transition: TransitionModel) -> np.ndarray:
    with np.errstate(divide='ignore'):
        return np.log(transition.matrix)


def _check_root(root_index: int, n: int) -> None:
    if not 0 <= root_index < n:
        raise DecodeError(DecodeError.DIMENSION,
                          'root index {0} with n={1}'.format(root_index, n))


def viterbi_decode(likelihoods: Sequence, transition: TransitionModel,
                   constrain_endpoints: bool = True,
                   root_index: int = 0) -> DecodedPath:
    """
    Log-space Viterbi with a one-hot start at `root_index`.

    Args:
        `likelihoods` : T per-frame vectors (LikelihoodVector or arrays)
        `transition` (TransitionModel) : row-stochastic prior
    Kwargs:
        `constrain_endpoints` (bool) : backtrack from the root at t = T-1
        `root_index` (int) : index of the trachea node
    """
    n = transition.n
    _check_root(root_index, n)
    log_e = _log_emissions(likelihoods, n)
    log_t = _log_transition(transition)
    steps = log_e.shape[0]

    delta = np.full(n, -np.inf)
    delta[root_index] = log_e[0, root_index]
    back = np.zeros((steps, n), dtype=np.int64)
    for t in range(1, steps):
        scores = delta[:, None] + log_t
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(n)] + log_e[t]

    last = root_index if constrain_endpoints else int(np.argmax(delta))
    states = [last]
    for t in range(steps - 1, 0, -1):
        states.append(int(back[t, states[-1]]))
    states.reverse()
    logger.debug('decoded %d frames, log score %.6g', steps, delta[last])
    return DecodedPath(states=tuple(states), log_score=float(delta[last]))


def max_marginals(likelihoods: Sequence, transition: TransitionModel,
                  root_index: int = 0,
                  constrain_endpoints: bool = True) -> np.ndarray:
    """
    T x n table of the best path log score among paths that pass through
    node i at frame t. The row maximum equals the Viterbi score on every
    frame, and ranking a row gives per-frame Top-k for the HMM baseline.
    """
    n = transition.n
    _check_root(root_index, n)
    log_e = _log_emissions(likelihoods, n)
    log_t = _log_transition(transition)
    steps = log_e.shape[0]

    forward = np.full((steps, n), -np.inf)
    forward[0, root_index] = log_e[0, root_index]
    for t in range(1, steps):
        forward[t] = np.max(forward[t - 1][:, None] + log_t, axis=0) + log_e[t]

    backward = np.zeros((steps, n))
    if constrain_endpoints:
        backward[-1] = -np.inf
        backward[-1, root_index] = 0.0
    for t in range(steps - 2, -1, -1):
        backward[t] = np.max(log_t + (log_e[t + 1] + backward[t + 1])[None, :],
                             axis=1)
    return forward + backward
