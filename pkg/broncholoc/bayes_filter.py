"""
bayes_filter.py

Contains the recursive discrete Bayes filter over tree nodes:

    predicted(t)  = posterior(t-1) @ T
    posterior(t)  = eta * likelihood(t) * predicted(t)   (gated)

The posterior starts one-hot at the trachea. Under the `branch` gate policy
the likelihood is only applied on frames where the branching-point detector
fired; on every other frame the prediction is kept as-is.

"""
import enum
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import FilterError
from .likelihood import LikelihoodVector
from .tree_model import TransitionModel, TreeModel

logger = logging.getLogger(__name__)


class GatePolicy(enum.Enum):
    BRANCH = 'branch'
    ALWAYS = 'always'
    NEVER = 'never'

    @classmethod
    def parse(cls, value) -> 'GatePolicy':
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise FilterError(FilterError.BAD_POLICY, repr(value))

    def applies(self, is_branch: bool) -> bool:
        """Whether the likelihood update runs on this frame."""
        if self is GatePolicy.ALWAYS:
            return True
        if self is GatePolicy.NEVER:
            return False
        return bool(is_branch)


@dataclass(frozen=True)
class Posterior:
    probs: np.ndarray
    t: int = 0

    def argmax(self) -> int:
        return int(np.argmax(self.probs))


@dataclass(frozen=True)
class FilterState:
    posterior: Posterior
    transition: TransitionModel
    gate_policy: GatePolicy = GatePolicy.BRANCH


def _vector(v) -> np.ndarray:
    return np.asarray(getattr(v, 'probs', v), dtype=float)


def _frozen(probs: np.ndarray) -> np.ndarray:
    probs.setflags(write=False)
    return probs


def init_posterior(tree: TreeModel) -> Posterior:
    probs = np.zeros(tree.n)
    probs[tree.root_index] = 1.0
    return Posterior(_frozen(probs), t=0)


def predict(posterior, transition: TransitionModel) -> np.ndarray:
    """
    One-step prediction through the transition prior. The result is
    renormalized so rounding cannot accumulate over long runs.
    """
    probs = _vector(posterior)
    if probs.ndim != 1 or probs.shape[0] != transition.n:
        raise FilterError(FilterError.DIMENSION,
                          'posterior {0} vs transition {1}'.format(
                              probs.shape, transition.matrix.shape))
    predicted = probs @ transition.matrix
    return predicted / predicted.sum()


def update(predicted, likelihood, t: int = 0) -> Posterior:
    prior = _vector(predicted)
    lik = _vector(likelihood)
    if prior.shape != lik.shape:
        raise FilterError(FilterError.DIMENSION,
                          'predicted {0} vs likelihood {1}'.format(
                              prior.shape, lik.shape))
    product = prior * lik
    total = product.sum()
    if not total > 0:
        raise FilterError(FilterError.ZERO_EVIDENCE, 'frame {0}'.format(t))
    return Posterior(_frozen(product / total), t=t)


def step(state: FilterState, likelihood: Optional[LikelihoodVector],
         is_branch: bool) -> FilterState:
    """
    Advances the filter by one frame. `likelihood` may be None when the gate
    policy will not use it (e.g. `never`, or `branch` on a non-branch frame).
    """
    t = state.posterior.t + 1
    predicted = predict(state.posterior, state.transition)
    if state.gate_policy.applies(is_branch):
        if likelihood is None:
            raise FilterError(FilterError.DIMENSION,
                              'frame {0}: update needs a likelihood'.format(t))
        posterior = update(predicted, likelihood, t=t)
    else:
        posterior = Posterior(_frozen(predicted), t=t)
    return FilterState(posterior=posterior, transition=state.transition,
                       gate_policy=state.gate_policy)


def top_k(posterior, k: int) -> List[Tuple[int, float]]:
    """k most probable nodes, descending; ties go to the lower index."""
    probs = _vector(posterior)
    if not 1 <= k <= probs.shape[0]:
        raise FilterError(FilterError.BAD_K,
                          'k={0} with n={1}'.format(k, probs.shape[0]))
    order = np.argsort(-probs, kind='stable')[:k]
    return [(int(i), float(probs[i])) for i in order]


def run_filter(likelihoods: Sequence, is_branch: Sequence[bool],
               transition: TransitionModel, root_index: int,
               policy=GatePolicy.BRANCH) -> np.ndarray:
    """
    Batch run over a whole sequence. Row 0 is the one-hot initialization
    (frame 0's likelihood is not applied); row t >= 1 is the posterior after
    frame t.
    """
    policy = GatePolicy.parse(policy)
    if len(likelihoods) != len(is_branch):
        raise FilterError(FilterError.DIMENSION,
                          '{0} likelihoods, {1} gate flags'.format(
                              len(likelihoods), len(is_branch)))
    probs = np.zeros(transition.n)
    probs[root_index] = 1.0
    state = FilterState(Posterior(_frozen(probs)), transition, policy)
    out = np.empty((len(likelihoods), transition.n))
    if len(likelihoods):
        out[0] = state.posterior.probs
    for t in range(1, len(likelihoods)):
        state = step(state, likelihoods[t], is_branch[t])
        out[t] = state.posterior.probs
    return out


class LocalizationFilter(object):
    """
    Stateful, streaming wrapper around the pure filter operations. Feed it
    frames in order with `step` and read `posterior` after each one.
    """

    def __init__(self, tree: TreeModel, transition: TransitionModel,
                 policy=GatePolicy.BRANCH, debug=False):
        """
        Args:
            `tree` (TreeModel) : airway tree, defines node order
            `transition` (TransitionModel) : prior built on the same tree
        Kwargs:
            `policy` : GatePolicy or one of 'branch', 'always', 'never'
            `debug` (bool) : log every call and its arguments at DEBUG level
        """
        if transition.n != tree.n:
            raise FilterError(FilterError.DIMENSION,
                              'tree n={0}, transition n={1}'.format(
                                  tree.n, transition.n))
        self.tree = tree
        self.transition = transition
        self.policy = GatePolicy.parse(policy)
        self.debug = debug
        self.reset()

    def _log_call(self, f_name, f_locals):
        if self.debug:
            args = {k: v for k, v in f_locals.items() if k != 'self'}
            logger.debug('-> {0}: {1}'.format(f_name, args))

    def _log_debug(self, msg):
        if self.debug:
            logger.debug(msg)

    def reset(self) -> Posterior:
        self._log_call('reset', locals())
        self.state = FilterState(init_posterior(self.tree), self.transition,
                                 self.policy)
        return self.state.posterior

    @property
    def posterior(self) -> Posterior:
        return self.state.posterior

    @property
    def t(self) -> int:
        return self.state.posterior.t

    def step(self, likelihood=None, is_branch=False) -> Posterior:
        self._log_call('step', locals())
        self.state = step(self.state, likelihood, is_branch)
        self._log_debug('t={0} gate={1} top={2}'.format(
            self.t, self.policy.applies(is_branch),
            self.tree.nodes[self.posterior.argmax()]))
        return self.state.posterior

    def top_k(self, k: int) -> List[Tuple[int, float]]:
        return top_k(self.state.posterior, k)

    def top_labels(self, k: int) -> List[Tuple[str, float]]:
        return [(self.tree.nodes[i], p) for i, p in self.top_k(k)]
