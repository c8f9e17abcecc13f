import hypothesis
import numpy as np
import pytest

from broncholoc.tree_model import TreeModel, default_tree

hypothesis.settings.register_profile('fast', max_examples=10, deadline=None)
hypothesis.settings.register_profile('default_ci', max_examples=50,
                                     deadline=None)
hypothesis.settings.load_profile('default_ci')


def make_random_tree(rng, n):
    """
    Random labelled tree on n nodes. The root is 'TRA', other nodes 'N<i>',
    and node order is shuffled so the root is not always index 0.
    """
    parents = [None] + [int(rng.integers(i)) for i in range(1, n)]
    order = rng.permutation(n)              # position of logical node i
    labels = [None] * n
    labels[order[0]] = 'TRA'
    for i in range(1, n):
        labels[order[i]] = 'N{0}'.format(i)
    edges = [(int(order[i]), int(order[parents[i]])) for i in range(1, n)]
    return TreeModel(nodes=tuple(labels), edges=tuple(edges),
                     root_index=int(order[0]))


def make_three_node_tree():
    return TreeModel(nodes=('TRA', 'RMB', 'LMB'), edges=((0, 1), (0, 2)),
                     root_index=0)


def make_two_node_tree():
    return TreeModel(nodes=('TRA', 'RMB'), edges=((0, 1),), root_index=0)


def random_likelihoods(rng, steps, n):
    """Strictly positive rows summing to one."""
    return rng.dirichlet(np.ones(n), size=steps)


def disc(shape, center, radius):
    rr, cc = np.ogrid[:shape[0], :shape[1]]
    return (rr - center[0]) ** 2 + (cc - center[1]) ** 2 <= radius ** 2


@pytest.fixture(scope='session')
def tree15():
    return default_tree()


@pytest.fixture
def tree3():
    return make_three_node_tree()


@pytest.fixture
def tree2():
    return make_two_node_tree()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
