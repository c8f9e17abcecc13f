"""
tree_model.py

Contains the generic airway tree (`TreeModel`), the line-oriented tree spec
reader/writer, and the transition prior built from hop distances.

Tree spec grammar (UTF-8, one directive per line, `#` starts a comment):

    node <label>
    edge <labelA> <labelB>
    root <label>

Labels are whitespace-free. Node order in the file is node index order.

"""
import logging
from dataclasses import dataclass, field
from importlib import resources
from typing import List, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import TreeParseError, TreeValidationError

logger = logging.getLogger(__name__)

ROOT_LABEL = 'TRA'
BUNDLED_TREE = 'bronchial_tree_15.txt'


@dataclass(frozen=True)
class TreeModel:
    """
    Undirected airway tree over labelled nodes. Immutable; the hop distance
    matrix is computed once at construction.
    """

    nodes: Tuple[str, ...]
    edges: Tuple[Tuple[int, int], ...]
    root_index: int
    _distances: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'nodes', tuple(self.nodes))
        object.__setattr__(self, 'edges',
                           tuple((int(a), int(b)) for a, b in self.edges))
        n = len(self.nodes)
        if n < 2:
            raise TreeValidationError(TreeValidationError.TOO_FEW_NODES,
                                      'n={0}'.format(n))
        seen = set()
        for label in self.nodes:
            if label in seen:
                raise TreeValidationError(
                    TreeValidationError.DUPLICATE_LABEL, label)
            seen.add(label)
        if not 0 <= self.root_index < n:
            raise TreeValidationError(TreeValidationError.BAD_INDEX,
                                      'root_index={0}'.format(self.root_index))
        if self.nodes[self.root_index] != ROOT_LABEL:
            raise TreeValidationError(TreeValidationError.BAD_ROOT,
                                      self.nodes[self.root_index])
        for a, b in self.edges:
            if not (0 <= a < n and 0 <= b < n):
                raise TreeValidationError(TreeValidationError.BAD_INDEX,
                                          'edge ({0}, {1})'.format(a, b))
        # duplicate edges and self-loops would be collapsed by nx.Graph
        pairs = {frozenset(e) for e in self.edges}
        if len(pairs) != len(self.edges) or any(a == b for a, b in self.edges):
            raise TreeValidationError(TreeValidationError.NOT_A_TREE,
                                      'repeated edge or self-loop')
        graph = self.graph()
        if not nx.is_tree(graph):
            raise TreeValidationError(TreeValidationError.NOT_A_TREE,
                                      'cycle or disconnected component')
        dist = np.zeros((n, n), dtype=np.int64)
        for i, lengths in nx.all_pairs_shortest_path_length(graph):
            for j, hops in lengths.items():
                dist[i, j] = hops
        dist.setflags(write=False)
        object.__setattr__(self, '_distances', dist)

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(len(self.nodes)))
        g.add_edges_from(self.edges)
        return g

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> str:
        return self.nodes[self.root_index]

    @property
    def distances(self) -> np.ndarray:
        """Read-only n x n hop distance matrix."""
        return self._distances

    @property
    def diameter(self) -> int:
        return int(self._distances.max())

    def index(self, label: str) -> int:
        try:
            return self.nodes.index(label)
        except ValueError:
            raise TreeValidationError(TreeValidationError.BAD_INDEX,
                                      'unknown label {0!r}'.format(label))

    def neighbors(self, i: int) -> List[int]:
        return [j for j in range(self.n) if self._distances[i, j] == 1]

    def depth(self, i: int) -> int:
        return int(self._distances[self.root_index, i])

    def parent(self, i: int):
        """Neighbor one hop closer to the root, or None for the root."""
        if i == self.root_index:
            return None
        d = self.depth(i)
        return next(j for j in self.neighbors(i) if self.depth(j) == d - 1)

    def children(self, i: int) -> List[int]:
        d = self.depth(i)
        return [j for j in self.neighbors(i) if self.depth(j) == d + 1]


@dataclass(frozen=True)
class TransitionModel:
    """
    Row-stochastic prior: `matrix[j, i]` = p(S_t = i | S_{t-1} = j).
    """

    matrix: np.ndarray
    alpha: float
    m: int

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _check_index(tree: TreeModel, i: int) -> None:
    if not 0 <= i < tree.n:
        raise TreeValidationError(TreeValidationError.BAD_INDEX,
                                  'index {0} with n={1}'.format(i, tree.n))


def node_distance(tree: TreeModel, i: int, j: int) -> int:
    """Hop count along the unique tree path between nodes i and j."""
    _check_index(tree, i)
    _check_index(tree, j)
    return int(tree.distances[i, j])


def transition_matrix(tree: TreeModel, alpha: float, m: int) -> TransitionModel:
    """
    Builds the normalized bronchoscopy transition prior.

    Unnormalized entry (j, i) is 1 - alpha*(d+1) when d(i, j) <= m and
    alpha*(d+1) otherwise; each row is then divided by its sum.

    Args:
        `tree` (TreeModel) : airway tree
        `alpha` (float) : penalty, must lie in (0, 1/(diameter+1))
        `m` (int) : largest hop distance that is not penalized
    """
    upper = 1.0 / (tree.diameter + 1)
    if not (0.0 < alpha < upper):
        raise TreeValidationError(
            TreeValidationError.BAD_ALPHA,
            'alpha={0} not in (0, {1})'.format(alpha, upper))
    if m < 0:
        raise TreeValidationError(TreeValidationError.BAD_M, 'm={0}'.format(m))
    d = tree.distances.astype(float)
    weights = np.where(d <= m, 1.0 - alpha * (d + 1.0), alpha * (d + 1.0))
    matrix = weights / weights.sum(axis=1, keepdims=True)
    matrix.setflags(write=False)
    return TransitionModel(matrix=matrix, alpha=float(alpha), m=int(m))


def load_tree(spec_text: str) -> TreeModel:
    """
    Parses tree spec text and returns a validated `TreeModel`.

    Raises `TreeParseError` for malformed text and `TreeValidationError`
    when the declared graph is not a TRA-rooted tree.
    """
    labels = []
    edge_labels = []
    root = None
    for lineno, raw in enumerate(spec_text.splitlines(), start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        directive, args = fields[0], fields[1:]
        where = 'line {0}: {1}'.format(lineno, raw.strip())
        if directive == 'node':
            if len(args) != 1:
                raise TreeParseError(TreeParseError.BAD_ARITY, where)
            labels.append(args[0])
        elif directive == 'edge':
            if len(args) != 2:
                raise TreeParseError(TreeParseError.BAD_ARITY, where)
            edge_labels.append((args[0], args[1], where))
        elif directive == 'root':
            if len(args) != 1:
                raise TreeParseError(TreeParseError.BAD_ARITY, where)
            if root is not None:
                raise TreeParseError(TreeParseError.MULTIPLE_ROOTS, where)
            root = args[0]
        else:
            raise TreeParseError(TreeParseError.UNKNOWN_DIRECTIVE, where)

    lookup = {}
    for i, label in enumerate(labels):
        if label in lookup:
            raise TreeValidationError(TreeValidationError.DUPLICATE_LABEL,
                                      label)
        lookup[label] = i
    edges = []
    for a, b, where in edge_labels:
        if a not in lookup or b not in lookup:
            raise TreeParseError(TreeParseError.UNDECLARED_NODE, where)
        edges.append((lookup[a], lookup[b]))
    if root is None:
        raise TreeValidationError(TreeValidationError.BAD_ROOT,
                                  'no root declared')
    if root not in lookup:
        raise TreeParseError(TreeParseError.UNDECLARED_NODE,
                             'root {0}'.format(root))
    tree = TreeModel(nodes=tuple(labels), edges=tuple(edges),
                     root_index=lookup[root])
    logger.debug('parsed tree with %d nodes, diameter %d', tree.n,
                 tree.diameter)
    return tree


def dump_tree(tree: TreeModel) -> str:
    """Canonical spec text; load_tree(dump_tree(t)) reproduces t."""
    lines = ['root {0}'.format(tree.root)]
    lines += ['node {0}'.format(label) for label in tree.nodes]
    lines += ['edge {0} {1}'.format(tree.nodes[a], tree.nodes[b])
              for a, b in tree.edges]
    return '\n'.join(lines) + '\n'


def load_tree_file(path) -> TreeModel:
    with open(path, 'r', encoding='utf-8') as handle:
        return load_tree(handle.read())


def save_tree_file(tree: TreeModel, path) -> None:
    with open(path, 'w', encoding='utf-8', newline='\n') as handle:
        handle.write(dump_tree(tree))


def default_tree() -> TreeModel:
    """The bundled 15-node bronchial tree."""
    text = resources.files('broncholoc.data').joinpath(BUNDLED_TREE) \
        .read_text(encoding='utf-8')
    return load_tree(text)


def random_descending_walk(tree: TreeModel, depth: int, rng) -> List[int]:
    """
    Walk from the root choosing a uniformly random child at each step.
    Stops early when a leaf is reached.
    """
    walk = [tree.root_index]
    for _ in range(depth):
        children = tree.children(walk[-1])
        if not children:
            break
        walk.append(int(children[int(rng.integers(len(children)))]))
    return walk


def walk_labels(tree: TreeModel, walk: Sequence[int]) -> List[str]:
    return [tree.nodes[i] for i in walk]
