import itertools
import logging

import numpy as np
import pytest

from broncholoc.bayes_filter import (FilterState, GatePolicy,
                                     LocalizationFilter, Posterior,
                                     init_posterior, predict, run_filter, step,
                                     top_k, update)
from broncholoc.errors import FilterError
from broncholoc.likelihood import normalize
from broncholoc.tree_model import TreeModel, transition_matrix
from conftest import make_random_tree, random_likelihoods


def brute_force_filter(likelihoods, gates, matrix, root_index):
    """Plain nested loops, no vectorization."""
    n = len(matrix)
    post = [0.0] * n
    post[root_index] = 1.0
    rows = [list(post)]
    for t in range(1, len(likelihoods)):
        pred = [sum(post[j] * matrix[j][i] for j in range(n))
                for i in range(n)]
        total = sum(pred)
        pred = [p / total for p in pred]
        if gates[t]:
            prod = [pred[i] * likelihoods[t][i] for i in range(n)]
            total = sum(prod)
            post = [p / total for p in prod]
        else:
            post = pred
        rows.append(list(post))
    return np.array(rows)


def path_sum_filter(likelihoods, gates, matrix, root_index):
    """
    Marginal of every frame from a sum over all state paths that start at
    the root: weight = transitions times the likelihoods of gated frames.
    """
    steps, n = likelihoods.shape
    paths = np.array([(root_index,) + tail for tail in
                      itertools.product(range(n), repeat=steps - 1)])
    weight = np.ones(len(paths))
    rows = []
    for t in range(steps):
        if t > 0:
            weight = weight * matrix[paths[:, t - 1], paths[:, t]]
            if gates[t]:
                weight = weight * likelihoods[t, paths[:, t]]
        # every prefix is repeated equally often, so normalizing removes it
        marginal = np.bincount(paths[:, t], weights=weight, minlength=n)
        rows.append(marginal / marginal.sum())
    return np.array(rows)


def permuted_tree(tree, perm):
    """Same tree with node k of the result being node perm[k] of `tree`."""
    inverse = np.argsort(perm)
    return TreeModel(nodes=tuple(tree.nodes[p] for p in perm),
                     edges=tuple((int(inverse[a]), int(inverse[b]))
                                 for a, b in tree.edges),
                     root_index=int(inverse[tree.root_index]))


# ---------------------------------------------------------------------------
# predict / update examples
# ---------------------------------------------------------------------------

def test_predict_from_trachea(tree2):
    prior = transition_matrix(tree2, 1e-9, 1)
    predicted = predict(init_posterior(tree2), prior)
    assert predicted[0] - 0.5 == pytest.approx(2.5e-10, rel=1e-4)
    assert predicted[1] == pytest.approx(0.5 - 2.5e-10, abs=1e-15)


def test_predict_one_hot_gives_prior_row(tree15):
    prior = transition_matrix(tree15, 1e-9, 1)
    for j in range(tree15.n):
        one_hot = np.zeros(tree15.n)
        one_hot[j] = 1.0
        assert np.allclose(predict(one_hot, prior), prior.matrix[j],
                           rtol=0, atol=1e-15)


def test_predict_uniform_on_symmetric_tree(tree2):
    # both rows of the 2-node prior are the same distribution reversed
    prior = transition_matrix(tree2, 1e-9, 1)
    assert np.allclose(predict(np.array([0.5, 0.5]), prior), [0.5, 0.5],
                       rtol=0, atol=1e-15)


def test_update_examples():
    uniform = np.ones(3) / 3
    assert np.allclose(update(uniform, normalize([0.8, 0.1, 0.1])).probs,
                       [0.8, 0.1, 0.1])
    absorbed = update(np.array([0.0, 1.0, 0.0]), normalize([0.7, 0.1, 0.2]))
    assert np.array_equal(absorbed.probs, [0.0, 1.0, 0.0])


def test_uniform_likelihood_is_neutral(tree15, rng):
    prior = transition_matrix(tree15, 1e-9, 1)
    start = Posterior(rng.dirichlet(np.ones(tree15.n)))
    state = FilterState(start, prior, GatePolicy.BRANCH)
    flat = normalize(np.ones(tree15.n))
    gated = step(state, flat, is_branch=True).posterior.probs
    assert np.allclose(gated, predict(start, prior), rtol=0, atol=1e-15)


def test_update_example():
    posterior = update(np.array([0.5, 0.5]), normalize([0.9, 0.1]), t=3)
    assert np.allclose(posterior.probs, [0.9, 0.1])
    assert posterior.t == 3


def test_update_with_disjoint_support():
    with pytest.raises(FilterError) as info:
        update(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    assert info.value.err_code == FilterError.ZERO_EVIDENCE


def test_dimension_mismatch(tree3, tree2):
    prior = transition_matrix(tree2, 1e-9, 1)
    with pytest.raises(FilterError) as info:
        predict(init_posterior(tree3), prior)
    assert info.value.err_code == FilterError.DIMENSION
    with pytest.raises(FilterError):
        update(np.ones(3) / 3, normalize([1, 1]))


def test_init_posterior_is_one_hot(tree15):
    posterior = init_posterior(tree15)
    assert posterior.probs[tree15.root_index] == 1.0
    assert posterior.probs.sum() == 1.0
    assert posterior.t == 0


# ---------------------------------------------------------------------------
# gating
# ---------------------------------------------------------------------------

@pytest.mark.parametrize('value, policy', [
    ('branch', GatePolicy.BRANCH), ('ALWAYS', GatePolicy.ALWAYS),
    (GatePolicy.NEVER, GatePolicy.NEVER),
])
def test_parse_policy(value, policy):
    assert GatePolicy.parse(value) is policy


def test_unknown_policy():
    with pytest.raises(FilterError) as info:
        GatePolicy.parse('sometimes')
    assert info.value.err_code == FilterError.BAD_POLICY


def test_non_update_step_equals_predict(tree3, rng):
    prior = transition_matrix(tree3, 1e-9, 1)
    state = FilterState(Posterior(np.array([0.2, 0.3, 0.5])), prior,
                        GatePolicy.BRANCH)
    after = step(state, normalize(rng.random(3)), is_branch=False)
    assert np.array_equal(after.posterior.probs, predict(state.posterior,
                                                         prior))
    assert after.posterior.t == 1
    # the likelihood is not needed at all when the gate is closed
    assert np.array_equal(step(state, None, False).posterior.probs,
                          after.posterior.probs)


def test_update_needs_likelihood(tree3):
    prior = transition_matrix(tree3, 1e-9, 1)
    state = FilterState(init_posterior(tree3), prior, GatePolicy.ALWAYS)
    with pytest.raises(FilterError):
        step(state, None, False)


def test_gate_policies_agree_at_extremes(tree15, rng):
    prior = transition_matrix(tree15, 1e-9, 1)
    liks = random_likelihoods(rng, 40, tree15.n)
    root = tree15.root_index
    all_on, all_off = [True] * 40, [False] * 40
    assert np.array_equal(run_filter(liks, all_on, prior, root, 'branch'),
                          run_filter(liks, all_off, prior, root, 'always'))
    assert np.array_equal(run_filter(liks, all_off, prior, root, 'branch'),
                          run_filter(liks, all_on, prior, root, 'never'))


# ---------------------------------------------------------------------------
# run_filter against the brute-force oracle
# ---------------------------------------------------------------------------

def test_matches_brute_force():
    rng = np.random.default_rng(17)
    for _ in range(100):
        tree = make_random_tree(rng, int(rng.integers(2, 9)))
        prior = transition_matrix(tree, 1e-9, int(rng.integers(0, 3)))
        steps = int(rng.integers(1, 25))
        liks = random_likelihoods(rng, steps, tree.n)
        gates = list(rng.random(steps) < 0.5)
        policy = rng.choice(['branch', 'always', 'never'])
        expected_gates = {'branch': gates, 'always': [True] * steps,
                          'never': [False] * steps}[policy]
        got = run_filter(liks, gates, prior, tree.root_index, policy)
        expected = brute_force_filter(liks, expected_gates,
                                      prior.matrix.tolist(), tree.root_index)
        assert got.shape == (steps, tree.n)
        assert np.max(np.abs(got - expected)) <= 1e-9


def test_matches_sum_over_state_paths():
    rng = np.random.default_rng(41)
    for _ in range(120):
        tree = make_random_tree(rng, int(rng.integers(2, 6)))
        alpha = rng.choice([1e-9, 1e-3, 0.5 / (tree.diameter + 1)])
        prior = transition_matrix(tree, alpha, int(rng.integers(0, 3)))
        steps = int(rng.integers(1, 9))
        liks = random_likelihoods(rng, steps, tree.n)
        gates = list(rng.random(steps) < 0.5)
        got = run_filter(liks, gates, prior, tree.root_index, 'branch')
        expected = path_sum_filter(liks, gates, prior.matrix, tree.root_index)
        assert np.max(np.abs(got - expected)) <= 1e-9
        always = run_filter(liks, gates, prior, tree.root_index, 'always')
        assert np.max(np.abs(always - path_sum_filter(
            liks, [True] * steps, prior.matrix, tree.root_index))) <= 1e-9


def test_first_row_is_initialization(tree3):
    prior = transition_matrix(tree3, 1e-9, 1)
    liks = np.array([[0.0, 1.0, 0.0], [1.0, 1.0, 1.0]])
    out = run_filter(liks, [True, True], prior, 0, 'always')
    assert np.array_equal(out[0], [1.0, 0.0, 0.0])


def test_long_run_stays_normalized(tree15):
    rng = np.random.default_rng(0)
    prior = transition_matrix(tree15, 1e-9, 1)
    liks = random_likelihoods(rng, 10000, tree15.n)
    out = run_filter(liks, [True] * 10000, prior, tree15.root_index, 'always')
    assert np.all(np.abs(out.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all(out >= 0)


def test_node_order_does_not_matter():
    rng = np.random.default_rng(23)
    for _ in range(30):
        tree = make_random_tree(rng, int(rng.integers(2, 9)))
        perm = rng.permutation(tree.n)
        other = permuted_tree(tree, perm)
        steps = 15
        liks = random_likelihoods(rng, steps, tree.n)
        gates = list(rng.random(steps) < 0.5)
        out = run_filter(liks, gates, transition_matrix(tree, 1e-9, 1),
                         tree.root_index)
        out_perm = run_filter(liks[:, perm], gates,
                              transition_matrix(other, 1e-9, 1),
                              other.root_index)
        assert np.allclose(out_perm, out[:, perm], rtol=0, atol=1e-12)


def test_length_mismatch(tree3):
    prior = transition_matrix(tree3, 1e-9, 1)
    with pytest.raises(FilterError):
        run_filter(np.ones((3, 3)), [True, False], prior, 0)


# ---------------------------------------------------------------------------
# top_k
# ---------------------------------------------------------------------------

def test_top_k_examples():
    assert top_k(np.array([0.5, 0.3, 0.2]), 2) == [(0, 0.5), (1, 0.3)]
    assert top_k(np.ones(3) / 3, 1) == [(0, 1 / 3)]


def test_top_k_ties_go_to_lower_index():
    probs = np.array([0.1, 0.3, 0.3, 0.2, 0.1])
    assert top_k(probs, 3) == [(1, 0.3), (2, 0.3), (3, 0.2)]
    assert [i for i, _ in top_k(probs, 5)] == [1, 2, 3, 0, 4]


@pytest.mark.parametrize('k', [0, 6])
def test_top_k_out_of_range(k):
    with pytest.raises(FilterError) as info:
        top_k(np.ones(5) / 5, k)
    assert info.value.err_code == FilterError.BAD_K


# ---------------------------------------------------------------------------
# LocalizationFilter
# ---------------------------------------------------------------------------

def test_streaming_filter_matches_batch(tree15, rng):
    prior = transition_matrix(tree15, 1e-9, 1)
    liks = random_likelihoods(rng, 25, tree15.n)
    gates = list(rng.random(25) < 0.4)
    batch = run_filter(liks, gates, prior, tree15.root_index, 'branch')
    filt = LocalizationFilter(tree15, prior, policy='branch')
    assert np.array_equal(filt.posterior.probs, batch[0])
    for t in range(1, 25):
        posterior = filt.step(normalize(liks[t]), gates[t])
        assert posterior.t == t == filt.t
        assert np.allclose(posterior.probs, batch[t], rtol=0, atol=1e-15)
    labels = filt.top_labels(3)
    assert len(labels) == 3
    assert labels[0][0] == tree15.nodes[filt.posterior.argmax()]
    filt.reset()
    assert filt.t == 0
    assert filt.posterior.argmax() == tree15.root_index


def test_filter_rejects_mismatched_prior(tree15, tree3):
    with pytest.raises(FilterError):
        LocalizationFilter(tree15, transition_matrix(tree3, 1e-9, 1))


def test_debug_logging(tree3, caplog):
    prior = transition_matrix(tree3, 1e-9, 1)
    filt = LocalizationFilter(tree3, prior, policy='never', debug=True)
    with caplog.at_level(logging.DEBUG, logger='broncholoc.bayes_filter'):
        filt.step()
    assert any('-> step' in r.getMessage() for r in caplog.records)
    assert any('t=1 gate=False' in r.getMessage() for r in caplog.records)
