import math

import numpy as np
import pytest

from docnade.hsoftmax import build_tree, full_distribution, path_logprob


def _walk_depths(tree):
    # Independent enumeration: a word's depth is the length of its bit path and
    # the set of bit paths must be prefix-free and complete (Kraft sum 1).
    paths = [tuple(tree.path(w)[1]) for w in range(tree.K)]
    return paths, sorted(len(p) for p in paths)


def test_k4_full_balanced():
    tree = build_tree(4, seed=0)
    assert tree.T == 3
    assert tree.depth.tolist() == [2, 2, 2, 2]


def test_k5_depths_enumerated():
    tree = build_tree(5, seed=3)
    paths, depths = _walk_depths(tree)
    assert tree.T == 4
    # root splits 2|3, the 3 splits 1|2: leaves at depths 2,2,2,3,3
    assert depths == [2, 2, 2, 3, 3]
    assert max(depths) - min(depths) <= 1


@pytest.mark.parametrize("K", [2, 3, 7, 8, 50, 101])
def test_tree_structure(K):
    tree = build_tree(K, seed=K)
    paths, depths = _walk_depths(tree)
    assert len(set(paths)) == K
    assert math.isclose(sum(2.0 ** -d for d in depths), 1.0)
    for p in paths:
        for q in paths:
            if p != q:
                assert q[: len(p)] != p
    assert max(depths) - min(depths) <= 1
    internal = {n for w in range(K) for n in tree.path(w)[0]}
    assert internal == set(range(K - 1))
    assert all(tree.path(w)[0][0] == 0 for w in range(K))
    assert sorted(tree.leaf_of(w) for w in range(K)) == list(range(K))


def test_tree_is_deterministic_and_seeded():
    a, b = build_tree(13, seed=5), build_tree(13, seed=5)
    assert np.array_equal(a.nodes, b.nodes) and np.array_equal(a.bits, b.bits)
    c = build_tree(13, seed=6)
    assert [a.leaf_of(w) for w in range(13)] != [c.leaf_of(w) for w in range(13)]


def test_tree_needs_two_leaves():
    with pytest.raises(ValueError):
        build_tree(1)


@pytest.mark.parametrize("K,expected", [(4, math.log(0.25)), (8, math.log(1 / 8))])
def test_zero_params_uniform(K, expected):
    tree = build_tree(K, seed=1)
    H = 3
    for w in range(K):
        assert path_logprob(tree, w, np.ones(H), np.zeros((K - 1, H)), np.zeros(K - 1)) == pytest.approx(expected, abs=1e-15)
    assert np.allclose(full_distribution(tree, np.ones(H), np.zeros((K - 1, H)), np.zeros(K - 1)), 1 / K)


def test_path_logprob_matches_direct_product():
    rng = np.random.default_rng(0)
    tree = build_tree(6, seed=2)
    U, b, h = rng.normal(size=(5, 3)), rng.normal(size=5), rng.normal(size=3)
    for w in range(6):
        nodes, bits = tree.path(w)
        p = 1.0
        for n, bit in zip(nodes, bits):
            right = 1.0 / (1.0 + math.exp(-(b[n] + U[n] @ h)))
            p *= right if bit else 1 - right
        assert path_logprob(tree, w, h, U, b) == pytest.approx(math.log(p), abs=1e-12)


def test_two_leaf_tree():
    tree = build_tree(2, seed=0)
    b = np.array([math.log(0.7 / 0.3)])
    dist = full_distribution(tree, np.zeros(1), np.zeros((1, 1)), b)
    right_word = [w for w in range(2) if tree.path(w)[1] == [1]][0]
    assert dist[right_word] == pytest.approx(0.7, abs=1e-15)
    assert dist[1 - right_word] == pytest.approx(0.3, abs=1e-15)


def test_normalisation_random():
    rng = np.random.default_rng(1)
    for _ in range(100):
        K, H = int(rng.integers(2, 60)), int(rng.integers(1, 9))
        tree = build_tree(K, int(rng.integers(1000)))
        U, b, h = rng.normal(0, 2, (K - 1, H)), rng.normal(0, 2, K - 1), rng.normal(0, 2, H)
        assert abs(full_distribution(tree, h, U, b).sum() - 1.0) < 1e-10


def test_extreme_inputs_stay_finite():
    tree = build_tree(8, seed=0)
    U = np.full((7, 2), 1e6)
    for w in range(8):
        assert np.isfinite(path_logprob(tree, w, np.ones(2), U, np.zeros(7)))


def test_non_finite_hidden_rejected():
    tree = build_tree(4)
    with pytest.raises(FloatingPointError, match="non-finite activation"):
        path_logprob(tree, 0, np.array([np.nan, 0.0]), np.zeros((3, 2)), np.zeros(3))
