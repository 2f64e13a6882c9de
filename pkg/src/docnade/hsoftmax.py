"""Binary word tree for hierarchical-softmax conditionals.

Every word sits at one leaf of a balanced full binary tree. The probability
of a word given a hidden vector ``h`` is the product of the binary decisions
along its root-to-leaf path; the decision at internal node ``n`` goes right
(bit 1) with probability ``sigmoid(b[n] + U[n] @ h)``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

# Pre-activations are clamped to this range before any log-sigmoid; gradients
# treat the clamp as part of the function (zero slope outside).
LOGIT_CLAMP = 30.0


def log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class WordTree:
    """Per-word paths through the tree.

    ``nodes[w, :depth[w]]`` are internal-node ids from the root down to the
    leaf's parent and ``bits[w, :depth[w]]`` the matching left(0)/right(1)
    choices. Entries past ``depth[w]`` are padding (node 0, bit 0, mask False).
    """

    K: int
    seed: int
    depth: np.ndarray
    nodes: np.ndarray
    bits: np.ndarray
    mask: np.ndarray

    @property
    def T(self) -> int:
        return self.K - 1

    @property
    def max_depth(self) -> int:
        return int(self.nodes.shape[1])

    def path(self, word: int) -> tuple[list[int], list[int]]:
        d = int(self.depth[word])
        return self.nodes[word, :d].tolist(), self.bits[word, :d].tolist()

    def leaf_of(self, word: int) -> int:
        """Leaf index counted left to right, recovered by following the path bits."""
        lo, hi = 0, self.K
        for bit in self.bits[word, : self.depth[word]]:
            mid = lo + (hi - lo) // 2
            lo, hi = (mid, hi) if bit else (lo, mid)
        return lo

    @classmethod
    def from_arrays(cls, K, seed, depth, nodes, bits) -> "WordTree":
        depth = np.asarray(depth, dtype=np.int64)
        nodes = np.asarray(nodes, dtype=np.int64)
        bits = np.asarray(bits, dtype=np.int64)
        mask = np.arange(nodes.shape[1])[None, :] < depth[:, None]
        for a in (depth, nodes, bits, mask):
            a.setflags(write=False)
        return cls(int(K), int(seed), depth, nodes, bits, mask)


def _leaf_paths(K: int) -> list[tuple[list[int], list[int]]]:
    # Breadth-first node numbering: the root is 0 and ids are dense in [0, K-1).
    paths: list = [None] * K
    queue = deque([(0, K, [], [])])
    next_id = 0
    while queue:
        lo, hi, nodes, bits = queue.popleft()
        if hi - lo == 1:
            paths[lo] = (nodes, bits)
            continue
        node = next_id
        next_id += 1
        mid = lo + (hi - lo) // 2
        queue.append((lo, mid, nodes + [node], bits + [0]))
        queue.append((mid, hi, nodes + [node], bits + [1]))
    assert next_id == K - 1
    return paths


def build_tree(K: int, seed: int = 0) -> WordTree:
    """Balanced tree over K leaves with a seeded random word-to-leaf assignment."""
    if K < 2:
        raise ValueError("a word tree needs K >= 2 (use the flat softmax for K=1)")
    paths = _leaf_paths(K)
    leaf_word = np.random.default_rng(seed).permutation(K)
    max_d = max(len(p[0]) for p in paths)
    depth = np.zeros(K, dtype=np.int64)
    nodes = np.zeros((K, max_d), dtype=np.int64)
    bits = np.zeros((K, max_d), dtype=np.int64)
    for leaf, (pn, pb) in enumerate(paths):
        w = leaf_word[leaf]
        depth[w] = len(pn)
        nodes[w, : len(pn)] = pn
        bits[w, : len(pb)] = pb
    return WordTree.from_arrays(K, seed, depth, nodes, bits)


def path_logits(tree: WordTree, words: np.ndarray, hidden: np.ndarray, U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unclamped node pre-activations, shape (n, max_depth), for word i scored under hidden[i]."""
    nodes = tree.nodes[words]
    return b[nodes] + np.einsum("nmh,nh->nm", U[nodes], hidden)


def path_logprobs(tree: WordTree, words: np.ndarray, hidden: np.ndarray, U: np.ndarray, b: np.ndarray):
    """Vectorised path log-probabilities.

    Returns ``(logp, z)`` with ``logp[i] = log p(words[i] | hidden[i])`` and
    the raw node pre-activations ``z`` (needed for gradients).
    """
    z = path_logits(tree, words, hidden, U, b)
    zc = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
    signed = np.where(tree.bits[words] == 1, zc, -zc)
    terms = np.where(tree.mask[words], log_sigmoid(signed), 0.0)
    return terms.sum(axis=1), z


def path_logprob(tree: WordTree, word: int, hidden, U, b) -> float:
    hidden = np.asarray(hidden, dtype=np.float64)
    if not np.all(np.isfinite(hidden)):
        raise FloatingPointError("non-finite activation")
    if not 0 <= word < tree.K:
        raise IndexError(f"word {word} outside vocabulary of size {tree.K}")
    logp, _ = path_logprobs(tree, np.array([word]), hidden[None, :], U, b)
    return float(logp[0])


def full_distribution(tree: WordTree, hidden, U, b) -> np.ndarray:
    """p(w | hidden) for every word w; sums to one over the leaves."""
    hidden = np.asarray(hidden, dtype=np.float64)
    if not np.all(np.isfinite(hidden)):
        raise FloatingPointError("non-finite activation")
    words = np.arange(tree.K)
    logp, _ = path_logprobs(tree, words, np.broadcast_to(hidden, (tree.K, hidden.shape[0])), U, b)
    return np.exp(logp)


def tree_to_dict(tree: WordTree) -> dict:
    return {
        "K": tree.K,
        "seed": tree.seed,
        "depth": tree.depth.tolist(),
        "nodes": [tree.path(w)[0] for w in range(tree.K)],
        "bits": [tree.path(w)[1] for w in range(tree.K)],
    }
