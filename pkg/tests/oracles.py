"""Slow, definition-level reference computations used as test oracles.

Everything here is written with explicit Python loops straight from the model
definitions and shares no code with the vectorised implementation beyond the
parameter container and the tree's path lists.
"""

import math

import numpy as np

from docnade.hsoftmax import build_tree
from docnade.model import ModelParams


def random_params(rng, K, H, output_kind="tree", scaling=False, activation="sigmoid", scale=0.7):
    n_out = K - 1 if output_kind == "tree" else K
    tree = build_tree(K, int(rng.integers(1 << 30))) if output_kind == "tree" else None
    return ModelParams(
        W=rng.normal(0, scale, (H, K)),
        U=rng.normal(0, scale, (n_out, H)),
        b_fwd=rng.normal(0, 0.5, n_out),
        b_bwd=rng.normal(0, 0.5, n_out),
        c_fwd=rng.normal(0, 0.3, H),
        c_bwd=rng.normal(0, 0.3, H),
        output_kind=output_kind,
        scaling=scaling,
        activation=activation,
        tree=tree,
    )


def g(params, x):
    if params.activation == "sigmoid":
        return 1.0 / (1.0 + math.exp(-x))
    return math.tanh(x)


def naive_hidden(params, words, i, direction, bias=None):
    """Hidden vector at position i from its context, recomputed from scratch (O(DH))."""
    D = len(words)
    s = D if params.scaling else 1.0
    if direction == "fwd":
        ctx = [words[k] for k in range(i)]
        c = params.c_fwd if bias is None else bias
    elif direction == "bwd":
        ctx = [words[k] for k in range(i + 1, D)]
        c = params.c_bwd if bias is None else bias
    else:  # full context, pseudo-likelihood
        ctx = [words[k] for k in range(D) if k != i]
        c = params.c_fwd if bias is None else bias
    out = np.empty(params.H)
    for j in range(params.H):
        a = s * c[j]
        for w in ctx:
            a += params.W[j, w]
        out[j] = g(params, a)
    return out


def naive_conditional(params, h, w, b):
    """p(w | h) by direct product over the tree path or direct softmax."""
    if params.output_kind == "flat":
        scores = [math.exp(b[v] + float(np.dot(params.U[v], h))) for v in range(params.K)]
        return scores[w] / sum(scores)
    nodes, bits = params.tree.path(w)
    p = 1.0
    for n, bit in zip(nodes, bits):
        z = b[n] + float(np.dot(params.U[n], h))
        right = 1.0 / (1.0 + math.exp(-z))
        p *= right if bit == 1 else 1.0 - right
    return p


def naive_loglik(params, words, model_kind):
    words = list(words)
    fwd = sum(math.log(naive_conditional(params, naive_hidden(params, words, i, "fwd"), w, params.b_fwd))
              for i, w in enumerate(words))
    if model_kind == "docnade":
        return fwd
    bwd = sum(math.log(naive_conditional(params, naive_hidden(params, words, i, "bwd"), w, params.b_bwd))
              for i, w in enumerate(words))
    return 0.5 * (fwd + bwd)


def naive_pseudo(params, words):
    words = list(words)
    return sum(math.log(naive_conditional(params, naive_hidden(params, words, i, "full"), w, params.b_fwd))
               for i, w in enumerate(words))


PARAM_NAMES = ("W", "U", "b_fwd", "b_bwd", "c_fwd", "c_bwd")


def finite_difference_grads(f, params, step=1e-5):
    """Central differences of f(params) for every parameter entry."""
    out = {}
    for name in PARAM_NAMES:
        arr = getattr(params, name)
        grad = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + step
            fp = f(params)
            arr[idx] = old - step
            fm = f(params)
            arr[idx] = old
            grad[idx] = (fp - fm) / (2 * step)
        out[name] = grad
    return out


# Denominator floor for the relative error: entries below it are compared in
# absolute terms (|diff| < tol * floor), where central-difference round-off
# (~1e-10 here) would otherwise dominate.
REL_FLOOR = 1e-3


def max_relative_error(analytic: dict, numeric: dict, floor=REL_FLOOR) -> float:
    worst = 0.0
    for name, a in analytic.items():
        n = numeric[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)) if a.size else 0.0)
    return worst
