"""Compiled single-document SGD steps for the exact objectives.

Each step computes the full gradient of
``-(w_fwd * L_fwd + w_bwd * L_bwd)`` at the current parameters and only then
applies ``param -= lr * grad``, so it is the same update as
``SparseGradients.apply`` on the reference numpy gradients.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

CLAMP = 30.0


@njit(cache=True, inline="always")
def _act(a, kind):
    if kind == 0:
        return 0.5 * (1.0 + math.tanh(0.5 * a))
    return math.tanh(a)


@njit(cache=True, inline="always")
def _slope(h, kind):
    if kind == 0:
        return h * (1.0 - h)
    return 1.0 - h * h


@njit(cache=True, inline="always")
def _log_sigmoid(z):
    if z >= 0:
        return -math.log1p(math.exp(-z))
    return z - math.log1p(math.exp(z))


@njit(cache=True)
def sgd_step_tree(W, U, b_f, b_b, c_f, c_b, words, nodes, bits, depth, scaling, act, w_f, w_b, lr):
    H = W.shape[0]
    D = words.shape[0]
    maxd = nodes.shape[1]
    s = float(D) if scaling else 1.0
    hs = np.zeros((2, D, H))
    da = np.zeros((2, D, H))
    dz = np.zeros((2, D, maxd))
    prefix = np.empty(H)
    dh = np.empty(H)
    nll = 0.0
    for d in range(2):
        weight = w_f if d == 0 else w_b
        if weight == 0.0:
            continue
        c = c_f if d == 0 else c_b
        b = b_f if d == 0 else b_b
        prefix[:] = 0.0
        for t in range(D):
            i = t if d == 0 else D - 1 - t
            w = words[i]
            for k in range(H):
                hs[d, t, k] = _act(s * c[k] + prefix[k], act)
            dh[:] = 0.0
            lp = 0.0
            for m in range(depth[w]):
                n = nodes[w, m]
                z = b[n]
                for k in range(H):
                    z += U[n, k] * hs[d, t, k]
                zc = min(max(z, -CLAMP), CLAMP)
                if bits[w, m] == 1:
                    lp += _log_sigmoid(zc)
                else:
                    lp += _log_sigmoid(-zc)
                if abs(z) <= CLAMP:
                    g = weight * (0.5 * (1.0 + math.tanh(0.5 * zc)) - bits[w, m])
                    dz[d, t, m] = g
                    for k in range(H):
                        dh[k] += g * U[n, k]
            if not math.isfinite(lp):
                return math.nan
            nll -= weight * lp
            for k in range(H):
                da[d, t, k] = dh[k] * _slope(hs[d, t, k], act)
                prefix[k] += W[k, w]
    # apply the update only after every gradient term is known
    for d in range(2):
        weight = w_f if d == 0 else w_b
        if weight == 0.0:
            continue
        c = c_f if d == 0 else c_b
        b = b_f if d == 0 else b_b
        prefix[:] = 0.0
        for t in range(D - 1, -1, -1):
            i = t if d == 0 else D - 1 - t
            w = words[i]
            for k in range(H):
                W[k, w] -= lr * prefix[k]
            for k in range(H):
                prefix[k] += da[d, t, k]
            for m in range(depth[w]):
                g = dz[d, t, m]
                if g != 0.0:
                    n = nodes[w, m]
                    b[n] -= lr * g
                    for k in range(H):
                        U[n, k] -= lr * g * hs[d, t, k]
        for k in range(H):
            c[k] -= lr * s * prefix[k]
    return nll


@njit(cache=True)
def sgd_step_flat(W, U, b_f, b_b, c_f, c_b, words, scaling, act, w_f, w_b, lr):
    H = W.shape[0]
    K = W.shape[1]
    D = words.shape[0]
    s = float(D) if scaling else 1.0
    hs = np.zeros((2, D, H))
    da = np.zeros((2, D, H))
    dl = np.zeros((2, D, K))
    prefix = np.empty(H)
    logits = np.empty(K)
    nll = 0.0
    for d in range(2):
        weight = w_f if d == 0 else w_b
        if weight == 0.0:
            continue
        c = c_f if d == 0 else c_b
        b = b_f if d == 0 else b_b
        prefix[:] = 0.0
        for t in range(D):
            i = t if d == 0 else D - 1 - t
            w = words[i]
            for k in range(H):
                hs[d, t, k] = _act(s * c[k] + prefix[k], act)
            mx = -np.inf
            for j in range(K):
                z = b[j]
                for k in range(H):
                    z += U[j, k] * hs[d, t, k]
                logits[j] = z
                if z > mx:
                    mx = z
            tot = 0.0
            for j in range(K):
                tot += math.exp(logits[j] - mx)
            lse = math.log(tot)
            lp = logits[w] - mx - lse
            if not math.isfinite(lp):
                return math.nan
            nll -= weight * lp
            for j in range(K):
                dl[d, t, j] = weight * math.exp(logits[j] - mx - lse)
            dl[d, t, w] -= weight
            for k in range(H):
                acc = 0.0
                for j in range(K):
                    acc += dl[d, t, j] * U[j, k]
                da[d, t, k] = acc * _slope(hs[d, t, k], act)
                prefix[k] += W[k, w]
    for d in range(2):
        weight = w_f if d == 0 else w_b
        if weight == 0.0:
            continue
        c = c_f if d == 0 else c_b
        b = b_f if d == 0 else b_b
        prefix[:] = 0.0
        for t in range(D - 1, -1, -1):
            i = t if d == 0 else D - 1 - t
            w = words[i]
            for k in range(H):
                W[k, w] -= lr * prefix[k]
            for k in range(H):
                prefix[k] += da[d, t, k]
            for j in range(K):
                g = dl[d, t, j]
                b[j] -= lr * g
                for k in range(H):
                    U[j, k] -= lr * g * hs[d, t, k]
        for k in range(H):
            c[k] -= lr * s * prefix[k]
    return nll


def sgd_step(params, words: np.ndarray, w_fwd: float, w_bwd: float, lr: float) -> float:
    """In-place SGD step on one document; returns the pre-update objective (NaN on overflow)."""
    act = 0 if params.activation == "sigmoid" else 1
    words = np.ascontiguousarray(words, dtype=np.int64)
    if params.output_kind == "tree":
        t = params.tree
        return sgd_step_tree(params.W, params.U, params.b_fwd, params.b_bwd, params.c_fwd, params.c_bwd,
                             words, t.nodes, t.bits, t.depth, params.scaling, act, w_fwd, w_bwd, lr)
    return sgd_step_flat(params.W, params.U, params.b_fwd, params.b_bwd, params.c_fwd, params.c_bwd,
                         words, params.scaling, act, w_fwd, w_bwd, lr)
