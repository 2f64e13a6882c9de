"""DocNADE / iDocNADE likelihoods, hidden layers, gradients and document vectors.

A document ``v = [v_1 .. v_D]`` is scored autoregressively. The forward
network conditions word ``i`` on ``v_<i`` through

    h_fwd_i = g(s * c_fwd + sum_{k<i} W[:, v_k])

and the backward network on ``v_>i`` through

    h_bwd_i = g(s * c_bwd + sum_{k>i} W[:, v_k])

where ``s`` is D when length scaling is on and 1 otherwise. ``W`` and the
output weights ``U`` are shared by both directions; only the hidden biases
``c`` and the output biases ``b`` are direction specific. DocNADE scores the
forward chain only, iDocNADE the mean of the forward and backward chains.

Both directions are computed by one routine that walks the words in its own
reading order, so the backward pass over ``v`` is bit-for-bit the forward
pass over ``reversed(v)`` with the biases swapped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from docnade.hsoftmax import LOGIT_CLAMP, WordTree, log_sigmoid, path_logits, sigmoid

MODEL_KINDS = ("docnade", "idocnade")
OUTPUT_KINDS = ("tree", "flat")
ACTIVATIONS = ("sigmoid", "tanh")
OBJECTIVES = ("exact", "pseudo")


@dataclass
class ModelParams:
    W: np.ndarray
    U: np.ndarray
    b_fwd: np.ndarray
    b_bwd: np.ndarray
    c_fwd: np.ndarray
    c_bwd: np.ndarray
    output_kind: str = "tree"
    scaling: bool = False
    activation: str = "sigmoid"
    tree: WordTree | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("W", "U", "b_fwd", "b_bwd", "c_fwd", "c_bwd"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.output_kind not in OUTPUT_KINDS:
            raise ValueError(f"output_kind must be one of {OUTPUT_KINDS}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        H, K = self.W.shape
        n_out = K if self.output_kind == "flat" else K - 1
        if self.output_kind == "tree":
            if self.tree is None:
                raise ValueError("tree output requires a WordTree")
            if self.tree.K != K:
                raise ValueError("tree leaf count does not match vocabulary size")
        if self.U.shape != (n_out, H):
            raise ValueError(f"U must be {(n_out, H)}, got {self.U.shape}")
        for name in ("b_fwd", "b_bwd"):
            if getattr(self, name).shape != (n_out,):
                raise ValueError(f"{name} must have length {n_out}")
        for name in ("c_fwd", "c_bwd"):
            if getattr(self, name).shape != (H,):
                raise ValueError(f"{name} must have length {H}")

    @property
    def H(self) -> int:
        return self.W.shape[0]

    @property
    def K(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "ModelParams":
        return replace(self, W=self.W.copy(), U=self.U.copy(), b_fwd=self.b_fwd.copy(),
                       b_bwd=self.b_bwd.copy(), c_fwd=self.c_fwd.copy(), c_bwd=self.c_bwd.copy())

    def swapped_directions(self) -> "ModelParams":
        """Same model with forward and backward bias sets exchanged."""
        return replace(self, b_fwd=self.b_bwd.copy(), b_bwd=self.b_fwd.copy(),
                       c_fwd=self.c_bwd.copy(), c_bwd=self.c_fwd.copy())

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (self.W, self.U, self.b_fwd, self.b_bwd, self.c_fwd, self.c_bwd))


@dataclass
class Gradients:
    W: np.ndarray
    U: np.ndarray
    b_fwd: np.ndarray
    b_bwd: np.ndarray
    c_fwd: np.ndarray
    c_bwd: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in ("W", "U", "b_fwd", "b_bwd", "c_fwd", "c_bwd")}


@dataclass
class HiddenStates:
    """Per-position hidden layers, rows in document order (position i is row i)."""

    fwd: np.ndarray
    bwd: np.ndarray
    a_fwd: np.ndarray
    a_bwd: np.ndarray


def _words(doc) -> np.ndarray:
    words = getattr(doc, "words", doc)
    words = np.asarray(words, dtype=np.int64).reshape(-1)
    if words.shape[0] < 1:
        raise ValueError("document must contain at least one word")
    return words


def _activate(params: ModelParams, a):
    return sigmoid(a) if params.activation == "sigmoid" else np.tanh(a)


def _activation_slope(params: ModelParams, h):
    return h * (1.0 - h) if params.activation == "sigmoid" else 1.0 - h * h


def _scale(params: ModelParams, D: int) -> float:
    return float(D) if params.scaling else 1.0


def _exclusive_prefix(cols: np.ndarray) -> np.ndarray:
    """Row i holds cols[0] + ... + cols[i-1], accumulated left to right."""
    out = np.zeros_like(cols)
    if cols.shape[0] > 1:
        np.cumsum(cols[:-1], axis=0, out=out[1:])
    return out


def _exclusive_suffix(rows: np.ndarray) -> np.ndarray:
    """Row k holds rows[k+1] + ... + rows[-1]."""
    return _exclusive_prefix(rows[::-1])[::-1]


def _check_finite(arr, what="activation"):
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite {what}")


# --------------------------------------------------------------------------- output layer


def _output_logprobs(params: ModelParams, words, h, b):
    """log p(words[i] | h[i]) per row; also returns what the backward step needs."""
    if params.output_kind == "tree":
        tree = params.tree
        z = path_logits(tree, words, h, params.U, b)
        _check_finite(z, "output pre-activation")
        zc = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
        bits = tree.bits[words]
        mask = tree.mask[words]
        terms = np.where(mask, log_sigmoid(np.where(bits == 1, zc, -zc)), 0.0)
        return terms.sum(axis=1), (z, zc, bits, mask)
    logits = h @ params.U.T + b
    _check_finite(logits, "output pre-activation")
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    lse = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted[np.arange(len(words)), words] - lse
    return logp, (shifted, lse)


def word_distribution(params: ModelParams, h, direction: str = "fwd") -> np.ndarray:
    """p(w | h) over the whole vocabulary using one direction's output biases."""
    b = params.b_fwd if direction == "fwd" else params.b_bwd
    h = np.asarray(h, dtype=np.float64)
    _check_finite(h)
    words = np.arange(params.K)
    logp, _ = _output_logprobs(params, words, np.broadcast_to(h, (params.K, params.H)), b)
    return np.exp(logp)


def _output_backward(params: ModelParams, words, h, cache, weight):
    """Gradient of -weight * sum(logp) w.r.t. h, U and b (U/b as sparse row updates)."""
    if params.output_kind == "tree":
        z, zc, bits, mask = cache
        live = mask & (np.abs(z) <= LOGIT_CLAMP)
        dz = np.where(live, weight * (sigmoid(zc) - bits), 0.0)
        nodes = params.tree.nodes[words]
        dh = np.einsum("nm,nmh->nh", dz, params.U[nodes])
        dU_rows = dz[:, :, None] * h[:, None, :]
        return dh, (nodes.reshape(-1), dU_rows.reshape(-1, h.shape[1])), (nodes.reshape(-1), dz.reshape(-1))
    shifted, lse = cache
    p = np.exp(shifted - lse[:, None])
    p[np.arange(len(words)), words] -= 1.0
    dlogits = weight * p
    dh = dlogits @ params.U
    rows = np.arange(params.K)
    return dh, (rows, dlogits.T @ h), (rows, dlogits.sum(axis=0))


# --------------------------------------------------------------------------- one direction


def _chain(params: ModelParams, words, c, b, D):
    """Score `words` left to right, each conditioned on the words before it."""
    cols = params.W[:, words].T
    a = _scale(params, D) * c + _exclusive_prefix(cols)
    h = _activate(params, a)
    _check_finite(h)
    logp, cache = _output_logprobs(params, words, h, b)
    return logp, a, h, cache


def _chain_backward(params: ModelParams, words, h, cache, weight, D):
    dh, dU, db = _output_backward(params, words, h, cache, weight)
    da = dh * _activation_slope(params, h)
    dc = _scale(params, D) * da.sum(axis=0)
    # word k sits in the context of every later position in this reading order
    dW_cols = _exclusive_suffix(da)
    return dW_cols, dU, db, dc


# --------------------------------------------------------------------------- public API


def hidden_states(params: ModelParams, doc) -> HiddenStates:
    words = _words(doc)
    D = len(words)
    s = _scale(params, D)
    cols = params.W[:, words].T
    a_fwd = s * params.c_fwd + _exclusive_prefix(cols)
    a_bwd = (s * params.c_bwd + _exclusive_prefix(cols[::-1]))[::-1]
    fwd, bwd = _activate(params, a_fwd), _activate(params, a_bwd)
    _check_finite(fwd)
    _check_finite(bwd)
    return HiddenStates(fwd, bwd, a_fwd, a_bwd)


def forward_loglik(params: ModelParams, doc) -> float:
    words = _words(doc)
    logp, *_ = _chain(params, words, params.c_fwd, params.b_fwd, len(words))
    return math.fsum(logp)


def backward_loglik(params: ModelParams, doc) -> float:
    words = _words(doc)[::-1]
    logp, *_ = _chain(params, words, params.c_bwd, params.b_bwd, len(words))
    return math.fsum(logp)


def loglik_docnade(params: ModelParams, doc) -> float:
    """Sum over positions of log p(v_i | v_<i)."""
    return forward_loglik(params, doc)


def loglik_idocnade(params: ModelParams, doc) -> float:
    """Mean of the forward and backward chain log-likelihoods."""
    return 0.5 * (forward_loglik(params, doc) + backward_loglik(params, doc))


def _pseudo_chain(params: ModelParams, words):
    D = len(words)
    cols = params.W[:, words].T
    a = _scale(params, D) * params.c_fwd + (cols.sum(axis=0) - cols)
    h = _activate(params, a)
    _check_finite(h)
    logp, cache = _output_logprobs(params, words, h, params.b_fwd)
    return logp, h, cache


def loglik_pseudo(params: ModelParams, doc) -> float:
    """Sum of log p(v_i | v_{-i}) with one full-context hidden layer per position.

    Uses the forward bias set.
    """
    logp, _, _ = _pseudo_chain(params, _words(doc))
    return math.fsum(logp)


def loglik(params: ModelParams, doc, model_kind: str = "idocnade", objective: str = "exact") -> float:
    if objective == "pseudo":
        return loglik_pseudo(params, doc)
    if model_kind == "docnade":
        return loglik_docnade(params, doc)
    if model_kind == "idocnade":
        return loglik_idocnade(params, doc)
    raise ValueError(f"unknown model kind {model_kind!r}")


@dataclass
class SparseGradients:
    """Gradient with W columns, U rows and b entries as (index, value) lists.

    Indices may repeat; entries with the same index add up.
    """

    W_cols: tuple
    U_rows: tuple
    b_fwd: tuple
    b_bwd: tuple
    c_fwd: np.ndarray
    c_bwd: np.ndarray

    def to_dense(self, params: ModelParams) -> Gradients:
        dW = np.zeros_like(params.W)
        np.add.at(dW.T, self.W_cols[0], self.W_cols[1])
        dU = np.zeros_like(params.U)
        np.add.at(dU, self.U_rows[0], self.U_rows[1])
        db_f = np.zeros_like(params.b_fwd)
        np.add.at(db_f, self.b_fwd[0], self.b_fwd[1])
        db_b = np.zeros_like(params.b_bwd)
        np.add.at(db_b, self.b_bwd[0], self.b_bwd[1])
        return Gradients(dW, dU, db_f, db_b, self.c_fwd.copy(), self.c_bwd.copy())

    def apply(self, params: ModelParams, lr: float):
        """In-place SGD step params -= lr * grad."""
        np.add.at(params.W.T, self.W_cols[0], -lr * self.W_cols[1])
        np.add.at(params.U, self.U_rows[0], -lr * self.U_rows[1])
        np.add.at(params.b_fwd, self.b_fwd[0], -lr * self.b_fwd[1])
        np.add.at(params.b_bwd, self.b_bwd[0], -lr * self.b_bwd[1])
        params.c_fwd -= lr * self.c_fwd
        params.c_bwd -= lr * self.c_bwd


_EMPTY_IDX = np.zeros(0, dtype=np.int64)


def sparse_gradients(params: ModelParams, doc, fwd_weight: float, bwd_weight: float):
    """Gradient of -(fwd_weight * L_fwd + bwd_weight * L_bwd) plus the objective value.

    DocNADE is (1, 0) and iDocNADE (1/2, 1/2).
    """
    words = _words(doc)
    D = len(words)
    H = params.H
    loss = 0.0
    W_idx, W_val, U_idx, U_val = [], [], [], []
    empty_b = (_EMPTY_IDX, np.zeros(0))
    b_parts = {"fwd": empty_b, "bwd": empty_b}
    c_parts = {"fwd": np.zeros(H), "bwd": np.zeros(H)}
    for name, weight, seq, c, b in (
        ("fwd", fwd_weight, words, params.c_fwd, params.b_fwd),
        ("bwd", bwd_weight, words[::-1], params.c_bwd, params.b_bwd),
    ):
        if weight == 0.0:
            continue
        logp, _, h, cache = _chain(params, seq, c, b, D)
        loss -= weight * math.fsum(logp)
        dW_cols, dU, db, dc = _chain_backward(params, seq, h, cache, weight, D)
        W_idx.append(seq)
        W_val.append(dW_cols)
        U_idx.append(dU[0])
        U_val.append(dU[1])
        b_parts[name] = db
        c_parts[name] = dc
    grads = SparseGradients(
        (np.concatenate(W_idx), np.concatenate(W_val)),
        (np.concatenate(U_idx), np.concatenate(U_val)),
        b_parts["fwd"], b_parts["bwd"], c_parts["fwd"], c_parts["bwd"],
    )
    _check_finite(grads.W_cols[1], "gradient")
    _check_finite(grads.U_rows[1], "gradient")
    return grads, loss


def sparse_gradients_pseudo(params: ModelParams, doc):
    words = _words(doc)
    D = len(words)
    logp, h, cache = _pseudo_chain(params, words)
    dh, dU, db = _output_backward(params, words, h, cache, 1.0)
    da = dh * _activation_slope(params, h)
    dW_cols = da.sum(axis=0) - da
    grads = SparseGradients(
        (words, dW_cols), dU, db, (_EMPTY_IDX, np.zeros(0)),
        _scale(params, D) * da.sum(axis=0), np.zeros(params.H),
    )
    _check_finite(grads.W_cols[1], "gradient")
    return grads, -math.fsum(logp)


def gradients_idocnade(params: ModelParams, doc) -> Gradients:
    """Exact gradient of -loglik_idocnade(params, doc)."""
    return sparse_gradients(params, doc, 0.5, 0.5)[0].to_dense(params)


def gradients_docnade(params: ModelParams, doc) -> Gradients:
    """Exact gradient of -loglik_docnade(params, doc); backward parameters get zeros."""
    return sparse_gradients(params, doc, 1.0, 0.0)[0].to_dense(params)


def gradients_pseudo(params: ModelParams, doc) -> Gradients:
    return sparse_gradients_pseudo(params, doc)[0].to_dense(params)


def objective_gradients(params: ModelParams, doc, model_kind: str, objective: str = "exact"):
    """(SparseGradients, negative log-likelihood) for the training objective."""
    if objective == "pseudo":
        return sparse_gradients_pseudo(params, doc)
    if model_kind == "docnade":
        return sparse_gradients(params, doc, 1.0, 0.0)
    if model_kind == "idocnade":
        return sparse_gradients(params, doc, 0.5, 0.5)
    raise ValueError(f"unknown model kind {model_kind!r}")


def document_representation(params: ModelParams, doc, model_kind: str = "idocnade",
                            include_all_words: bool = False) -> np.ndarray:
    """Fixed-size vector for a document.

    iDocNADE sums the final forward hidden layer (all words but the last) and
    the final backward hidden layer (all words but the first); DocNADE uses
    the final forward layer alone. `include_all_words` puts every word in both
    context sums instead.
    """
    words = _words(doc)
    D = len(words)
    s = _scale(params, D)
    cols = params.W[:, words]
    fwd_ctx = cols.sum(axis=1) if include_all_words else cols[:, :-1].sum(axis=1)
    h_fwd = _activate(params, s * params.c_fwd + fwd_ctx)
    if model_kind == "docnade":
        rep = h_fwd
    elif model_kind == "idocnade":
        bwd_ctx = cols.sum(axis=1) if include_all_words else cols[:, 1:].sum(axis=1)
        rep = h_fwd + _activate(params, s * params.c_bwd + bwd_ctx)
    else:
        raise ValueError(f"unknown model kind {model_kind!r}")
    _check_finite(rep)
    return rep
