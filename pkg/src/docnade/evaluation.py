"""Held-out perplexity, retrieval, categorisation, topics, coherence and word neighbours.

Every function accepts either a :class:`~docnade.checkpoint.Checkpoint` or a
bare :class:`~docnade.model.ModelParams` (then ``model_kind`` must be given).
"""

from __future__ import annotations

import difflib
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from docnade.corpus import Corpus, Document
from docnade.model import ModelParams, document_representation, loglik

logger = logging.getLogger(__name__)

# Fractions of the training set retrieved per query, as plotted for the retrieval curves.
DEFAULT_FRACTIONS = (0.0001, 0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3)
DEFAULT_L2_GRID = (0.01, 0.1, 1.0, 10.0)


class UnknownWordError(KeyError):
    def __str__(self):
        return str(self.args[0])


@dataclass
class EvalReport:
    metric: str
    values: dict
    config_fingerprint: str = ""
    fractions: list | None = None
    per_label: dict | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"metric": self.metric, "values": self.values, "config_fingerprint": self.config_fingerprint,
             "meta": self.meta}
        if self.fractions is not None:
            d["fractions"] = self.fractions
        if self.per_label is not None:
            d["per_label"] = self.per_label
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        rows = [(str(k), _fmt(v)) for k, v in self.values.items()]
        if self.per_label:
            rows += [(f"label:{k}", _fmt(v)) for k, v in self.per_label.items()]
        width = max([len(k) for k, _ in rows] + [len(self.metric)])
        lines = [f"{self.metric:<{width}}  ({self.config_fingerprint})"]
        lines += [f"{k:<{width}}  {v}" for k, v in rows]
        return "\n".join(lines)

    def ir_csv(self) -> str:
        if self.fractions is None:
            raise ValueError("not a retrieval report")
        return "fraction,precision\n" + "".join(
            f"{f!r},{self.values[str(f)]!r}\n" for f in self.fractions)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _resolve(model, model_kind=None):
    """(params, model_kind, include_all_words) for a checkpoint or bare params."""
    if isinstance(model, ModelParams):
        if model_kind is None:
            raise ValueError("model_kind is required with bare ModelParams")
        return model, model_kind, False
    cfg = model.config
    return model.params, model_kind or cfg.model_kind, cfg.include_all_words


def _fingerprint(model) -> str:
    cfg = getattr(model, "config", None)
    return cfg.fingerprint() if cfg is not None else ""


def _docs(model, data, split):
    if isinstance(data, Corpus):
        if hasattr(model, "check_vocab"):
            model.check_vocab(data.vocab)
        return data.split(split), data.rejected.get(split, 0)
    return list(data), 0


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("NADE_THREADS", "1") or 1)
    return max(1, int(threads))


def _map(fn, items, threads):
    if threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------- perplexity


def document_logliks(params: ModelParams, docs: Sequence, model_kind: str, threads: int | None = None,
                     objective: str = "exact") -> np.ndarray:
    return np.array(_map(lambda d: loglik(params, d, model_kind, objective), list(docs), resolve_threads(threads)))


def perplexity_from_logliks(logliks, lengths) -> float:
    """exp(-(1/N) * sum_t log p(v_t) / |v_t|)."""
    per_word = [float(ll) / int(n) for ll, n in zip(logliks, lengths)]
    if not per_word:
        raise ValueError("perplexity of an empty split")
    return math.exp(-math.fsum(per_word) / len(per_word))


def perplexity(model, data, split: str = "test", model_kind: str | None = None,
               threads: int | None = None) -> float:
    """Average per-word held-out perplexity.

    `data` is a Corpus (its vocabulary must match the checkpoint and `split`
    picks the documents) or a plain sequence of documents.
    """
    params, kind, _ = _resolve(model, model_kind)
    docs, _ = _docs(model, data, split)
    if not docs:
        raise ValueError(f"split {split!r} has no documents")
    lls = document_logliks(params, docs, kind, threads)
    return perplexity_from_logliks(lls, [len(getattr(d, "words", d)) for d in docs])


def perplexity_report(model, corpus: Corpus, split: str = "test", threads: int | None = None) -> EvalReport:
    params, kind, _ = _resolve(model)
    docs, rejected = _docs(model, corpus, split)
    ppl = perplexity(params, docs, model_kind=kind, threads=threads)
    return EvalReport("perplexity", {"ppl": ppl, "documents": len(docs), "excluded_documents": rejected,
                                     "words": int(sum(d.D for d in docs))},
                      _fingerprint(model), meta={"split": split, "model_kind": kind})


# --------------------------------------------------------------------------- retrieval


def representations(model, docs: Sequence, model_kind: str | None = None, threads: int | None = None) -> np.ndarray:
    params, kind, include_all = _resolve(model, model_kind)
    rows = _map(lambda d: document_representation(params, d, kind, include_all), list(docs),
                resolve_threads(threads))
    return np.array(rows).reshape(len(rows), params.H)


def _unit_rows(X: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    zero = norms[:, 0] == 0
    if zero.any():
        logger.warning("%d %s representations have zero norm; their cosine is taken as 0", int(zero.sum()), what)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


def retrieved_count(fraction: float, n_train: int) -> int:
    # guard against products like 0.07 * 100 = 7.000000000000001
    return min(n_train, max(1, math.ceil(fraction * n_train - 1e-9)))


def precision_at_fractions(query_reps: np.ndarray, query_labels: Sequence, train_reps: np.ndarray,
                           train_labels: Sequence, fractions: Sequence[float]) -> list[float]:
    """Mean over queries of label precision among the nearest training documents.

    Neighbours are ranked by cosine similarity (ties by training index). A
    query with several labels scores the mean of its per-label precisions.
    """
    for f in fractions:
        if not 0 < f <= 1:
            raise ValueError(f"fraction {f} outside (0, 1]")
    n_train = len(train_labels)
    label_ids = sorted({l for ls in train_labels for l in ls} | {l for ls in query_labels for l in ls})
    col = {l: j for j, l in enumerate(label_ids)}
    Y = np.zeros((n_train, len(label_ids)))
    for i, ls in enumerate(train_labels):
        Y[i, [col[l] for l in ls]] = 1.0
    sims = _unit_rows(query_reps, "query") @ _unit_rows(train_reps, "training").T
    counts = [retrieved_count(f, n_train) for f in fractions]
    totals = np.zeros(len(fractions))
    for q, labels in enumerate(query_labels):
        if not labels:
            raise ValueError(f"query {q} has no labels")
        order = np.argsort(-sims[q], kind="stable")
        hits = np.cumsum(Y[order][:, [col[l] for l in labels]], axis=0)
        for j, n in enumerate(counts):
            totals[j] += float(np.mean(hits[n - 1] / n))
    return (totals / len(query_labels)).tolist()


def retrieval_precision(model, train_docs: Sequence[Document], query_docs: Sequence[Document],
                        fractions: Sequence[float] = DEFAULT_FRACTIONS, model_kind: str | None = None,
                        threads: int | None = None) -> dict[float, float]:
    train_reps = representations(model, train_docs, model_kind, threads)
    query_reps = representations(model, query_docs, model_kind, threads)
    prec = precision_at_fractions(query_reps, [d.labels for d in query_docs], train_reps,
                                  [d.labels for d in train_docs], fractions)
    return dict(zip(fractions, prec))


def retrieval_report(model, corpus: Corpus, fractions=DEFAULT_FRACTIONS, query_split: str = "test",
                     threads: int | None = None) -> EvalReport:
    if hasattr(model, "check_vocab"):
        model.check_vocab(corpus.vocab)
    res = retrieval_precision(model, corpus.train, corpus.split(query_split), fractions, threads=threads)
    return EvalReport("retrieval_precision", {str(f): p for f, p in res.items()}, _fingerprint(model),
                      fractions=list(fractions), meta={"query_split": query_split})


# --------------------------------------------------------------------------- classification


def _softmax(Z):
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


@dataclass
class LogisticModel:
    """Multinomial (or one-vs-rest binary) L2 logistic regression on standardised features."""

    classes: np.ndarray
    weights: np.ndarray
    bias: np.ndarray
    mean: np.ndarray
    scale: np.ndarray
    binary: bool
    iterations: int = 0

    def _z(self, X):
        return ((np.asarray(X, dtype=np.float64) - self.mean) / self.scale) @ self.weights + self.bias

    def predict_proba(self, X):
        z = self._z(X)
        return 0.5 * (1.0 + np.tanh(0.5 * z)) if self.binary else _softmax(z)

    def predict(self, X):
        return self.classes[np.argmax(self._z(X), axis=1)]


def _standardise(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (X - mean) / scale, mean, scale


def fit_logistic(X, Y, l2: float, binary: bool = False, tol: float = 1e-6, max_iter: int = 5000):
    """Full-batch gradient descent on mean cross-entropy + (l2/2)*||weights||^2.

    `Y` is an (n, C) 0/1 target matrix: one-hot for the multinomial model,
    independent columns for ``binary=True`` (one-vs-rest). Stops when the
    gradient norm drops below `tol` or after `max_iter` steps. Returns
    (weights, bias, iterations).
    """
    n, d = X.shape
    C = Y.shape[1]
    # Lipschitz constant of the gradient: curvature of the loss is at most 1/2
    # (softmax) or 1/4 (sigmoid) times the squared spectral norm of [X, 1] / n.
    Xa = np.hstack([X, np.ones((n, 1))])
    curvature = 0.25 if binary else 0.5
    lip = curvature * np.linalg.norm(Xa, 2) ** 2 / n + l2
    step = 1.0 / lip
    Wb = np.zeros((d + 1, C))
    reg = np.full((d + 1, 1), l2)
    reg[-1] = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        Z = Xa @ Wb
        P = 0.5 * (1.0 + np.tanh(0.5 * Z)) if binary else _softmax(Z)
        G = Xa.T @ (P - Y) / n + reg * Wb
        if np.linalg.norm(G) < tol:
            break
        Wb -= step * G
    return Wb[:-1], Wb[-1], it


def train_classifier(X, labels: Sequence[Sequence[int]], l2: float, multilabel: bool = False) -> LogisticModel:
    X = np.asarray(X, dtype=np.float64)
    Xs, mean, scale = _standardise(X)
    classes = np.array(sorted({l for ls in labels for l in ls}))
    col = {c: j for j, c in enumerate(classes)}
    Y = np.zeros((len(labels), len(classes)))
    for i, ls in enumerate(labels):
        if not multilabel and len(ls) != 1:
            raise ValueError("single-label classification needs exactly one label per document")
        Y[i, [col[l] for l in ls]] = 1.0
    W, b, it = fit_logistic(Xs, Y, l2, binary=multilabel)
    return LogisticModel(classes, W, b, mean, scale, multilabel, it)


def predict_labels(clf: LogisticModel, X) -> list[tuple[int, ...]]:
    if not clf.binary:
        return [(int(c),) for c in clf.predict(X)]
    P = clf.predict_proba(X)
    out = []
    for row in P:
        chosen = np.flatnonzero(row >= 0.5)
        if chosen.size == 0:
            chosen = [int(np.argmax(row))]
        out.append(tuple(int(clf.classes[j]) for j in chosen))
    return out


def classification_scores(true: Sequence[Sequence[int]], pred: Sequence[Sequence[int]]):
    """(macro F1, accuracy, per-label F1). Accuracy is exact label-set match."""
    labels = sorted({l for ls in true for l in ls} | {l for ls in pred for l in ls})
    per_label = {}
    for l in labels:
        tp = sum(1 for t, p in zip(true, pred) if l in t and l in p)
        fp = sum(1 for t, p in zip(true, pred) if l not in t and l in p)
        fn = sum(1 for t, p in zip(true, pred) if l in t and l not in p)
        per_label[l] = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
    macro = float(np.mean(list(per_label.values()))) if per_label else 0.0
    acc = float(np.mean([set(t) == set(p) for t, p in zip(true, pred)]))
    return macro, acc, per_label


def bag_of_vectors(W: np.ndarray, docs: Sequence) -> np.ndarray:
    """Document features: the sum of the document's word columns of W."""
    return np.array([W[:, np.asarray(getattr(d, "words", d))].sum(axis=1) for d in docs]).reshape(len(docs), W.shape[0])


def classify(model, corpus: Corpus, l2_grid: Sequence[float] = DEFAULT_L2_GRID, multilabel: bool | None = None,
             eval_split: str = "test") -> EvalReport:
    """Train L2 logistic regression on summed word vectors; pick l2 by dev macro-F1."""
    params, _, _ = _resolve(model, "idocnade")
    if hasattr(model, "check_vocab"):
        model.check_vocab(corpus.vocab)
    train, dev, test = corpus.train, corpus.dev, corpus.split(eval_split)
    if not train or not test:
        raise ValueError("classification needs train and evaluation documents")
    if multilabel is None:
        multilabel = any(len(d.labels) > 1 for d in corpus.documents)
    X_train = bag_of_vectors(params.W, train)
    y_train = [d.labels for d in train]
    known = {l for ls in y_train for l in ls}
    unseen = {l for d in test for l in d.labels} - known
    if unseen:
        logger.warning("%d evaluation labels never occur in training and are always wrong", len(unseen))

    select_on = dev if dev else train
    X_sel = bag_of_vectors(params.W, select_on)
    best = None
    grid_scores = {}
    for l2 in l2_grid:
        clf = train_classifier(X_train, y_train, l2, multilabel)
        f1, _, _ = classification_scores([d.labels for d in select_on], predict_labels(clf, X_sel))
        grid_scores[str(l2)] = f1
        if best is None or f1 > best[0]:
            best = (f1, l2, clf)
    _, l2, clf = best
    pred = predict_labels(clf, bag_of_vectors(params.W, test))
    f1, acc, per_label = classification_scores([d.labels for d in test], pred)
    names = corpus.label_names
    per_label_named = {(names[l] if l < len(names) else str(l)): v for l, v in per_label.items()}
    return EvalReport("classification", {"f1_macro": f1, "accuracy": acc, "l2": l2},
                      _fingerprint(model), per_label=per_label_named,
                      meta={"multilabel": multilabel, "dev_f1_by_l2": grid_scores,
                            "unseen_labels": len(unseen), "eval_split": eval_split})


# --------------------------------------------------------------------------- topics and coherence


@dataclass
class Topic:
    topic_id: int
    words: list[int]
    tokens: list[str] | None = None
    coherence: float | None = None


def topic_words(model, top_n: int = 10, vocab=None) -> list[Topic]:
    """Topic j = the top_n largest entries of row j of W, ties broken by word id."""
    params, _, _ = _resolve(model, "idocnade")
    vocab = vocab if vocab is not None else getattr(model, "vocab", None)
    if top_n > params.K:
        raise ValueError("top_n exceeds vocabulary size")
    ids = np.arange(params.K)
    topics = []
    for j, row in enumerate(params.W):
        top = np.lexsort((ids, -row))[:top_n].tolist()
        topics.append(Topic(j, top, vocab.decode(top) if vocab is not None else None))
    return topics


def window_counts(reference: Sequence, words: Sequence[int], window: int):
    """Sliding-window document frequencies.

    Returns (n_windows, counts[a], joint[a, b]) over the given word ids, where
    a window is every run of `window` consecutive tokens (a shorter document
    is a single window).
    """
    words = list(dict.fromkeys(int(w) for w in words))
    col = {w: j for j, w in enumerate(words)}
    n_windows = 0
    counts = np.zeros(len(words))
    joint = np.zeros((len(words), len(words)))
    for doc in reference:
        seq = np.asarray(getattr(doc, "words", doc))
        D = len(seq)
        if D == 0:
            continue
        onehot = np.zeros((D, len(words)))
        for pos, w in enumerate(seq.tolist()):
            j = col.get(w)
            if j is not None:
                onehot[pos, j] = 1.0
        if D <= window:
            present = (onehot.sum(axis=0, keepdims=True) > 0).astype(float)
        else:
            cs = np.vstack([np.zeros((1, len(words))), np.cumsum(onehot, axis=0)])
            present = ((cs[window:] - cs[:-window]) > 0).astype(float)
        n_windows += present.shape[0]
        counts += present.sum(axis=0)
        joint += present.T @ present
    return n_windows, counts, joint, col


def npmi(p_a: float, p_b: float, p_ab: float, eps: float = 1e-12) -> float:
    if p_ab <= 0:
        return -1.0
    denom = -math.log(p_ab + eps)
    if denom <= eps:
        return 1.0
    value = math.log((p_ab + eps) / (p_a * p_b)) / denom
    return min(1.0, max(-1.0, value))


def coherence_npmi(topics: Sequence, reference: Sequence, window: int = 10, eps: float = 1e-12):
    """Per-topic mean pairwise NPMI over the topic's words and the mean over topics.

    `topics` holds Topic objects or word-id lists. Pairs involving a word that
    never occurs in the reference corpus are skipped.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    if len(reference) == 0:
        raise ValueError("empty reference corpus")
    word_lists = [list(t.words) if isinstance(t, Topic) else list(t) for t in topics]
    vocab_needed = [w for ws in word_lists for w in ws]
    n, counts, joint, col = window_counts(reference, vocab_needed, window)
    if n == 0:
        raise ValueError("reference corpus has no windows")
    scores = []
    skipped = 0
    for ws in word_lists:
        pair_scores = []
        for i in range(len(ws)):
            for j in range(i + 1, len(ws)):
                a, b = col[int(ws[i])], col[int(ws[j])]
                if counts[a] == 0 or counts[b] == 0:
                    skipped += 1
                    continue
                pair_scores.append(npmi(counts[a] / n, counts[b] / n, joint[a, b] / n, eps))
        scores.append(float(np.mean(pair_scores)) if pair_scores else float("nan"))
    if skipped:
        logger.warning("%d word pairs skipped: word absent from the reference corpus", skipped)
    for t, s in zip(topics, scores):
        if isinstance(t, Topic):
            t.coherence = s
    finite = [s for s in scores if not math.isnan(s)]
    return scores, (float(np.mean(finite)) if finite else float("nan"))


# --------------------------------------------------------------------------- word neighbours


def word_neighbors(model, word, k: int = 5, vocab=None) -> list[tuple[str, float]]:
    """The k words whose W columns have the highest cosine with `word`'s column."""
    params, _, _ = _resolve(model, "idocnade")
    vocab = vocab if vocab is not None else getattr(model, "vocab", None)
    if isinstance(word, str):
        if vocab is None:
            raise ValueError("a vocabulary is needed to look up tokens")
        if word not in vocab:
            close = difflib.get_close_matches(word, vocab.id_to_token, n=5, cutoff=0.5)
            raise UnknownWordError(f"unknown word {word!r}; closest vocabulary tokens: {', '.join(close) or 'none'}")
        idx = vocab.token_to_id[word]
    else:
        idx = int(word)
        if not 0 <= idx < params.K:
            raise UnknownWordError(f"word id {idx} outside vocabulary")
    if not 0 < k < params.K:
        raise ValueError("k must satisfy 0 < k < K")
    cols = _unit_rows(params.W.T.copy(), "word")
    sims = cols @ cols[idx]
    sims[idx] = -np.inf
    order = np.lexsort((np.arange(params.K), -sims))[:k]
    name = (lambda i: vocab.id_to_token[i]) if vocab is not None else str
    return [(name(int(i)), float(sims[i])) for i in order]
