"""Per-document SGD with periodic dev evaluation and best-checkpoint selection."""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from docnade.checkpoint import Checkpoint, TrainConfig
from docnade.corpus import Corpus
from docnade.evaluation import perplexity, retrieval_precision
from docnade.hsoftmax import build_tree
from docnade.model import ModelParams, objective_gradients

try:
    from docnade._kernels import sgd_step as _compiled_step
except ImportError:  # pragma: no cover - numba missing
    _compiled_step = None

logger = logging.getLogger(__name__)


class TrainingError(FloatingPointError):
    pass


def sub_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer of the run seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def init_params(K: int, H: int, output_kind: str = "tree", seed: int = 0, init_scale: float = 1.0,
                scaling: bool = False, activation: str = "sigmoid") -> ModelParams:
    """W and U uniform in +-init_scale/sqrt(H); biases zero."""
    if K < 1 or H < 1:
        raise ValueError("K and H must be positive")
    tree = None
    if output_kind == "tree":
        tree = build_tree(K, int(sub_rng(seed, "tree").integers(2**31)))
        n_out = K - 1
    else:
        n_out = K
    rng = sub_rng(seed, "init")
    bound = init_scale / math.sqrt(H)
    W = rng.uniform(-bound, bound, size=(H, K)) if init_scale else np.zeros((H, K))
    U = rng.uniform(-bound, bound, size=(n_out, H)) if init_scale else np.zeros((n_out, H))
    zeros = np.zeros
    return ModelParams(W, U, zeros(n_out), zeros(n_out), zeros(H), zeros(H),
                       output_kind=output_kind, scaling=scaling, activation=activation, tree=tree)


@dataclass
class PassStats:
    mean_nll: float
    mean_nll_per_word: float
    documents: int


DIRECTION_WEIGHTS = {"docnade": (1.0, 0.0), "idocnade": (0.5, 0.5)}


def sgd_pass(params: ModelParams, docs: Sequence, config: TrainConfig, rng: np.random.Generator,
             compiled: bool = True):
    """One shuffled pass of per-document SGD; returns (new params, PassStats).

    The input params are not modified. The exact objectives run through the
    compiled step when numba is available; `compiled=False` forces the numpy
    reference gradients.
    """
    if len(docs) == 0:
        raise ValueError("empty training split")
    params = params.copy()
    lr = config.learning_rate
    fast = compiled and _compiled_step is not None and config.objective == "exact"
    w_fwd, w_bwd = DIRECTION_WEIGHTS[config.model_kind]
    total = 0.0
    total_pw = 0.0
    for idx in rng.permutation(len(docs)):
        words = np.asarray(getattr(docs[idx], "words", docs[idx]), dtype=np.int64)
        if fast:
            nll = _compiled_step(params, words, w_fwd, w_bwd, lr)
            if not math.isfinite(nll):
                raise TrainingError(f"non-finite likelihood at training document {idx}")
        else:
            try:
                grads, nll = objective_gradients(params, words, config.model_kind, config.objective)
            except FloatingPointError as exc:
                raise TrainingError(f"non-finite values at training document {idx}: {exc}") from exc
            if lr:
                grads.apply(params, lr)
        total += nll
        total_pw += nll / len(words)
    if not params.all_finite():
        raise TrainingError("parameters became non-finite during the pass")
    return params, PassStats(total / len(docs), total_pw / len(docs), len(docs))


def dev_metric(params: ModelParams, corpus: Corpus, config: TrainConfig, threads: int | None = None) -> float:
    if config.selection_metric == "dev_ppl":
        return perplexity(params, corpus.dev, model_kind=config.model_kind, threads=threads)
    res = retrieval_precision(params, corpus.train, corpus.dev, [config.ir_fraction],
                              model_kind=config.model_kind, threads=threads)
    return res[config.ir_fraction]


def _better(metric: str, new: float, old: float) -> bool:
    return new < old if metric == "dev_ppl" else new > old


def train(corpus: Corpus, config: TrainConfig, threads: int | None = None,
          progress: Callable[[dict], None] | None = None) -> Checkpoint:
    """Run config.passes SGD passes and return the best dev-set checkpoint.

    The dev metric is evaluated on the initial model, every ``eval_every``
    passes and after the final pass.
    """
    train_docs, dev_docs = corpus.train, corpus.dev
    if not train_docs:
        raise ValueError("training split is empty")
    if not dev_docs:
        raise ValueError("dev split is empty")
    params = init_params(corpus.vocab.K, config.hidden_size, config.output_kind, config.seed,
                         config.init_scale, config.scaling, config.activation)
    shuffle_rng = sub_rng(config.seed, "shuffle")

    history = []

    def record(p, n_pass, stats):
        value = dev_metric(p, corpus, config, threads)
        entry = {"pass": n_pass, config.selection_metric: value}
        if stats is not None:
            entry["train_nll"] = stats.mean_nll
        history.append(entry)
        if progress is not None:
            progress(entry)
        logger.info("pass %d: %s=%.6g", n_pass, config.selection_metric, value)
        return value

    best_value = record(params, 0, None)
    best_params, best_pass = params.copy(), 0
    for n_pass in range(1, config.passes + 1):
        params, stats = sgd_pass(params, train_docs, config, shuffle_rng)
        if n_pass % config.eval_every == 0 or n_pass == config.passes:
            value = record(params, n_pass, stats)
            if _better(config.selection_metric, value, best_value):
                best_value, best_params, best_pass = value, params.copy(), n_pass

    metadata = {
        "passes_run": config.passes,
        "best_pass": best_pass,
        "best_dev_metric": best_value,
        "selection_metric": config.selection_metric,
        "history": history,
        "train_documents": len(train_docs),
        "dev_documents": len(dev_docs),
    }
    return Checkpoint(best_params, config, corpus.vocab, metadata)
