import math

import numpy as np
import pytest

from docnade.checkpoint import (
    Checkpoint,
    CheckpointError,
    TrainConfig,
    VocabularyMismatch,
    checkpoint_bytes,
    load_checkpoint,
    save_checkpoint,
)
from docnade.corpus import Document, Vocabulary, corpus_from_documents
from docnade.evaluation import perplexity
from docnade.model import loglik, loglik_docnade, loglik_idocnade, sparse_gradients
from docnade.synthetic import two_topic_corpus
from docnade.trainer import TrainingError, init_params, sgd_pass, train
from oracles import PARAM_NAMES, random_params


def test_init_is_deterministic():
    a, b = init_params(30, 4, "tree", seed=3), init_params(30, 4, "tree", seed=3)
    for name in PARAM_NAMES:
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.array_equal(a.tree.nodes, b.tree.nodes)


def test_init_ranges_and_zero_biases():
    p = init_params(40, 9, "flat", seed=1, init_scale=2.0)
    assert np.abs(p.W).max() <= 2.0 / 3.0 and np.abs(p.U).max() <= 2.0 / 3.0
    assert not np.any(p.b_fwd) and not np.any(p.c_bwd)


def test_init_dimensions_large():
    p = init_params(2000, 200, "tree", seed=0)
    assert p.W.shape == (200, 2000)
    assert p.U.shape == (1999, 200)
    assert p.c_fwd.shape == (200,)


def test_zero_init_is_uniform():
    p = init_params(13, 3, "flat", seed=0, init_scale=0.0)
    assert loglik_docnade(p, [1, 2, 3, 4]) == pytest.approx(4 * math.log(1 / 13), abs=1e-13)


def _tiny_corpus():
    rng = np.random.default_rng(0)
    docs = [Document(rng.integers(0, 12, int(rng.integers(3, 8)))) for _ in range(12)]
    return corpus_from_documents(docs[:8], docs[8:10], docs[10:], K=12)


def test_zero_learning_rate_keeps_params():
    corpus = _tiny_corpus()
    p = init_params(12, 3, "tree", seed=0)
    q, _ = sgd_pass(p, corpus.train, TrainConfig(learning_rate=0.0, hidden_size=3), np.random.default_rng(0))
    for name in PARAM_NAMES:
        assert np.array_equal(getattr(p, name), getattr(q, name))


@pytest.mark.parametrize("model_kind", ["docnade", "idocnade"])
def test_single_step_decreases_nll(model_kind):
    doc = Document([1, 4, 4, 2, 7])
    p = init_params(9, 4, "tree", seed=2)
    before = -loglik(p, doc, model_kind)
    q, _ = sgd_pass(p, [doc], TrainConfig(learning_rate=1e-3, hidden_size=4, model_kind=model_kind),
                    np.random.default_rng(0))
    assert -loglik(q, doc, model_kind) < before


@pytest.mark.parametrize("output_kind", ["tree", "flat"])
@pytest.mark.parametrize("model_kind", ["docnade", "idocnade"])
@pytest.mark.parametrize("scaling", [False, True])
def test_compiled_step_matches_reference_update(output_kind, model_kind, scaling):
    rng = np.random.default_rng(5)
    p = random_params(rng, 11, 4, output_kind, scaling)
    docs = [Document(rng.integers(0, 11, int(rng.integers(1, 9)))) for _ in range(6)]
    cfg = TrainConfig(learning_rate=0.05, hidden_size=4, model_kind=model_kind)
    fast, s1 = sgd_pass(p, docs, cfg, np.random.default_rng(1), compiled=True)
    slow, s2 = sgd_pass(p, docs, cfg, np.random.default_rng(1), compiled=False)
    assert s1.mean_nll == pytest.approx(s2.mean_nll, rel=1e-12)
    for name in PARAM_NAMES:
        assert np.allclose(getattr(fast, name), getattr(slow, name), rtol=0, atol=1e-12)


def test_pass_is_deterministic():
    corpus = _tiny_corpus()
    p = init_params(12, 3, "tree", seed=0)
    cfg = TrainConfig(learning_rate=0.01, hidden_size=3)
    a, _ = sgd_pass(p, corpus.train, cfg, np.random.default_rng(7))
    b, _ = sgd_pass(p, corpus.train, cfg, np.random.default_rng(7))
    for name in PARAM_NAMES:
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_pseudo_objective_trains():
    corpus = _tiny_corpus()
    cfg = TrainConfig(learning_rate=0.01, hidden_size=3, passes=3, objective="pseudo", eval_every=1)
    ckpt = train(corpus, cfg)
    assert ckpt.metadata["passes_run"] == 3


def test_divergence_is_reported():
    corpus = _tiny_corpus()
    p = init_params(12, 3, "flat", seed=0)
    p.U[:] = np.inf
    with pytest.raises(TrainingError, match="training document"):
        sgd_pass(p, corpus.train, TrainConfig(learning_rate=0.1, hidden_size=3, output_kind="flat"),
                 np.random.default_rng(0), compiled=False)


def test_zero_passes_returns_initialisation():
    corpus = _tiny_corpus()
    cfg = TrainConfig(hidden_size=3, passes=0, seed=4)
    ckpt = train(corpus, cfg)
    init = init_params(12, 3, "tree", seed=4)
    assert np.array_equal(ckpt.params.W, init.W)
    assert ckpt.metadata["best_pass"] == 0


def test_best_checkpoint_selected_and_inputs_untouched():
    corpus = two_topic_corpus(seed=1, n_train=60, n_dev=20, n_test=20)
    before = [d.words.copy() for d in corpus.documents]
    cfg = TrainConfig(learning_rate=0.05, hidden_size=6, passes=12, eval_every=2, seed=1)
    ckpt = train(corpus, cfg)
    values = [e["dev_ppl"] for e in ckpt.metadata["history"]]
    assert ckpt.metadata["best_dev_metric"] == min(values)
    assert perplexity(ckpt, corpus, "dev") == pytest.approx(min(values), rel=1e-12)
    assert all(np.array_equal(a, d.words) for a, d in zip(before, corpus.documents))


def test_training_beats_uniform():
    corpus = two_topic_corpus(seed=2, n_train=100, n_dev=20, n_test=20)
    ckpt = train(corpus, TrainConfig(learning_rate=0.01, hidden_size=8, passes=20, eval_every=5))
    assert perplexity(ckpt, corpus, "dev") < corpus.vocab.K


def test_lr_grid_selection_picks_lowest_dev_ppl():
    corpus = two_topic_corpus(seed=3, n_train=60, n_dev=20, n_test=20)
    runs = {lr: train(corpus, TrainConfig(learning_rate=lr, hidden_size=6, passes=6, eval_every=3))
            for lr in (0.001, 0.005, 0.01)}
    chosen = min(runs, key=lambda lr: runs[lr].metadata["best_dev_metric"])
    assert runs[chosen].metadata["best_dev_metric"] == min(r.metadata["best_dev_metric"] for r in runs.values())


@pytest.mark.parametrize("output_kind", ["tree", "flat"])
def test_checkpoint_round_trip(tmp_path, output_kind):
    corpus = _tiny_corpus()
    ckpt = train(corpus, TrainConfig(hidden_size=3, passes=2, output_kind=output_kind, eval_every=1))
    path = save_checkpoint(ckpt, tmp_path / "m.ckpt")
    again = load_checkpoint(path)
    for name in PARAM_NAMES:
        assert np.array_equal(getattr(again.params, name), getattr(ckpt.params, name))
    assert again.config == ckpt.config
    assert again.metadata == ckpt.metadata
    assert checkpoint_bytes(again) == path.read_bytes()
    for doc in corpus.test:
        assert loglik_idocnade(again.params, doc) == loglik_idocnade(ckpt.params, doc)


def test_checkpoint_header_layout(tmp_path):
    ckpt = Checkpoint(init_params(5, 2, "tree"), TrainConfig(hidden_size=2), Vocabulary(tuple("abcde")))
    raw = checkpoint_bytes(ckpt)
    assert raw[:8] == b"DOCNADE\x00"
    assert int.from_bytes(raw[8:12], "little") == 1


def test_corrupt_checkpoint_rejected(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_vocabulary_mismatch_detected():
    ckpt = Checkpoint(init_params(3, 2, "flat"), TrainConfig(hidden_size=2), Vocabulary(("a", "b", "c")))
    with pytest.raises(VocabularyMismatch):
        ckpt.check_vocab(Vocabulary(("a", "c", "b")))
