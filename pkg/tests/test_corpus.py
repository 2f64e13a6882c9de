import numpy as np
import pytest
from hypothesis import given, strategies as st

from docnade.corpus import (
    Corpus,
    CorpusError,
    Document,
    Vocabulary,
    build_vocabulary,
    encode_document,
    hold_out_dev,
    load_corpus,
)


def test_vocabulary_keeps_most_frequent():
    vocab = build_vocabulary([["a", "b", "a"], ["b", "c"]], max_size=2)
    assert vocab.id_to_token == ("a", "b")
    assert "c" not in vocab


def test_vocabulary_single_token():
    vocab = build_vocabulary([["x"]], max_size=5)
    assert vocab.token_to_id == {"x": 0}
    assert vocab.K == 1


def test_vocabulary_tie_break_is_lexicographic():
    vocab = build_vocabulary([["zeta", "alpha", "mid", "mid"]])
    assert vocab.id_to_token == ("mid", "alpha", "zeta")


def test_empty_corpus_rejected():
    with pytest.raises(CorpusError, match="empty corpus"):
        build_vocabulary([[], []])


def test_encode_drops_oov_and_keeps_order():
    vocab = Vocabulary(("a", "b"))
    doc = encode_document(["a", "z", "b"], vocab, "skip")
    assert doc.words.tolist() == [0, 1]
    assert doc.D == 2
    assert encode_document(["a", "b", "a"], vocab).words.tolist() == [0, 1, 0]


def test_encode_all_oov_is_an_error():
    with pytest.raises(CorpusError, match="document empty after OOV filtering"):
        encode_document(["z"], Vocabulary(("a", "b")), "skip")


def test_encode_error_policy_names_token():
    with pytest.raises(CorpusError, match="'z'"):
        encode_document(["a", "z"], Vocabulary(("a", "b")), "error")


def test_load_corpus_parses_labels_and_tokens(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("sci.space,comp.os\tthe rocket engine\n\tThe engine\nsci.space\trocket\n", encoding="utf-8")
    corpus = load_corpus(f)
    assert len(corpus.documents) == 3
    assert corpus.label_names == ["comp.os", "sci.space"]
    first = corpus.documents[0]
    assert first.D == 3
    assert set(corpus.label_names[l] for l in first.labels) == {"sci.space", "comp.os"}
    assert corpus.documents[1].labels == ()
    # lowercasing is on by default: "The" and "the" share an id
    assert corpus.documents[1].words[0] == first.words[0]


def test_load_corpus_reports_malformed_line_number(tmp_path):
    f = tmp_path / "c.txt"
    f.write_text("a\tx y\nno tab here\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="line 2"):
        load_corpus(f)


def test_load_corpus_splits_and_rejections(tmp_path):
    (tmp_path / "tr.txt").write_text("a\tx y\nb\ty y\n", encoding="utf-8")
    (tmp_path / "de.txt").write_text("a\tx\n", encoding="utf-8")
    (tmp_path / "te.txt").write_text("b\tunseen\na\ty x\n", encoding="utf-8")
    corpus = load_corpus({"train": tmp_path / "tr.txt", "dev": tmp_path / "de.txt", "test": tmp_path / "te.txt"})
    assert corpus.counts() == {"train": 2, "dev": 1, "test": 1}
    assert corpus.rejected["test"] == 1
    assert sum(corpus.counts().values()) == len(corpus.documents)


def test_vocab_file_round_trip(tmp_path):
    vocab = Vocabulary(("b", "a", "c"))
    vocab.save(tmp_path / "v.txt")
    again = Vocabulary.load(tmp_path / "v.txt")
    assert again == vocab
    assert again.fingerprint() == vocab.fingerprint()


def test_hold_out_dev_partitions():
    docs = [Document([i % 3]) for i in range(20)]
    corpus = Corpus(docs, ["train"] * 20, Vocabulary(("a", "b", "c")))
    split = hold_out_dev(corpus, 5, np.random.default_rng(0))
    assert split.counts() == {"train": 15, "dev": 5, "test": 0}


tokens = st.lists(st.sampled_from(list("abcdefgh")), min_size=1, max_size=12)


@given(st.lists(tokens, min_size=1, max_size=6), st.integers(1, 8))
def test_vocabulary_is_deterministic_and_dense(raw, max_size):
    v1 = build_vocabulary(raw, max_size)
    v2 = build_vocabulary([list(d) for d in raw], max_size)
    assert v1 == v2
    assert sorted(v1.token_to_id.values()) == list(range(v1.K))
    assert v1.K == min(max_size, len({t for d in raw for t in d}))


@given(tokens, st.sets(st.sampled_from(list("abcdefgh")), min_size=1))
def test_encode_decode_round_trip(seq, kept):
    vocab = Vocabulary(tuple(sorted(kept)))
    expected = [t for t in seq if t in kept]
    if not expected:
        with pytest.raises(CorpusError):
            encode_document(seq, vocab)
        return
    assert vocab.decode(encode_document(seq, vocab).words) == expected
