"""Corpus ingestion: vocabularies, integer-encoded documents and train/dev/test splits.

Corpus files are UTF-8 with one document per line::

    label1,label2<TAB>tok tok tok ...

The label field may be empty (the line then starts with a TAB). Vocabulary
files hold one token per line; the line number is the token id.
"""

from __future__ import annotations

import hashlib
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    id_to_token: tuple[str, ...]
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.id_to_token) == 0:
            raise CorpusError("empty vocabulary")
        mapping = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(mapping) != len(self.id_to_token):
            raise CorpusError("duplicate tokens in vocabulary")
        object.__setattr__(self, "token_to_id", mapping)

    @property
    def K(self) -> int:
        return len(self.id_to_token)

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.id_to_token[int(i)] for i in ids]

    def fingerprint(self) -> str:
        """SHA-256 over the ordered token list; two vocabularies are compatible iff equal."""
        h = hashlib.sha256()
        for tok in self.id_to_token:
            h.update(tok.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def save(self, path):
        Path(path).write_text("".join(tok + "\n" for tok in self.id_to_token), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(lines))


@dataclass(frozen=True)
class Document:
    words: np.ndarray
    labels: tuple[int, ...] = ()

    def __post_init__(self):
        words = np.array(self.words, dtype=np.int64).reshape(-1)
        words.setflags(write=False)
        object.__setattr__(self, "words", words)
        object.__setattr__(self, "labels", tuple(sorted(set(int(l) for l in self.labels))))

    @property
    def D(self) -> int:
        return int(self.words.shape[0])

    def __len__(self):
        return self.D


@dataclass
class Corpus:
    documents: list[Document]
    splits: list[str]
    vocab: Vocabulary
    label_names: list[str] = field(default_factory=list)
    rejected: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.documents) != len(self.splits):
            raise CorpusError("one split tag per document required")
        bad = set(self.splits) - set(SPLITS)
        if bad:
            raise CorpusError(f"unknown split tags: {sorted(bad)}")
        K = self.vocab.K
        for doc in self.documents:
            if doc.D and int(doc.words.max()) >= K:
                raise CorpusError("document word index outside vocabulary")

    def split(self, name: str) -> list[Document]:
        return [d for d, s in zip(self.documents, self.splits) if s == name]

    @property
    def train(self) -> list[Document]:
        return self.split("train")

    @property
    def dev(self) -> list[Document]:
        return self.split("dev")

    @property
    def test(self) -> list[Document]:
        return self.split("test")

    def counts(self) -> dict[str, int]:
        c = Counter(self.splits)
        return {s: c.get(s, 0) for s in SPLITS}


def tokenize(text: str, lowercase: bool = True) -> list[str]:
    if lowercase:
        text = text.lower()
    return text.split()


def build_vocabulary(raw_docs: Sequence[Sequence[str]], max_size: int | None = None) -> Vocabulary:
    """Keep the `max_size` most frequent tokens, ranked by (frequency desc, token asc)."""
    if max_size is not None and max_size < 1:
        raise ValueError("max_size must be >= 1")
    counts = Counter()
    for doc in raw_docs:
        counts.update(doc)
    if not counts:
        raise CorpusError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    if max_size is not None:
        ranked = ranked[:max_size]
    return Vocabulary(tuple(tok for tok, _ in ranked))


def encode_document(tokens: Sequence[str], vocab: Vocabulary, oov_policy: str = "skip",
                    labels: Iterable[int] = ()) -> Document:
    if oov_policy not in ("skip", "error"):
        raise ValueError(f"unknown oov_policy {oov_policy!r}")
    ids = []
    for tok in tokens:
        i = vocab.token_to_id.get(tok)
        if i is None:
            if oov_policy == "error":
                raise CorpusError(f"out-of-vocabulary token {tok!r}")
            continue
        ids.append(i)
    if not ids:
        raise CorpusError("document empty after OOV filtering")
    return Document(np.array(ids, dtype=np.int64), tuple(labels))


def parse_line(line: str, lineno: int, lowercase: bool = True) -> tuple[list[str], list[str]]:
    if "\t" not in line:
        raise CorpusError(f"line {lineno}: missing TAB between label field and text")
    label_field, text = line.split("\t", 1)
    labels = [l.strip() for l in label_field.split(",") if l.strip()]
    tokens = tokenize(text, lowercase)
    if not tokens:
        raise CorpusError(f"line {lineno}: no tokens")
    return labels, tokens


def read_corpus_file(path, lowercase: bool = True) -> list[tuple[list[str], list[str]]]:
    """Parse a corpus file into (labels, tokens) records, in file order."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"corpus file not found: {path}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            records.append(parse_line(line, lineno, lowercase))
    return records


def load_corpus(paths, *, vocab: Vocabulary | None = None, max_vocab: int | None = None,
                lowercase: bool = True, oov_policy: str = "skip") -> Corpus:
    """Load one or more split files into an encoded Corpus.

    `paths` is a single path (loaded as the train split) or a mapping from
    split name to path. Without an explicit `vocab`, the vocabulary is built
    from the train split (or from everything if there is no train split).
    Documents that end up empty after OOV filtering are dropped and counted
    in ``Corpus.rejected``.
    """
    if isinstance(paths, (str, os.PathLike)):
        paths = {"train": paths}
    raw: dict[str, list] = {}
    for split in SPLITS:
        if split in paths and paths[split] is not None:
            raw[split] = read_corpus_file(paths[split], lowercase)
    extra = set(paths) - set(SPLITS)
    if extra:
        raise CorpusError(f"unknown split names: {sorted(extra)}")
    if not raw:
        raise CorpusError("empty corpus")

    if vocab is None:
        source = raw.get("train") or [r for recs in raw.values() for r in recs]
        vocab = build_vocabulary([toks for _, toks in source], max_vocab)

    label_names = sorted({l for recs in raw.values() for labels, _ in recs for l in labels})
    label_id = {name: i for i, name in enumerate(label_names)}

    documents, splits, rejected = [], [], {}
    for split, recs in raw.items():
        n_rejected = 0
        for labels, tokens in recs:
            try:
                doc = encode_document(tokens, vocab, oov_policy, [label_id[l] for l in labels])
            except CorpusError:
                if oov_policy == "error":
                    raise
                n_rejected += 1
                continue
            documents.append(doc)
            splits.append(split)
        rejected[split] = n_rejected
        if n_rejected:
            logger.warning("%s: %d documents empty after OOV filtering were rejected", split, n_rejected)
    return Corpus(documents, splits, vocab, label_names, rejected)


def corpus_from_documents(train: Sequence[Document], dev: Sequence[Document] = (),
                          test: Sequence[Document] = (), vocab: Vocabulary | None = None,
                          K: int | None = None, label_names: Sequence[str] = ()) -> Corpus:
    """Assemble a Corpus from already-encoded documents (synthetic data, tests)."""
    if vocab is None:
        if K is None:
            K = 1 + max(int(d.words.max()) for d in [*train, *dev, *test])
        vocab = Vocabulary(tuple(f"w{i}" for i in range(K)))
    docs = [*train, *dev, *test]
    splits = ["train"] * len(train) + ["dev"] * len(dev) + ["test"] * len(test)
    return Corpus(list(docs), splits, vocab, list(label_names))


def hold_out_dev(corpus: Corpus, n_dev: int, rng: np.random.Generator) -> Corpus:
    """Move `n_dev` randomly chosen train documents into the dev split."""
    train_idx = [i for i, s in enumerate(corpus.splits) if s == "train"]
    if n_dev >= len(train_idx):
        raise CorpusError("not enough training documents to hold out a dev split")
    chosen = set(rng.choice(len(train_idx), size=n_dev, replace=False).tolist())
    splits = list(corpus.splits)
    for j, i in enumerate(train_idx):
        if j in chosen:
            splits[i] = "dev"
    return Corpus(corpus.documents, splits, corpus.vocab, corpus.label_names, dict(corpus.rejected))
