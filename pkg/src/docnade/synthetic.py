"""Synthetic two-level corpora with known topic structure."""

from __future__ import annotations

import numpy as np

from docnade.corpus import Corpus, Document, corpus_from_documents


def topic_word_distributions(n_topics: int, words_per_topic: int, noise: float) -> np.ndarray:
    """(n_topics, K) word distributions.

    Topic t owns words [t*words_per_topic, (t+1)*words_per_topic) with
    Zipf-like weights 1/(rank+1); `noise` mass is spread uniformly over the
    whole vocabulary.
    """
    K = n_topics * words_per_topic
    zipf = 1.0 / np.arange(1, words_per_topic + 1)
    zipf /= zipf.sum()
    dists = np.full((n_topics, K), noise / K)
    for t in range(n_topics):
        dists[t, t * words_per_topic:(t + 1) * words_per_topic] += (1.0 - noise) * zipf
    return dists


def sample_documents(n_docs: int, dists: np.ndarray, rng: np.random.Generator,
                     min_len: int = 20, max_len: int = 40) -> list[Document]:
    """Each document draws one topic uniformly and i.i.d. words from it; the topic is its label."""
    n_topics, K = dists.shape
    docs = []
    for _ in range(n_docs):
        t = int(rng.integers(n_topics))
        D = int(rng.integers(min_len, max_len + 1))
        docs.append(Document(rng.choice(K, size=D, p=dists[t]), (t,)))
    return docs


def two_topic_corpus(seed: int = 0, n_train: int = 400, n_dev: int = 50, n_test: int = 100,
                     words_per_topic: int = 50, noise: float = 0.1) -> Corpus:
    """2 latent topics over K = 2 * words_per_topic words, documents of length 20-40."""
    rng = np.random.default_rng(seed)
    dists = topic_word_distributions(2, words_per_topic, noise)
    train = sample_documents(n_train, dists, rng)
    dev = sample_documents(n_dev, dists, rng)
    test = sample_documents(n_test, dists, rng)
    return corpus_from_documents(train, dev, test, K=dists.shape[1], label_names=["topic0", "topic1"])


def write_split(corpus: Corpus, split: str, path) -> None:
    """Write one split in the `labels<TAB>text` corpus file format."""
    names = corpus.label_names
    lines = []
    for doc in corpus.split(split):
        labels = ",".join(names[l] if names else str(l) for l in doc.labels)
        text = " ".join(corpus.vocab.decode(doc.words))
        lines.append(f"{labels}\t{text}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
