"""DocNADE and iDocNADE neural autoregressive topic models."""

from docnade.corpus import Corpus, Document, Vocabulary, build_vocabulary, encode_document, load_corpus
from docnade.hsoftmax import WordTree, build_tree, full_distribution, path_logprob
from docnade.model import (
    Gradients,
    HiddenStates,
    ModelParams,
    document_representation,
    gradients_docnade,
    gradients_idocnade,
    gradients_pseudo,
    hidden_states,
    loglik,
    loglik_docnade,
    loglik_idocnade,
    loglik_pseudo,
    word_distribution,
)
from docnade.checkpoint import Checkpoint, TrainConfig, load_checkpoint, save_checkpoint
from docnade.trainer import init_params, sgd_pass, train

__version__ = "0.1.0"

__all__ = [
    "Checkpoint",
    "Corpus",
    "Document",
    "Gradients",
    "HiddenStates",
    "ModelParams",
    "TrainConfig",
    "Vocabulary",
    "WordTree",
    "build_tree",
    "build_vocabulary",
    "document_representation",
    "encode_document",
    "full_distribution",
    "gradients_docnade",
    "gradients_idocnade",
    "gradients_pseudo",
    "hidden_states",
    "init_params",
    "load_checkpoint",
    "load_corpus",
    "loglik",
    "loglik_docnade",
    "loglik_idocnade",
    "loglik_pseudo",
    "path_logprob",
    "save_checkpoint",
    "sgd_pass",
    "train",
    "word_distribution",
]
