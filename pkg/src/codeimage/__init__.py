"""Vulnerability detection on code images built from centrality-weighted line embeddings."""

from .centrality import centralities
from .cnn import CnnModel, TrainConfig, init_model, predict, train
from .cpg import CodeGraph, build_cpg
from .embed import EmbeddingModel, embed_sentence, hashed_model, train_embedding
from .errors import CodeImageError
from .imagegen import CodeImage, build_image, continuity_gap
from .ingest import FunctionSample, extract_functions, load_corpus, normalize
from .oversample import oversample_function, splice_lines

__version__ = "0.1.0"

__all__ = [
    "CnnModel", "CodeGraph", "CodeImage", "CodeImageError", "EmbeddingModel", "FunctionSample",
    "TrainConfig", "build_cpg", "build_image", "centralities", "continuity_gap", "embed_sentence",
    "extract_functions", "hashed_model", "init_model", "load_corpus", "normalize",
    "oversample_function", "predict", "splice_lines", "train", "train_embedding",
]
