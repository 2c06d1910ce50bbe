"""Python bindings for the memeify pipeline."""

from ._memeify import (
    CaptionModel,
    LshIndex,
    Server,
    build_index,
    caption_vector,
    cluster,
    corpus_stats,
    extract_features,
    kmeans,
    load_class_images,
    metrics,
    read_corpus,
    reconstruct_matrix,
    render,
    stratified_sample,
    train,
)

__all__ = [
    "CaptionModel",
    "LshIndex",
    "Server",
    "build_index",
    "caption_vector",
    "cluster",
    "corpus_stats",
    "extract_features",
    "kmeans",
    "load_class_images",
    "metrics",
    "read_corpus",
    "reconstruct_matrix",
    "render",
    "stratified_sample",
    "train",
]
