"""BM25-supervised embedding adaptation toolkit (native core bindings)."""

from _bmembed import (
    Adapter,
    Bm25Index,
    Chunk,
    ToyEmbedder,
    average_precision_at_10,
    chunk_document,
    hit_at_k,
    listmle_loss,
    listnet_loss,
    partition,
    rrf_fuse,
    run_pipeline,
    spearman,
    target_distribution,
    tokenize,
    uniformity,
    write_fixture,
)

__all__ = [
    "Adapter",
    "Bm25Index",
    "Chunk",
    "ToyEmbedder",
    "average_precision_at_10",
    "chunk_document",
    "hit_at_k",
    "listmle_loss",
    "listnet_loss",
    "partition",
    "rrf_fuse",
    "run_pipeline",
    "spearman",
    "target_distribution",
    "tokenize",
    "uniformity",
    "write_fixture",
]
