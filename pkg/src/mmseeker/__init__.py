"""Top-K retrieval of multi-modal query-item pairs from lifelong sequences.

The exact weighted cross-modal score is the oracle; multi-modal product
quantization approximates it with table lookups. Cascading ANN, LSH and
residual quantization are included as baselines, together with a synthetic
data generator and a Recall@K harness.
"""
__version__ = "0.1.0"

from ._accel import backend_name, set_threads
from .core import (EMPTY_QUERY, FusionWeights, MultiModalRecord, SequenceStore, TopKResult,
                   derive_gamma, validate_sequence)
from .exact import decompose, decomposed_score, exact_pair_score, exact_topk
from .pq_retrieval import CrossModalDistanceTable, MultiModalPQ, approx_pair_score, build_table, pq_topk
from .quantizers import LSHHasher, PQCodebook, ResidualCodebook, train_kmeans, train_pq, train_residual

__all__ = [
    "EMPTY_QUERY", "FusionWeights", "MultiModalRecord", "SequenceStore", "TopKResult",
    "derive_gamma", "validate_sequence", "decompose", "decomposed_score", "exact_pair_score",
    "exact_topk", "CrossModalDistanceTable", "MultiModalPQ", "approx_pair_score", "build_table",
    "pq_topk", "LSHHasher", "PQCodebook", "ResidualCodebook", "train_kmeans", "train_pq",
    "train_residual", "backend_name", "set_threads",
]
