"""Topology-aware attention head detection and attention-sink sharpening."""

from topoattn.attnops import (
    AttentionTensor,
    BudgetBreakdown,
    Granularity,
    SharpenConfig,
    amplification_ratio,
    budget,
    sharpen_map,
    sharpen_tensor,
    validate_tensor,
)
from topoattn.graphtext import (
    Graph,
    TokenAdjacency,
    TokenizedSerialization,
    aggregate_edges,
    build_token_adjacency,
    load_graph,
    serialize,
)
from topoattn.headscan import (
    SelectionResult,
    concentration_score,
    matrix_entropy,
    morph_close,
    otsu_threshold,
    select_heads,
    topk_binarize,
)
from topoattn.kernels import BACKEND

__version__ = "0.1.0"
