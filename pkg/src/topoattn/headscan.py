"""Offline identification of topology-aware heads.

Stage 1 keeps heads whose attention pattern is complex (high singular-value
entropy). Stage 2 binarizes each surviving map to its top-k entries, closes
the mask morphologically and scores how well it concentrates on ``M_gt``.
Both stages threshold with Otsu's method.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from topoattn import kernels
from topoattn.attnops import AttentionTensor
from topoattn.graphtext import TokenAdjacency

OTSU_BINS = 256


class DegeneratePopulationError(ValueError):
    """Scores have fewer than two distinct values, so no threshold exists."""


def matrix_entropy(A: np.ndarray, base: Optional[float] = None) -> float:
    """Shannon entropy of the normalized squared singular values of ``A``.

    Natural log unless ``base`` is given.
    """
    A = np.asarray(A, dtype=np.float64)
    sigma = np.linalg.svd(A, compute_uv=False)
    energy = np.sum(sigma**2)
    if energy == 0.0:
        raise ValueError("matrix entropy undefined for an all-zero matrix")
    p = sigma**2 / energy
    p = p[p > 0]
    h = float(-np.sum(p * np.log(p)))
    if base is not None:
        h /= math.log(base)
    return max(h, 0.0)


def topk_binarize(A: np.ndarray, adj: TokenAdjacency) -> np.ndarray:
    """Mark the ``k = |M_gt|`` largest entries among the scored positions.

    Candidates are the in- and out-region positions (lower triangle inside
    the span, column 0 excluded). Ties at the cut go to the earlier
    row-major position.
    """
    A = np.asarray(A, dtype=np.float64)
    k = adj.k
    if k < 1:
        raise ValueError("adjacency has no ones; k must be >= 1")
    cand = adj.in_region | adj.out_region
    flat = np.flatnonzero(cand.ravel())
    if k > flat.size:
        raise ValueError(f"k={k} exceeds the {flat.size} available positions")
    vals = A.ravel()[flat]
    # stable sort on -value keeps row-major order among equal values
    order = np.argsort(-vals, kind="stable")[:k]
    B = np.zeros(A.shape, dtype=np.uint8)
    B.ravel()[flat[order]] = 1
    return B


def morph_close(B: np.ndarray) -> np.ndarray:
    """One 3x3 dilation then one 3x3 erosion.

    Dilation pads with zeros; erosion only looks at in-bounds neighbours.
    """
    return kernels.binary_close(np.asarray(B, dtype=np.uint8))


def span_close(B: np.ndarray, adj: TokenAdjacency) -> np.ndarray:
    """Close the mask inside the edge-description window only."""
    s, e = adj.span_start, adj.span_end
    out = np.zeros_like(B, dtype=np.uint8)
    out[s:e, s:e] = morph_close(B[s:e, s:e])
    return out


@dataclass(frozen=True)
class Concentration:
    c: float
    e_in: float
    e_out: float


def concentration_score(B_hat: np.ndarray, adj: TokenAdjacency) -> Concentration:
    n_in = int(adj.in_region.sum())
    n_out = int(adj.out_region.sum())
    if n_in == 0 or n_out == 0:
        raise ValueError(f"empty scoring region (|in|={n_in}, |out|={n_out})")
    B_hat = np.asarray(B_hat, dtype=np.float64)
    e_in = float(np.sum(1.0 - B_hat[adj.in_region]) / n_in)
    e_out = float(np.sum(B_hat[adj.out_region]) / n_out)
    return Concentration((1.0 - e_in) * (1.0 - e_out), e_in, e_out)


def otsu_threshold(values: Sequence[float], bins: int = OTSU_BINS) -> float:
    """Threshold maximizing between-class variance over a histogram.

    Values are binned into ``bins`` equal-width bins over ``[min, max]``;
    candidates are the interior bin edges and class moments use the actual
    values in each bin. The lowest edge wins ties. Values ``>= threshold``
    form the upper class.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0 or np.unique(v).size < 2:
        raise DegeneratePopulationError("need at least two distinct values to threshold")
    lo, hi = float(v.min()), float(v.max())
    edges = lo + (hi - lo) * np.arange(bins + 1) / bins
    idx = np.clip(np.searchsorted(edges, v, side="right") - 1, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    sums = np.bincount(idx, weights=v, minlength=bins)
    n0 = np.cumsum(counts)[:-1]
    s0 = np.cumsum(sums)[:-1]
    n1 = v.size - n0
    s1 = sums.sum() - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = n0 * n1 * (s0 / n0 - s1 / n1) ** 2
    between = np.where((n0 > 0) & (n1 > 0), between, -1.0)
    best = int(np.argmax(between))
    # bin membership came from searchsorted on these same edges, so
    # ``v >= edges[best + 1]`` reproduces the class split exactly
    return float(edges[best + 1])


@dataclass
class HeadScore:
    layer: int
    head: int
    entropy: float
    concentration: float = 0.0
    e_in: float = 1.0
    e_out: float = 0.0
    selected: bool = False


@dataclass
class SelectionResult:
    scores: list[HeadScore]
    entropy_threshold: float
    concentration_threshold: float
    selected_heads: set = field(default_factory=set)
    selected_layers: set = field(default_factory=set)

    def to_dict(self) -> dict:
        return {
            "T_S": self.entropy_threshold,
            "T_C": self.concentration_threshold,
            "heads": [
                {
                    "layer": s.layer,
                    "head": s.head,
                    "entropy": s.entropy,
                    "concentration": s.concentration,
                    "e_in": s.e_in,
                    "e_out": s.e_out,
                    "selected": s.selected,
                }
                for s in self.scores
            ],
            "selected_layers": sorted(self.selected_layers),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SelectionResult":
        scores = [
            HeadScore(
                layer=int(h["layer"]),
                head=int(h["head"]),
                entropy=float(h["entropy"]),
                concentration=float(h["concentration"]),
                e_in=float(h.get("e_in", 1.0 - h["concentration"])),
                e_out=float(h.get("e_out", 0.0)),
                selected=bool(h["selected"]),
            )
            for h in data["heads"]
        ]
        heads = {(s.layer, s.head) for s in scores if s.selected}
        return cls(scores, float(data["T_S"]), float(data["T_C"]), heads, {l for l, _ in heads})


def head_features(A: np.ndarray, adj: TokenAdjacency) -> tuple[np.ndarray, np.ndarray]:
    """Top-k mask and its closed version for one map."""
    B = topk_binarize(A, adj)
    return B, span_close(B, adj)


def select_heads(
    t: AttentionTensor, adj: TokenAdjacency, log_base: Optional[float] = None
) -> SelectionResult:
    if adj.n != t.n:
        raise ValueError(f"tensor has n={t.n}, adjacency n={adj.n}")
    scores = sorted(
        (HeadScore(l, h, matrix_entropy(t.maps[l, h], log_base)) for l, h in t.head_ids()),
        key=lambda s: (s.layer, s.head),
    )
    try:
        t_s = otsu_threshold([s.entropy for s in scores])
    except DegeneratePopulationError:
        raise DegeneratePopulationError("no separable head population (entropy)") from None

    active = [s for s in scores if s.entropy >= t_s]
    for s in active:
        conc = concentration_score(head_features(t.maps[s.layer, s.head], adj)[1], adj)
        s.concentration, s.e_in, s.e_out = conc.c, conc.e_in, conc.e_out
    try:
        t_c = otsu_threshold([s.concentration for s in active])
    except DegeneratePopulationError:
        raise DegeneratePopulationError("no separable head population (concentration)") from None

    for s in active:
        s.selected = s.concentration >= t_c
    heads = {(s.layer, s.head) for s in scores if s.selected}
    return SelectionResult(scores, t_s, t_c, heads, {l for l, _ in heads})


def precision_recall(selected: set, truth: set) -> tuple[float, float]:
    hit = len(selected & truth)
    precision = hit / len(selected) if selected else (1.0 if not truth else 0.0)
    recall = hit / len(truth) if truth else 1.0
    return precision, recall


def score_dict(s: HeadScore) -> dict:
    return asdict(s)
