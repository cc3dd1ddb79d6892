"""Seeded synthetic attention tensors with planted topology-aware heads.

Position 0 is a sink token; the serialized edge list follows from position 1.
Planted heads put a target sink mass on column 0 and split the rest between
the ``M_gt`` support (including the diagonal) and everything else. Other
heads follow one of three distractor archetypes with no link to ``M_gt``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from topoattn.attnops import AttentionTensor
from topoattn.graphtext import (
    Graph,
    TokenAdjacency,
    aggregate_edges,
    build_token_adjacency,
    graph_from_dict,
    serialize,
)
from topoattn.headscan import SelectionResult, topk_binarize

SINK_BAND = 0.05
# planted sink mass rises from lambda - DEPTH_SHIFT at the start of a source
# block to lambda + DEPTH_SHIFT at its end
DEPTH_SHIFT = 0.04
ROW_JITTER = 0.01
ARCHETYPES = ("sink", "window", "diffuse")
ARCHETYPE_WEIGHTS = (0.5, 0.25, 0.25)

DEFAULT_GRAPH = Graph(
    num_nodes=8,
    edges=(
        (0, 1), (0, 3), (0, 5), (0, 7),
        (1, 2), (1, 4), (1, 6),
        (2, 3), (2, 5), (2, 7),
        (3, 4), (3, 6),
        (4, 5), (4, 7),
        (5, 6), (6, 7),
    ),
    aggregated=True,
)
DEFAULT_PLANTED = frozenset({(1, 7), (2, 3), (2, 20)})


@dataclass(frozen=True)
class GeneratorSpec:
    layers: int = 4
    heads: int = 32
    graph: Graph = DEFAULT_GRAPH
    planted: frozenset = DEFAULT_PLANTED
    lambda_sink: float = 0.6
    alignment: float = 0.85
    noise_fraction: float = 0.1
    temperature: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "planted", frozenset(tuple(p) for p in self.planted))
        if self.layers < 1 or self.heads < 1:
            raise ValueError("layers and heads must be positive")
        if not self.graph.edges:
            raise ValueError("generator needs a graph with at least one edge")
        for l, h in self.planted:
            if not (0 <= l < self.layers and 0 <= h < self.heads):
                raise ValueError(f"planted head ({l},{h}) outside {self.layers}x{self.heads}")
        if not 0.0 <= self.lambda_sink < 1.0:
            raise ValueError("lambda_sink must lie in [0, 1)")
        if not 0.0 <= self.alignment <= 1.0:
            raise ValueError("alignment must lie in [0, 1]")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ValueError("noise_fraction must lie in [0, 1]")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def n(self) -> int:
        return 1 + 5 * len(self.graph.edges)

    def to_dict(self) -> dict:
        return {
            "layers": self.layers,
            "heads": self.heads,
            "graph": self.graph.to_dict(),
            "planted": sorted([l, h] for l, h in self.planted),
            "lambda_sink": self.lambda_sink,
            "alignment": self.alignment,
            "noise_fraction": self.noise_fraction,
            "temperature": self.temperature,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        known = {"layers", "heads", "graph", "planted", "lambda_sink", "alignment",
                 "noise_fraction", "temperature", "seed"}
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown generator fields: {sorted(extra)}")
        kw = dict(data)
        if "graph" in kw:
            kw["graph"] = graph_from_dict(kw["graph"])
        if "planted" in kw:
            kw["planted"] = frozenset(tuple(p) for p in kw["planted"])
        return cls(**kw)

    @classmethod
    def from_json(cls, text: str) -> "GeneratorSpec":
        return cls.from_dict(json.loads(text))


def random_graph(seed: int, num_nodes: int = 8, min_out: int = 2, max_out: int = 4) -> Graph:
    """Random source-aggregated graph where every node emits a few edges."""
    rng = np.random.default_rng([seed, 0x6772])
    edges = []
    for u in rng.permutation(num_nodes):
        deg = int(rng.integers(min_out, max_out + 1))
        targets = rng.choice([v for v in range(num_nodes) if v != u], size=deg, replace=False)
        edges += [(int(u), int(v)) for v in targets]
    return aggregate_edges(Graph(num_nodes, tuple(edges)))


def adjacency_for(spec: GeneratorSpec) -> TokenAdjacency:
    return build_token_adjacency(serialize(spec.graph), span_start=1, n=spec.n)


def planted_truth(spec: GeneratorSpec) -> set:
    return set(spec.planted)


def archetypes(spec: GeneratorSpec) -> dict:
    """Role of every head: ``"planted"`` or one of the distractor archetypes."""
    roles = {}
    for l in range(spec.layers):
        for h in range(spec.heads):
            if (l, h) in spec.planted:
                roles[(l, h)] = "planted"
            else:
                rng = np.random.default_rng([spec.seed, l, h, 1])
                roles[(l, h)] = ARCHETYPES[rng.choice(len(ARCHETYPES), p=ARCHETYPE_WEIGHTS)]
    return roles


def _fill(row: np.ndarray, idx: np.ndarray, mass: float, xi: np.ndarray, temperature: float) -> None:
    if idx.size == 0 or mass <= 0.0:
        return
    z = xi[idx] / temperature
    w = np.exp(z - z.max())
    row[idx] = mass * w / w.sum()


def block_depth(sources: np.ndarray) -> np.ndarray:
    """Relative position (0 at start, 1 at end) of each token in its run of
    equal source ids; 0 where no source is defined."""
    depth = np.zeros(sources.size)
    start = 0
    for i in range(1, sources.size + 1):
        if i == sources.size or sources[i] != sources[start]:
            if sources[start] >= 0 and i - start > 1:
                depth[start:i] = np.arange(i - start) / (i - start - 1)
            start = i
    return depth


def _planted_map(spec: GeneratorSpec, adj: TokenAdjacency, rng) -> np.ndarray:
    n = adj.n
    A = np.zeros((n, n))
    A[0, 0] = 1.0
    share = spec.alignment * (1.0 - spec.noise_fraction)
    depth = block_depth(adj.sources)
    for i in range(1, n):
        shift = DEPTH_SHIFT * (2.0 * depth[i] - 1.0) if adj.sources[i] >= 0 else 0.0
        sink = spec.lambda_sink + shift + rng.uniform(-ROW_JITTER, ROW_JITTER)
        sink = float(np.clip(sink, spec.lambda_sink - SINK_BAND, spec.lambda_sink + SINK_BAND))
        sink = min(max(sink, 0.0), 1.0)
        xi = rng.standard_normal(i + 1)
        cols = np.arange(1, i + 1)
        support = cols[adj.mask[i, 1 : i + 1]]
        rest = cols[~adj.mask[i, 1 : i + 1]]
        q = 1.0 if rest.size == 0 else (0.0 if support.size == 0 else share)
        A[i, 0] = sink
        _fill(A[i], support, (1.0 - sink) * q, xi, spec.temperature)
        _fill(A[i], rest, (1.0 - sink) * (1.0 - q), xi, spec.temperature)
    return A


def _distractor_map(kind: str, n: int, temperature: float, rng) -> np.ndarray:
    A = np.zeros((n, n))
    A[0, 0] = 1.0
    for i in range(1, n):
        xi = rng.standard_normal(i + 1)
        cols = np.arange(1, i + 1)
        if kind == "sink":
            sink = rng.uniform(0.9, 0.99)
            A[i, 0] = sink
            _fill(A[i], cols, 1.0 - sink, xi, temperature)
        elif kind == "window":
            sink = rng.uniform(0.8, 0.95)
            A[i, 0] = sink
            near = cols[cols >= i - 2]
            far = cols[cols < i - 2]
            q = 1.0 if far.size == 0 else 0.8
            _fill(A[i], near, (1.0 - sink) * q, xi, temperature)
            _fill(A[i], far, (1.0 - sink) * (1.0 - q), xi, temperature)
        else:
            sink = rng.uniform(0.3, 0.6)
            A[i, 0] = sink
            _fill(A[i], cols, 1.0 - sink, xi, temperature)
    return A


def generate(spec: GeneratorSpec) -> AttentionTensor:
    """Build the tensor; a pure function of ``spec``.

    Every head draws from its own generator seeded by ``(seed, layer, head)``.
    """
    adj = adjacency_for(spec)
    roles = archetypes(spec)
    maps = np.zeros((spec.layers, spec.heads, adj.n, adj.n))
    for (l, h), role in roles.items():
        rng = np.random.default_rng([spec.seed, l, h, 2])
        if role == "planted":
            maps[l, h] = _planted_map(spec, adj, rng)
        else:
            maps[l, h] = _distractor_map(role, adj.n, spec.temperature, rng)
    return AttentionTensor(maps, adj.span_start, adj.span_end, label=f"synth-seed{spec.seed}")


@dataclass(frozen=True)
class ProbeResult:
    f1: float
    precision: float
    recall: float
    predicted: frozenset = field(default=frozenset(), repr=False)


def reconstruct_edges(B: np.ndarray, adj: TokenAdjacency) -> set:
    """Node-level edges voted by a token-level mask.

    A one at ``(i, j)`` votes for ``(source block of row i, node id of
    column j)`` when column ``j`` is a node-id token naming another node.
    """
    rows, cols = np.nonzero(B)
    u = adj.sources[rows]
    w = adj.node_ids[cols]
    ok = (u >= 0) & (w >= 0) & (u != w)
    return {(int(a), int(b)) for a, b in zip(u[ok], w[ok])}


def edge_f1(predicted: set, truth: set) -> tuple[float, float, float]:
    hit = len(predicted & truth)
    precision = hit / len(predicted) if predicted else 0.0
    recall = hit / len(truth) if truth else 0.0
    f1 = 2 * precision * recall / (precision + recall) if hit else 0.0
    return f1, precision, recall


def downstream_probe(
    t: AttentionTensor,
    adj: TokenAdjacency,
    sel: SelectionResult,
    heads: Optional[set] = None,
) -> ProbeResult:
    """Adjacency-recovery F1 of the averaged selected heads."""
    heads = sel.selected_heads if heads is None else heads
    if not heads:
        raise ValueError("downstream probe needs at least one selected head")
    avg = np.mean([t.maps[l, h] for l, h in sorted(heads)], axis=0)
    predicted = reconstruct_edges(topk_binarize(avg, adj), adj)
    f1, p, r = edge_f1(predicted, adj.true_edges())
    return ProbeResult(f1, p, r, frozenset(predicted))
