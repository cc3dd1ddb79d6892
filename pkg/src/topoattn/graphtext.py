"""Graphs, edge-tuple serialization and the token-level ground-truth adjacency.

A graph is serialized as concatenated ``(u,v)`` tuples. Every tuple expands to
exactly five tokens (``(``, ``u``, ``,``, ``v``, ``)``), node ids stay whole, so
the token-level adjacency can be built exactly without a model tokenizer.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np


class GraphError(ValueError):
    """Raised for malformed or invalid graph input."""


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    directed: bool = False
    allow_self_loops: bool = False
    aggregated: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple((int(u), int(v)) for u, v in self.edges))
        if self.num_nodes < 0:
            raise GraphError(f"num_nodes must be non-negative, got {self.num_nodes}")
        for idx, (u, v) in enumerate(self.edges):
            if not (0 <= u < self.num_nodes and 0 <= v < self.num_nodes):
                raise GraphError(
                    f"edge {idx} ({u},{v}): node-id out of range for num_nodes={self.num_nodes}"
                )
            if u == v and not self.allow_self_loops:
                raise GraphError(f"edge {idx} ({u},{v}): self-loop not permitted")
        if self.aggregated and not is_grouped([u for u, _ in self.edges]):
            raise GraphError("graph marked aggregated but edges are not grouped by source")

    def to_dict(self) -> dict:
        return {
            "num_nodes": self.num_nodes,
            "edges": [list(e) for e in self.edges],
            "directed": self.directed,
            "allow_self_loops": self.allow_self_loops,
            "aggregated": self.aggregated,
        }


def graph_from_dict(data: dict) -> Graph:
    if not isinstance(data, dict):
        raise GraphError("graph JSON must be an object")
    try:
        num_nodes = data["num_nodes"]
        edges = data["edges"]
    except KeyError as exc:
        raise GraphError(f"graph JSON missing field {exc.args[0]!r}") from None
    if not isinstance(num_nodes, int) or isinstance(num_nodes, bool):
        raise GraphError("num_nodes must be an integer")
    parsed = []
    for idx, edge in enumerate(edges):
        if (
            not isinstance(edge, (list, tuple))
            or len(edge) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in edge)
        ):
            raise GraphError(f"edge {idx} must be a pair of integers, got {edge!r}")
        parsed.append((edge[0], edge[1]))
    return Graph(
        num_nodes=num_nodes,
        edges=tuple(parsed),
        directed=bool(data.get("directed", False)),
        allow_self_loops=bool(data.get("allow_self_loops", False)),
        aggregated=bool(data.get("aggregated", False)),
    )


def load_graph(source: Union[bytes, str, IO]) -> Graph:
    """Load a graph from JSON bytes, text or a readable stream.

    Edges keep their file order; validation happens on construction.
    """
    if hasattr(source, "read"):
        source = source.read()
    try:
        data = json.loads(source)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise GraphError(f"malformed graph JSON: {exc}") from None
    return graph_from_dict(data)


def aggregate_edges(g: Graph) -> Graph:
    """Stably regroup edges so that edges sharing a source are contiguous.

    Groups appear in order of first occurrence of their source node; the
    relative order inside a group is the original one.
    """
    groups: dict[int, list[tuple[int, int]]] = {}
    for edge in g.edges:
        groups.setdefault(edge[0], []).append(edge)
    regrouped = tuple(e for group in groups.values() for e in group)
    return Graph(
        num_nodes=g.num_nodes,
        edges=regrouped,
        directed=g.directed,
        allow_self_loops=g.allow_self_loops,
        aggregated=True,
    )


def is_grouped(sources: Sequence[int]) -> bool:
    """True when equal values in ``sources`` form a single contiguous run each."""
    seen: set[int] = set()
    prev: Optional[int] = None
    for s in sources:
        if s != prev:
            if s in seen:
                return False
            seen.add(s)
            prev = s
    return True


class TokenClass(str, enum.Enum):
    OPEN = "OPEN"
    NODE = "NODE"
    COMMA = "COMMA"
    CLOSE = "CLOSE"


@dataclass(frozen=True)
class Token:
    text: str
    kind: TokenClass
    edge_index: Optional[int] = None
    source_node: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "class": self.kind.value,
            "edge_index": self.edge_index,
            "source_node": self.source_node,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Token":
        return cls(
            text=data["text"],
            kind=TokenClass(data["class"]),
            edge_index=data.get("edge_index"),
            source_node=data.get("source_node"),
        )


_PUNCT = {TokenClass.OPEN: "(", TokenClass.COMMA: ",", TokenClass.CLOSE: ")"}


@dataclass(frozen=True)
class TokenizedSerialization:
    tokens: tuple[Token, ...]
    aggregated: bool = False

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def text(self) -> str:
        return "".join(t.text for t in self.tokens)

    def edges(self) -> list[tuple[int, int]]:
        """Recover the serialized (source, target) tuples in order."""
        out = []
        for start in range(0, len(self.tokens) - 4, 5):
            u, v = self.tokens[start + 1], self.tokens[start + 3]
            out.append((int(u.text), int(v.text)))
        return out

    def check(self) -> None:
        """Raise ``GraphError`` if the token stream breaks its structural rules."""
        pattern = (TokenClass.OPEN, TokenClass.NODE, TokenClass.COMMA, TokenClass.NODE, TokenClass.CLOSE)
        if len(self.tokens) % 5:
            raise GraphError("token count is not a multiple of 5")
        for i, tok in enumerate(self.tokens):
            if tok.kind is not TokenClass.NODE and tok.text != _PUNCT[tok.kind]:
                raise GraphError(f"token {i}: bad text {tok.text!r} for {tok.kind.value}")
            if tok.kind is not pattern[i % 5]:
                raise GraphError(f"token {i}: expected {pattern[i % 5].value}, got {tok.kind.value}")
            if tok.edge_index != i // 5:
                raise GraphError(f"token {i}: edge_index {tok.edge_index} != {i // 5}")
        if self.aggregated and not is_grouped([t.source_node for t in self.tokens[::5]]):
            raise GraphError("aggregated serialization has non-contiguous source groups")

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "aggregated": self.aggregated,
            "tokens": [t.to_dict() for t in self.tokens],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TokenizedSerialization":
        return cls(
            tokens=tuple(Token.from_dict(t) for t in data["tokens"]),
            aggregated=bool(data.get("aggregated", False)),
        )


def serialize(g: Graph) -> TokenizedSerialization:
    tokens: list[Token] = []
    for idx, (u, v) in enumerate(g.edges):
        tokens += [
            Token("(", TokenClass.OPEN, idx, u),
            Token(str(u), TokenClass.NODE, idx, u),
            Token(",", TokenClass.COMMA, idx, u),
            Token(str(v), TokenClass.NODE, idx, u),
            Token(")", TokenClass.CLOSE, idx, u),
        ]
    return TokenizedSerialization(tuple(tokens), aggregated=g.aggregated)


@dataclass(frozen=True, eq=False)
class TokenAdjacency:
    """Token-level ground truth ``M_gt`` plus the in/out scoring regions.

    ``mask``, ``in_region`` and ``out_region`` are boolean ``n x n`` arrays.
    ``sources``/``node_ids`` give, per token position, the source node of
    its edge description and the node id of NODE tokens (``-1`` if none).
    """

    n: int
    mask: np.ndarray
    in_region: np.ndarray
    out_region: np.ndarray
    span_start: int
    span_end: int
    sources: np.ndarray
    node_ids: np.ndarray
    serialization: Optional[TokenizedSerialization] = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return int(self.mask.sum())

    def true_edges(self) -> set[tuple[int, int]]:
        if self.serialization is None:
            raise ValueError("adjacency carries no serialization")
        return set(self.serialization.edges())

    def padded(self, n: int) -> "TokenAdjacency":
        """Same regions embedded in a larger ``n x n`` token window."""
        if n < self.span_end:
            raise ValueError(f"cannot fit span [{self.span_start},{self.span_end}) into n={n}")
        if n == self.n:
            return self
        return _pad_arrays(self, n)

    def to_dict(self) -> dict:
        d = {
            "n": self.n,
            "span": [self.span_start, self.span_end],
            "k": self.k,
            "in_region": np.argwhere(self.in_region).tolist(),
            "out_region_size": int(self.out_region.sum()),
        }
        if self.serialization is not None:
            d["serialization"] = self.serialization.to_dict()
        return d


def _pad_arrays(adj: TokenAdjacency, n: int) -> TokenAdjacency:
    def grow(a: np.ndarray) -> np.ndarray:
        out = np.zeros((n, n), dtype=bool)
        out[: adj.n, : adj.n] = a
        return out

    sources = np.full(n, -1, dtype=np.int64)
    sources[: adj.n] = adj.sources
    node_ids = np.full(n, -1, dtype=np.int64)
    node_ids[: adj.n] = adj.node_ids
    return TokenAdjacency(
        n, grow(adj.mask), grow(adj.in_region), grow(adj.out_region),
        adj.span_start, adj.span_end, sources, node_ids, adj.serialization,
    )


def build_token_adjacency(
    s: TokenizedSerialization,
    span_start: int = 0,
    n: Optional[int] = None,
) -> TokenAdjacency:
    """Build ``M_gt`` for a serialization placed at ``span_start`` in an
    ``n``-token window (``n`` defaults to the end of the serialization).

    ``mask[i, j] = 1`` iff ``j <= i`` and both tokens carry the same source
    node. Both regions exclude column 0 and anything outside the span.
    """
    if len(s) == 0:
        raise ValueError("empty serialization")
    span_end = span_start + len(s)
    if n is None:
        n = span_end
    if span_start < 0 or n < span_end:
        raise ValueError(f"span [{span_start},{span_end}) does not fit in n={n}")

    sources = np.full(n, -1, dtype=np.int64)
    node_ids = np.full(n, -1, dtype=np.int64)
    for offset, tok in enumerate(s.tokens):
        if tok.source_node is not None:
            sources[span_start + offset] = tok.source_node
        if tok.kind is TokenClass.NODE:
            node_ids[span_start + offset] = int(tok.text)

    defined = sources >= 0
    same = (sources[:, None] == sources[None, :]) & defined[:, None] & defined[None, :]
    lower = np.tri(n, dtype=bool)
    mask = same & lower

    in_span = np.zeros(n, dtype=bool)
    in_span[span_start:span_end] = True
    scored = lower & in_span[:, None] & in_span[None, :]
    scored[:, 0] = False
    in_region = mask & scored
    out_region = scored & ~mask
    return TokenAdjacency(n, mask, in_region, out_region, span_start, span_end, sources, node_ids, s)


def graph_text(edges: Iterable[tuple[int, int]]) -> str:
    return "".join(f"({u},{v})" for u, v in edges)
