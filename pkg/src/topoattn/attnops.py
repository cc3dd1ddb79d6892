"""Causal attention tensors, budget decomposition and sink sharpening."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from topoattn import kernels
from topoattn.graphtext import TokenAdjacency

ROW_SUM_TOL = 1e-9
DEGENERATE_EPS = 1e-12


@dataclass(eq=False)
class AttentionTensor:
    """Stack of ``L x H`` row-stochastic lower-triangular ``n x n`` maps.

    ``maps`` has shape ``(layers, heads, n, n)``; ``[span_start, span_end)``
    marks the edge-description tokens inside the sequence.
    """

    maps: np.ndarray
    span_start: int = 0
    span_end: Optional[int] = None
    label: str = ""

    def __post_init__(self) -> None:
        self.maps = np.asarray(self.maps, dtype=np.float64)
        if self.maps.ndim != 4 or self.maps.shape[2] != self.maps.shape[3]:
            raise ValueError(f"maps must have shape (L, H, n, n), got {self.maps.shape}")
        if self.span_end is None:
            self.span_end = self.n
        if not 0 <= self.span_start <= self.span_end <= self.n:
            raise ValueError(f"span [{self.span_start},{self.span_end}) outside 0..{self.n}")

    @property
    def layers(self) -> int:
        return self.maps.shape[0]

    @property
    def heads(self) -> int:
        return self.maps.shape[1]

    @property
    def n(self) -> int:
        return self.maps.shape[2]

    def head_ids(self) -> list[tuple[int, int]]:
        return [(l, h) for l in range(self.layers) for h in range(self.heads)]

    def copy(self) -> "AttentionTensor":
        return AttentionTensor(self.maps.copy(), self.span_start, self.span_end, self.label)


@dataclass(frozen=True)
class Violation:
    kind: str
    layer: int
    head: int
    row: int
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def summary(self, limit: int = 10) -> str:
        if self.ok:
            return "clean"
        lines = [
            f"{v.kind} at layer={v.layer} head={v.head} row={v.row}: {v.detail}"
            for v in self.violations[:limit]
        ]
        if len(self.violations) > limit:
            lines.append(f"... {len(self.violations) - limit} more")
        return "\n".join(lines)


def validate_tensor(t: AttentionTensor, tol: float = ROW_SUM_TOL) -> ValidationReport:
    """Check causality, entry range and row sums for every map."""
    report = ValidationReport()
    upper = ~np.tri(t.n, dtype=bool)
    for l, h in t.head_ids():
        A = t.maps[l, h]
        for i in np.flatnonzero((upper & (A != 0)).any(axis=1)):
            report.violations.append(
                Violation("causality", l, h, int(i), "nonzero entry above the diagonal")
            )
        bad_range = (A < 0) | (A > 1) | ~np.isfinite(A)
        for i in np.flatnonzero(bad_range.any(axis=1)):
            report.violations.append(Violation("range", l, h, int(i), "entry outside [0, 1]"))
        sums = np.where(upper, 0.0, A).sum(axis=1)
        for i in np.flatnonzero(~(np.abs(sums - 1.0) <= tol)):
            report.violations.append(
                Violation("row_sum", l, h, int(i), f"row sums to {sums[i]!r}")
            )
    return report


@dataclass(frozen=True)
class BudgetBreakdown:
    sink_fraction: float
    structural_fraction: float
    noise_fraction: float
    per_row: Optional[np.ndarray] = field(default=None, repr=False, compare=False)
    rows: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "sink": self.sink_fraction,
            "structural": self.structural_fraction,
            "noise": self.noise_fraction,
        }


def budget(A: np.ndarray, adj: TokenAdjacency) -> BudgetBreakdown:
    """Split each span row into sink, preceding-neighbour and residual mass.

    The structural term only counts strictly preceding neighbours
    (``1 <= j < i``), so a row's own diagonal weight lands in noise.
    ``per_row`` holds ``(sink, structural, noise)`` for each scored row.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.shape != (adj.n, adj.n):
        raise ValueError(f"map is {A.shape}, adjacency expects {(adj.n, adj.n)}")
    rows = np.arange(max(adj.span_start, 1), adj.span_end)
    if rows.size == 0:
        raise ValueError("no scorable rows in span")
    pre = adj.mask.copy()
    np.fill_diagonal(pre, False)
    pre[:, 0] = False
    lower = np.tri(adj.n, dtype=bool)
    sub = np.where(lower, A, 0.0)[rows]
    sink = sub[:, 0]
    structural = np.where(pre[rows], sub, 0.0).sum(axis=1)
    noise_mask = lower[rows] & ~pre[rows]
    noise_mask[:, 0] = False
    noise = np.where(noise_mask, sub, 0.0).sum(axis=1)
    per_row = np.stack([sink, structural, noise], axis=1)
    agg = per_row.mean(axis=0)
    return BudgetBreakdown(float(agg[0]), float(agg[1]), float(agg[2]), per_row, rows)


def _check_gamma(gamma: float) -> None:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")


def sharpen_map(A: np.ndarray, gamma: float) -> tuple[np.ndarray, int]:
    """Scale the sink column by ``gamma`` and hand the freed mass to the
    remaining entries of each row in proportion to their weight.

    Non-sink entries are multiplied by ``1 + (1 - gamma) * lam / rest`` where
    ``rest`` is the row's actual non-sink sum. For an exactly stochastic row
    ``rest == 1 - lam``; using the realized sum keeps the row total accurate
    when ``lam`` sits very close to 1.

    Returns the new map and the number of rows left untouched because they
    carried no non-sink mass. Row 0 is never modified and not counted.
    """
    _check_gamma(gamma)
    return kernels.sharpen_rows(A, float(gamma), DEGENERATE_EPS)


class Granularity(str, enum.Enum):
    HEAD = "head"
    LAYER = "layer"


@dataclass(frozen=True)
class SharpenConfig:
    gamma: float
    granularity: Granularity = Granularity.LAYER
    targets: frozenset = frozenset()

    def __post_init__(self) -> None:
        _check_gamma(self.gamma)
        object.__setattr__(self, "granularity", Granularity(self.granularity))
        object.__setattr__(self, "targets", frozenset(self.targets))

    def heads(self, t: AttentionTensor) -> list[tuple[int, int]]:
        """Resolve the targets to concrete ``(layer, head)`` pairs."""
        if not self.targets:
            raise ValueError("no sharpening targets given")
        if self.granularity is Granularity.LAYER:
            bad = sorted(l for l in self.targets if not 0 <= l < t.layers)
            if bad:
                raise IndexError(f"layer targets out of bounds for {t.layers} layers: {bad}")
            return [(l, h) for l in sorted(self.targets) for h in range(t.heads)]
        bad = sorted(
            (l, h) for l, h in self.targets if not (0 <= l < t.layers and 0 <= h < t.heads)
        )
        if bad:
            raise IndexError(f"head targets out of bounds for {t.layers}x{t.heads}: {bad}")
        return sorted(self.targets)


@dataclass
class SharpenResult:
    tensor: AttentionTensor
    degenerate_rows: dict


def sharpen_tensor(t: AttentionTensor, cfg: SharpenConfig) -> SharpenResult:
    """Apply ``sharpen_map`` to every targeted head; others are copied as is."""
    out = t.copy()
    degenerate = {}
    for l, h in cfg.heads(t):
        out.maps[l, h], degenerate[(l, h)] = sharpen_map(t.maps[l, h], cfg.gamma)
    return SharpenResult(out, degenerate)


def amplification_ratio(lam: float, gamma: float) -> float:
    """Pairwise distance scaling ``(1 - gamma*lam) / (1 - lam)`` caused by sharpening."""
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    _check_gamma(gamma)
    return (1.0 - gamma * lam) / (1.0 - lam)


def parse_targets(text: str, granularity: Granularity) -> frozenset:
    """Parse ``"2,3"`` (layers) or ``"2:1,2:5"`` (heads)."""
    items = [p.strip() for p in text.split(",") if p.strip()]
    if Granularity(granularity) is Granularity.LAYER:
        return frozenset(int(p) for p in items)
    heads = set()
    for p in items:
        l, _, h = p.partition(":")
        heads.add((int(l), int(h)))
    return frozenset(heads)


def target_list(targets: Iterable) -> list:
    return sorted(list(t) if isinstance(t, tuple) else t for t in targets)
