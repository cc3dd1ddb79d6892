"""Grid search for the sharpening factor on a calibration set."""

from __future__ import annotations

import enum
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from topoattn.attnops import AttentionTensor, Granularity, SharpenConfig, sharpen_tensor
from topoattn.graphtext import TokenAdjacency
from topoattn.headscan import SelectionResult
from topoattn.synthmodel import downstream_probe
from topoattn.tensorio import write_tensor

DEFAULT_GRID = tuple(round(0.1 * i, 10) for i in range(1, 11))

Objective = Callable[[AttentionTensor, TokenAdjacency, SelectionResult], float]


class CalibrationError(RuntimeError):
    def __init__(self, message: str, item: Optional[int] = None):
        super().__init__(message if item is None else f"item {item}: {message}")
        self.item = item


class ObjectiveKind(str, enum.Enum):
    ADJACENCY_F1 = "adjacency_f1"
    CUSTOM = "custom"


def adjacency_f1(t: AttentionTensor, adj: TokenAdjacency, sel: SelectionResult) -> float:
    return downstream_probe(t, adj, sel).f1


@dataclass(frozen=True)
class ExternalScorer:
    """Scores a tensor by running ``command <tensor.slsh>`` in a child process.

    The child must print a single float on stdout; a nonzero exit or
    unparsable output fails the item.
    """

    command: str
    timeout: Optional[float] = 120.0

    def __call__(self, t: AttentionTensor, adj: TokenAdjacency, sel: SelectionResult) -> float:
        with tempfile.TemporaryDirectory(prefix="topoattn-score-") as tmp:
            path = Path(tmp) / "tensor.slsh"
            write_tensor(t, path)
            proc = subprocess.run(
                [*shlex.split(self.command), str(path)],
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        if proc.returncode != 0:
            raise CalibrationError(
                f"scorer exited with {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
        if len(lines) != 1:
            raise CalibrationError(f"scorer printed {len(lines)} lines, expected 1")
        try:
            return float(lines[0])
        except ValueError:
            raise CalibrationError(f"scorer output {lines[0]!r} is not a number") from None


@dataclass
class CalibrationItem:
    tensor: AttentionTensor
    adjacency: TokenAdjacency


@dataclass
class CalibrationSpec:
    items: Sequence[CalibrationItem]
    gamma_grid: Sequence[float] = DEFAULT_GRID
    objective: Union[ObjectiveKind, str, Objective] = ObjectiveKind.ADJACENCY_F1
    scorer_command: Optional[str] = None
    granularity: Granularity = Granularity.LAYER

    def __post_init__(self) -> None:
        grid = [float(g) for g in self.gamma_grid]
        if not grid:
            raise ValueError("gamma grid is empty")
        if any(not 0.0 <= g <= 1.0 for g in grid):
            raise ValueError("gamma grid values must lie in [0, 1]")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("gamma grid must be strictly increasing")
        self.gamma_grid = tuple(grid)
        self.granularity = Granularity(self.granularity)

    def resolve_objective(self) -> Objective:
        if callable(self.objective):
            return self.objective
        kind = ObjectiveKind(self.objective)
        if kind is ObjectiveKind.ADJACENCY_F1:
            return adjacency_f1
        if not self.scorer_command:
            raise ValueError("custom objective needs a scorer command")
        return ExternalScorer(self.scorer_command)


@dataclass
class GammaScore:
    gamma: float
    mean_score: float
    per_item: list = field(default_factory=list)


@dataclass
class CalibrationResult:
    per_gamma: list
    best_gamma: float

    def to_dict(self) -> dict:
        return {
            "best_gamma": self.best_gamma,
            "per_gamma": [
                {"gamma": g.gamma, "mean_score": g.mean_score, "per_item": list(g.per_item)}
                for g in self.per_gamma
            ],
        }

    def score_at(self, gamma: float) -> float:
        for g in self.per_gamma:
            if g.gamma == gamma:
                return g.mean_score
        raise KeyError(gamma)


def calibrate(spec: CalibrationSpec, sel: SelectionResult) -> CalibrationResult:
    """Score every grid value on every item and keep the best mean.

    Sharpening targets the selected layers (or heads, at head granularity).
    Equal means resolve toward the larger gamma.
    """
    if not spec.items:
        raise ValueError("no calibration items")
    if not sel.selected_heads:
        raise ValueError("selection is empty; nothing to sharpen")
    targets = (
        sel.selected_layers if spec.granularity is Granularity.LAYER else sel.selected_heads
    )
    objective = spec.resolve_objective()

    per_gamma = []
    for gamma in spec.gamma_grid:
        cfg = SharpenConfig(gamma, spec.granularity, targets)
        scores = []
        for idx, item in enumerate(spec.items):
            sharpened = sharpen_tensor(item.tensor, cfg).tensor
            try:
                scores.append(float(objective(sharpened, item.adjacency, sel)))
            except CalibrationError as exc:
                raise CalibrationError(str(exc), idx) from None
            except Exception as exc:
                raise CalibrationError(f"objective failed: {exc}", idx) from exc
        per_gamma.append(GammaScore(gamma, float(np.mean(scores)), scores))

    best = per_gamma[0]
    for g in per_gamma[1:]:
        if g.mean_score >= best.mean_score:
            best = g
    return CalibrationResult(per_gamma, best.gamma)
