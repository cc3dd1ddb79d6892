"""Laplacian / Dirichlet-energy tools and numeric checks of the sink geometry.

Node representations are modelled as a convex mix of a shared sink vector
and a topological part, ``H = lam * 1 v0^T + (1 - lam) * H_topo``. The
``verify_*`` functions measure the distance and energy relations that this
construction implies and report both sides.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from topoattn.attnops import amplification_ratio
from topoattn.graphtext import Graph, TokenAdjacency


@dataclass(frozen=True, eq=False)
class Laplacian:
    matrix: np.ndarray
    variant: str = "unnormalized"

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def laplacian(g: Graph) -> Laplacian:
    """Unnormalized ``D - A`` of an undirected simple graph.

    Built in integer arithmetic so that ``L @ 1 == 0`` holds exactly.
    Repeated edges collapse to one.
    """
    if g.directed:
        raise ValueError("laplacian requires an undirected graph")
    adj = np.zeros((g.num_nodes, g.num_nodes), dtype=np.int64)
    for u, v in g.edges:
        if u == v:
            raise ValueError(f"self-loop ({u},{v}) not allowed in a simple graph")
        adj[u, v] = adj[v, u] = 1
    L = np.diag(adj.sum(axis=1)) - adj
    return Laplacian(L)


def _as_matrix(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    return h[:, None] if h.ndim == 1 else h


def dirichlet_energy(h: np.ndarray, L: Laplacian) -> float:
    """``tr(H^T L H)``."""
    H = _as_matrix(h)
    if H.shape[0] != L.n:
        raise ValueError(f"H has {H.shape[0]} rows, Laplacian is {L.n}x{L.n}")
    return float(np.sum(H * (L.matrix @ H)))


def edgewise_energy(h: np.ndarray, g: Graph) -> float:
    """Sum of squared differences over the distinct undirected edges."""
    H = _as_matrix(h)
    pairs = {tuple(sorted(e)) for e in g.edges}
    return float(sum(np.sum((H[u] - H[v]) ** 2) for u, v in pairs))


@dataclass(frozen=True, eq=False)
class NodeRepresentation:
    h: np.ndarray
    lam: Union[float, np.ndarray]
    v0: np.ndarray
    h_topo: np.ndarray

    def lam_of(self, k: int) -> float:
        return float(self.lam) if np.ndim(self.lam) == 0 else float(self.lam[k])


def _mix(h_topo: np.ndarray, v0: np.ndarray, lam) -> np.ndarray:
    lam_col = np.asarray(lam, dtype=np.float64).reshape(-1, 1) if np.ndim(lam) else lam
    return lam_col * v0[None, :] + (1.0 - lam_col) * h_topo


def mix_with_sink(h_topo: np.ndarray, v0: np.ndarray, lam) -> NodeRepresentation:
    """Blend every node with the sink vector ``v0`` at weight ``lam``.

    ``lam`` is normally a scalar; a per-node array is accepted for
    perturbation studies.
    """
    h_topo = _as_matrix(h_topo)
    v0 = np.asarray(v0, dtype=np.float64).reshape(-1)
    if v0.shape[0] != h_topo.shape[1]:
        raise ValueError(f"v0 has length {v0.shape[0]}, representations have dim {h_topo.shape[1]}")
    lam_arr = np.asarray(lam, dtype=np.float64)
    if np.any(lam_arr < 0) or np.any(lam_arr >= 1) or not np.all(np.isfinite(lam_arr)):
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    if lam_arr.ndim and lam_arr.shape != (h_topo.shape[0],):
        raise ValueError("per-node lambda must have one entry per node")
    lam_val = float(lam_arr) if lam_arr.ndim == 0 else lam_arr
    return NodeRepresentation(_mix(h_topo, v0, lam_val), lam_val, v0, h_topo)


class Contraction(NamedTuple):
    lhs: float
    rhs: float
    ratio: float


class Expansion(NamedTuple):
    observed_ratio: float
    predicted_rho: float


class EnergyDecay(NamedTuple):
    e_mixed: float
    e_topo: float
    factor: Optional[float]


class SpectralAmplification(NamedTuple):
    e_sharpened: float
    predicted: float


def verify_contraction(rep: NodeRepresentation, k: int, l: int) -> Contraction:
    """Distance between nodes ``k`` and ``l`` versus ``(1 - lam)`` times their
    sink-free distance. With per-node weights the mean of the two is used."""
    if k == l:
        raise ValueError("k and l must differ")
    lam = 0.5 * (rep.lam_of(k) + rep.lam_of(l))
    lhs = float(np.linalg.norm(rep.h[k] - rep.h[l]))
    topo = float(np.linalg.norm(rep.h_topo[k] - rep.h_topo[l]))
    ratio = lhs / topo if topo > 0 else (math.nan if lhs == 0 else math.inf)
    return Contraction(lhs, (1.0 - lam) * topo, ratio)


def sharpened(rep: NodeRepresentation, gamma: float) -> np.ndarray:
    """Representations after the sink weight drops to ``gamma * lam``."""
    lam = rep.lam if np.ndim(rep.lam) == 0 else np.asarray(rep.lam)
    return _mix(rep.h_topo, rep.v0, gamma * lam)


def verify_expansion(rep: NodeRepresentation, gamma: float, k: int, l: int) -> Expansion:
    base = float(np.linalg.norm(rep.h[k] - rep.h[l]))
    if base == 0.0:
        raise ValueError(f"nodes {k} and {l} coincide; distance ratio undefined")
    hs = sharpened(rep, gamma)
    observed = float(np.linalg.norm(hs[k] - hs[l])) / base
    lam = 0.5 * (rep.lam_of(k) + rep.lam_of(l))
    return Expansion(observed, amplification_ratio(lam, gamma))


def verify_energy_decay(rep: NodeRepresentation, L: Laplacian) -> EnergyDecay:
    e_mixed = dirichlet_energy(rep.h, L)
    e_topo = dirichlet_energy(rep.h_topo, L)
    factor = e_mixed / e_topo if e_topo > 0 else None
    return EnergyDecay(e_mixed, e_topo, factor)


def verify_spectral_amplification(
    rep: NodeRepresentation, L: Laplacian, gamma: float
) -> SpectralAmplification:
    lam = float(np.mean(rep.lam))
    e_sharp = dirichlet_energy(sharpened(rep, gamma), L)
    return SpectralAmplification(e_sharp, amplification_ratio(lam, gamma) ** 2 * dirichlet_energy(rep.h, L))


class GatStep(NamedTuple):
    h_full: np.ndarray
    h_simplified: np.ndarray
    residual_norm: float


def implicit_gat_step(A: np.ndarray, adj: TokenAdjacency, values: np.ndarray) -> GatStep:
    """Exact attention output next to its sink-plus-neighbours approximation.

    ``residual_norm`` is the largest per-row relative gap between the two;
    rows whose exact output is zero are skipped.
    """
    A = np.asarray(A, dtype=np.float64)
    V = _as_matrix(values)
    if A.shape != (adj.n, adj.n) or V.shape[0] != adj.n:
        raise ValueError(f"map {A.shape}, values {V.shape}, adjacency n={adj.n} disagree")
    keep = adj.mask.copy()
    np.fill_diagonal(keep, False)
    keep[:, 0] = True
    keep &= np.tri(adj.n, dtype=bool)
    h_full = A @ V
    h_simple = np.where(keep, A, 0.0) @ V
    full_norm = np.linalg.norm(h_full, axis=1)
    diff = np.linalg.norm(h_full - h_simple, axis=1)
    live = full_norm > 0
    residual = float(np.max(diff[live] / full_norm[live])) if live.any() else 0.0
    return GatStep(h_full, h_simple, residual)


@dataclass
class CheckResult:
    name: str
    lhs: float
    rhs: float
    abs_err: float
    rel_err: float
    passed: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _check(name: str, lhs: float, rhs: float, rtol: float) -> CheckResult:
    abs_err = abs(lhs - rhs)
    scale = max(abs(lhs), abs(rhs))
    rel_err = abs_err / scale if scale > 0 else 0.0
    return CheckResult(name, float(lhs), float(rhs), abs_err, rel_err, rel_err <= rtol or abs_err <= 1e-300)


def random_graph(rng: np.random.Generator, n: int, p: float = 0.4) -> Graph:
    """Erdos-Renyi graph; adds a path if the draw produced no edges."""
    iu = np.triu_indices(n, k=1)
    keep = rng.random(iu[0].size) < p
    edges = [(int(u), int(v)) for u, v in zip(iu[0][keep], iu[1][keep])]
    if not edges:
        edges = [(i, i + 1) for i in range(n - 1)]
    return Graph(n, tuple(edges))


DEFAULT_LAMBDAS = tuple(round(0.1 * i, 10) for i in range(1, 10))
DEFAULT_GAMMAS = tuple(round(0.1 * i, 10) for i in range(0, 11))


def run_suite(
    seeds: int = 20,
    lambdas=DEFAULT_LAMBDAS,
    gammas=DEFAULT_GAMMAS,
    rtol: float = 1e-10,
    base_seed: int = 0,
    n_nodes: int = 12,
    dim: int = 6,
) -> list[CheckResult]:
    """Run every geometry/energy relation over a (lambda, gamma) grid.

    Each seed draws a random graph, topological representations and a sink
    vector; the per-cell checks are aggregated to their worst case.
    """
    worst: dict[str, CheckResult] = {}

    def record(res: CheckResult) -> None:
        cur = worst.get(res.name)
        if cur is None or (not res.passed and cur.passed) or (res.passed == cur.passed and res.rel_err > cur.rel_err):
            worst[res.name] = res

    for s in range(seeds):
        rng = np.random.default_rng(base_seed + s)
        g = random_graph(rng, n_nodes)
        L = laplacian(g)
        h_topo = rng.normal(size=(n_nodes, dim))
        v0 = rng.normal(size=dim) * 3.0
        k, l = (int(x) for x in rng.choice(n_nodes, size=2, replace=False))
        for lam in lambdas:
            rep = mix_with_sink(h_topo, v0, lam)
            c = verify_contraction(rep, k, l)
            record(_check("contraction", c.lhs, c.rhs, rtol))
            d = verify_energy_decay(rep, L)
            record(_check("energy_decay", d.e_mixed, (1.0 - lam) ** 2 * d.e_topo, rtol))
            for gamma in gammas:
                e = verify_expansion(rep, gamma, k, l)
                record(_check("expansion", e.observed_ratio, e.predicted_rho, rtol))
                a = verify_spectral_amplification(rep, L, gamma)
                record(_check("spectral_amplification", a.e_sharpened, a.predicted, rtol))

    pinned = [
        _check("rho(0.5,0.5)", amplification_ratio(0.5, 0.5), 1.5, rtol),
        _check("decay_factor(0.5)", (1.0 - 0.5) ** 2, 0.25, rtol),
    ]
    rng = np.random.default_rng(base_seed)
    rep = mix_with_sink(rng.normal(size=(n_nodes, dim)), rng.normal(size=dim), 0.5)
    g = random_graph(rng, n_nodes)
    d = verify_energy_decay(rep, laplacian(g))
    pinned.append(_check("energy_decay_factor(0.5)", d.factor, 0.25, rtol))
    e = verify_expansion(rep, 0.5, 0, 1)
    pinned.append(_check("expansion_ratio(0.5,0.5)", e.observed_ratio, 1.5, rtol))
    return list(worst.values()) + pinned
