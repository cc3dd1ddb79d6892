"""Acceptance suite: one check per criterion at its stated tolerance.

Run under pytest (a PASS/FAIL line per criterion is printed in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import _peaked  # noqa: E402
from topoattn.attnops import AttentionTensor, sharpen_map  # noqa: E402
from topoattn.calib import CalibrationItem, CalibrationSpec, calibrate  # noqa: E402
from topoattn.graphtext import Graph, aggregate_edges, serialize  # noqa: E402
from topoattn.headscan import (  # noqa: E402
    matrix_entropy,
    morph_close,
    otsu_threshold,
    precision_recall,
    select_heads,
)
from topoattn.spectral import dirichlet_energy, edgewise_energy, laplacian, random_graph, run_suite  # noqa: E402
from topoattn.synthmodel import GeneratorSpec, adjacency_for, generate, planted_truth  # noqa: E402
from topoattn.synthmodel import random_graph as synth_graph  # noqa: E402
from topoattn.tensorio import tensor_from_bytes, tensor_to_bytes  # noqa: E402

RESULTS: dict = {}


def _softmax_map(rng, n):
    logits = rng.normal(scale=rng.uniform(0.5, 4.0), size=(n, n))
    logits[:, 0] += rng.uniform(0, 4)
    logits[np.triu_indices(n, 1)] = -np.inf
    A = np.exp(logits - logits.max(axis=1, keepdims=True))
    return A / A.sum(axis=1, keepdims=True)


def criterion_1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_sum = worst_prop = 0.0
    identity = True
    for _ in range(1000):
        A = _softmax_map(rng, int(rng.integers(2, 65)))
        base = A[1:, 1:] / A[1:, 1:].sum(axis=1, keepdims=True)
        for gamma in (0.0, 0.25, 0.5, 0.75, 1.0):
            out, _ = sharpen_map(A, gamma)
            worst_sum = max(worst_sum, float(np.abs(out.sum(axis=1) - 1.0).max()))
            prop = out[1:, 1:] / out[1:, 1:].sum(axis=1, keepdims=True)
            worst_prop = max(worst_prop, float(np.abs(prop - base).max()))
            if gamma == 1.0:
                identity &= out.tobytes() == A.tobytes()
    dt = time.perf_counter() - t0
    ok = worst_sum <= 1e-12 and worst_prop <= 1e-12 and identity and dt < 5
    return ok, f"max|rowsum-1|={worst_sum:.1e} max proportion drift={worst_prop:.1e} identity={identity} {dt:.2f}s"


def criterion_2():
    t0 = time.perf_counter()
    checks = run_suite(seeds=20, rtol=1e-10)
    dt = time.perf_counter() - t0
    names = {c.name for c in checks}
    need = {"contraction", "expansion", "energy_decay", "spectral_amplification",
            "rho(0.5,0.5)", "decay_factor(0.5)"}
    worst = max(c.rel_err for c in checks)
    ok = need <= names and all(c.passed for c in checks) and dt < 10
    return ok, f"{len(checks)} checks, worst rel err {worst:.1e}, {dt:.2f}s"


def criterion_3():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(200):
        n, dim = int(rng.integers(2, 31)), int(rng.integers(1, 9))
        g = random_graph(rng, n, p=rng.uniform(0.05, 0.8))
        h = rng.normal(size=(n, dim))
        worst = max(worst, abs(dirichlet_energy(h, laplacian(g)) - edgewise_energy(h, g)))
    return worst <= 1e-10, f"max |trace - edgewise| = {worst:.1e}"


def criterion_4():
    ident = max(abs(matrix_entropy(np.eye(n)) - math.log(n)) for n in (2, 8, 32))
    r1 = matrix_entropy(np.outer(np.arange(1.0, 9.0), np.ones(8)))
    rng = np.random.default_rng(4)
    perm = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 33))
        A = _softmax_map(rng, n)
        perm = max(perm, abs(matrix_entropy(A[rng.permutation(n)][:, rng.permutation(n)]) - matrix_entropy(A)))
    same = 0
    for seed in range(20):
        spec = GeneratorSpec(layers=2, heads=8, planted={(1, seed % 8)}, seed=seed)
        t, adj = generate(spec), adjacency_for(spec)
        same += select_heads(t, adj).selected_heads == select_heads(t, adj, log_base=2).selected_heads
    ok = ident <= 1e-12 and r1 <= 1e-12 and perm <= 1e-10 and same == 20
    return ok, f"identity err {ident:.1e}, rank-1 {r1:.1e}, permutation {perm:.1e}, base-invariant {same}/20"


def _otsu_exhaustive(v):
    u = np.unique(v)
    best, cut = -1.0, None
    for t in u[1:]:
        a, b = v[v < t], v[v >= t]
        bv = a.size * b.size * (a.mean() - b.mean()) ** 2
        if bv > best * (1 + 1e-12):
            best, cut = bv, t
    return cut


def criterion_5():
    rng = np.random.default_rng(5)
    agree = 0
    for _ in range(100):
        m1, m2 = rng.uniform(0.0, 0.4), rng.uniform(0.6, 1.0)
        s1, s2 = rng.uniform(0.02, 0.1, size=2)
        v = np.concatenate([rng.normal(m1, s1, rng.integers(10, 300)), rng.normal(m2, s2, rng.integers(10, 300))])
        agree += np.array_equal(v >= otsu_threshold(v), v >= _otsu_exhaustive(v))
    tie = np.array([0.0, 1.0, 2.0])
    tie_ok = np.array_equal(tie >= otsu_threshold(tie), [False, True, True])
    return agree == 100 and tie_ok, f"{agree}/100 samples agree, tie case lowest cut={tie_ok}"


def _close_oracle(B):
    h, w = B.shape
    P = np.pad(B, 1)
    D = np.zeros_like(B)
    for di in range(3):
        for dj in range(3):
            D |= P[di : di + h, dj : dj + w]
    P = np.pad(D, 1, constant_values=1)
    E = np.ones_like(B)
    for di in range(3):
        for dj in range(3):
            E &= P[di : di + h, dj : dj + w]
    return E


def criterion_6():
    rng = np.random.default_rng(6)
    idem = 0
    for _ in range(500):
        B = (rng.random((32, 32)) < rng.uniform(0.05, 0.6)).astype(np.uint8)
        C = morph_close(B)
        idem += np.array_equal(morph_close(C), C)
    gap = np.array([[1, 1, 0, 1, 1]], dtype=np.uint8)
    gap_ok = np.array_equal(morph_close(gap), _close_oracle(gap)) and morph_close(gap).all()
    return idem == 500 and gap_ok, f"idempotent {idem}/500, 1x5 gap fill matches oracle={gap_ok}"


def criterion_7():
    t0 = time.perf_counter()
    perfect = 0
    for seed in range(10):
        spec = GeneratorSpec(seed=seed)
        sel = select_heads(generate(spec), adjacency_for(spec))
        perfect += precision_recall(sel.selected_heads, planted_truth(spec)) == (1.0, 1.0)
    dt = time.perf_counter() - t0
    return perfect == 10 and dt < 60, f"P=R=1 on {perfect}/10 seeds, {dt:.1f}s"


def criterion_8():
    t, adj, sel = _peaked.build()
    item = [CalibrationItem(t, adj)]
    peaked = calibrate(CalibrationSpec(item), sel).best_gamma
    flat = calibrate(CalibrationSpec(item, objective=lambda *a: 0.7), sel).best_gamma
    return peaked == 0.3 and flat == 1.0, f"peaked best={peaked}, constant best={flat}"


CAL_ITEMS = 8


def criterion_9():
    wins = []
    for seed in range(10):
        spec = GeneratorSpec(seed=seed)
        sel = select_heads(generate(spec), adjacency_for(spec))
        items = []
        for i in range(CAL_ITEMS):
            s = GeneratorSpec(graph=synth_graph(1000 * seed + i), seed=1000 * seed + i + 7)
            items.append(CalibrationItem(generate(s), adjacency_for(s)))
        res = calibrate(CalibrationSpec(items), sel)
        wins.append(res.score_at(res.best_gamma) > res.score_at(1.0))
    return sum(wins) >= 9, f"calibrated > baseline on {sum(wins)}/10 seeds"


def criterion_10():
    rng = np.random.default_rng(10)
    exact = 0
    for _ in range(50):
        L, H = (int(x) for x in rng.integers(1, 5, size=2))
        n = int(rng.integers(2, 20))
        maps = np.stack([np.stack([_softmax_map(rng, n) for _ in range(H)]) for _ in range(L)])
        s0 = int(rng.integers(0, n))
        t = AttentionTensor(maps, s0, int(rng.integers(s0, n + 1)))
        back = tensor_from_bytes(tensor_to_bytes(t))
        exact += back.maps.tobytes() == t.maps.tobytes() and (back.span_start, back.span_end) == (t.span_start, t.span_end)
    text = serialize(aggregate_edges(Graph(4, ((0, 1), (2, 3), (0, 3))))).text
    return exact == 50 and text == "(0,1)(0,3)(2,3)", f"{exact}/50 bit-exact, serialization {text}"


CRITERIA = [
    (1, "sharpening algebra", criterion_1),
    (2, "geometry and energy relations", criterion_2),
    (3, "Dirichlet energy oracle", criterion_3),
    (4, "entropy properties", criterion_4),
    (5, "Otsu oracle", criterion_5),
    (6, "morphology", criterion_6),
    (7, "planted-head recovery", criterion_7),
    (8, "calibration correctness", criterion_8),
    (9, "downstream proxy", criterion_9),
    (10, "format round-trip", criterion_10),
]


def report_line(num, name, ok, detail):
    return f"criterion {num:2d} [{name}]: {'PASS' if ok else 'FAIL'} ({detail})"


@pytest.mark.parametrize("num, name, fn", CRITERIA, ids=[f"criterion_{c[0]}" for c in CRITERIA])
def test_criterion(num, name, fn):
    ok, detail = fn()
    RESULTS[num] = report_line(num, name, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for num, name, fn in CRITERIA:
        ok, detail = fn()
        failed += not ok
        print(report_line(num, name, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
