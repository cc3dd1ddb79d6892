import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from topoattn.attnops import (
    AttentionTensor,
    SharpenConfig,
    amplification_ratio,
    budget,
    parse_targets,
    sharpen_map,
    sharpen_tensor,
    validate_tensor,
)
from topoattn.graphtext import Graph, build_token_adjacency, serialize

from conftest import random_causal_map


def _tensor(rng, L=2, H=3, n=8):
    maps = np.stack([np.stack([random_causal_map(rng, n, 1.0) for _ in range(H)]) for _ in range(L)])
    return AttentionTensor(maps)


def test_validate_identity_clean():
    t = AttentionTensor(np.eye(5)[None, None])
    assert validate_tensor(t).ok


def test_validate_row_sum_violation():
    A = np.eye(5)
    A[3, 3] = 0.9
    rep = validate_tensor(AttentionTensor(A[None, None]))
    assert [(v.kind, v.row) for v in rep.violations] == [("row_sum", 3)]


def test_validate_causality_violation():
    A = np.eye(4)
    A[1, 1] = 0.5
    A[1, 3] = 0.5
    rep = validate_tensor(AttentionTensor(np.stack([np.eye(4), A])[None]))
    kinds = {(v.kind, v.layer, v.head, v.row) for v in rep.violations}
    assert ("causality", 0, 1, 1) in kinds


def test_validate_range_violation():
    A = np.eye(3)
    A[2, 1], A[2, 2] = -0.5, 1.5
    rep = validate_tensor(AttentionTensor(A[None, None]))
    assert any(v.kind == "range" and v.row == 2 for v in rep.violations)


def _three_token_adj(pre_neighbour: bool):
    # span covers tokens 1..2 with an optional shared source
    from topoattn.graphtext import Token, TokenClass, TokenizedSerialization

    toks = (
        Token("(", TokenClass.OPEN, 0, 0),
        Token("0", TokenClass.NODE, 0, 0 if pre_neighbour else 1),
    )
    return build_token_adjacency(TokenizedSerialization(toks), span_start=1)


def test_budget_direct_summation():
    adj = _three_token_adj(True)
    A = np.array([[1.0, 0, 0], [0.4, 0.6, 0], [0.5, 0.3, 0.2]])
    b = budget(A, adj)
    assert b.per_row[-1] == pytest.approx([0.5, 0.3, 0.2], abs=1e-15)
    assert list(b.rows) == [1, 2]
    # row 1: no preceding neighbour, its diagonal counts as noise
    assert b.per_row[0] == pytest.approx([0.4, 0.0, 0.6], abs=1e-15)


def test_budget_without_neighbour():
    adj = _three_token_adj(False)
    A = np.array([[1.0, 0, 0], [0.4, 0.6, 0], [0.5, 0.3, 0.2]])
    assert budget(A, adj).per_row[-1] == pytest.approx([0.5, 0.0, 0.5], abs=1e-15)


def test_budget_dimension_mismatch(two_block_adj):
    with pytest.raises(ValueError):
        budget(np.eye(4), two_block_adj)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_budget_sums_to_one(seed):
    rng = np.random.default_rng(seed)
    adj = build_token_adjacency(serialize(Graph(4, ((0, 1), (0, 2), (1, 3)))), span_start=1)
    b = budget(random_causal_map(rng, adj.n, 2.0), adj)
    assert np.allclose(b.per_row.sum(axis=1), 1.0, atol=1e-9)
    assert b.sink_fraction + b.structural_fraction + b.noise_fraction == pytest.approx(1.0, abs=1e-9)


ROW = np.array([[1.0, 0, 0], [0.6, 0.4, 0], [0.5, 0.3, 0.2]])


def test_sharpen_identity_at_one():
    out, deg = sharpen_map(ROW, 1.0)
    assert out.tobytes() == ROW.tobytes()
    assert deg == 0


@pytest.mark.parametrize(
    "gamma, expected",
    [(0.5, [0.25, 0.45, 0.30]), (0.0, [0.0, 0.6, 0.4])],
)
def test_sharpen_examples(gamma, expected):
    out, _ = sharpen_map(ROW, gamma)
    assert out[2] == pytest.approx(expected, abs=1e-15)
    assert np.array_equal(out[0], ROW[0])


def test_sharpen_degenerate_row():
    A = np.array([[1.0, 0, 0], [1.0, 0, 0], [0.5, 0.3, 0.2]])
    out, deg = sharpen_map(A, 0.2)
    assert deg == 1
    assert np.array_equal(out[1], [1.0, 0, 0])


def test_sharpen_gamma_range():
    with pytest.raises(ValueError):
        sharpen_map(ROW, 1.5)
    with pytest.raises(ValueError):
        sharpen_map(ROW, -0.1)


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 48), st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_sharpen_properties(n, seed, g1, g2):
    A = random_causal_map(np.random.default_rng(seed), n, 3.0)
    lo, hi = sorted((g1, g2))
    a_lo, _ = sharpen_map(A, lo)
    a_hi, _ = sharpen_map(A, hi)
    assert np.allclose(a_lo.sum(axis=1), 1.0, atol=1e-12, rtol=0)
    assert np.all(a_lo[:, 0] <= a_hi[:, 0])
    assert np.all(np.triu(a_lo, 1) == 0)
    i, j, k = n - 1, 1, n - 1
    if A[i, k] > 0 and A[i, j] > 0:
        assert a_lo[i, j] / a_lo[i, k] == pytest.approx(A[i, j] / A[i, k], rel=1e-12)


def test_sharpen_tensor_layer_targets(rng):
    t = _tensor(rng, L=4, H=3)
    res = sharpen_tensor(t, SharpenConfig(0.3, "layer", {2}))
    for l in range(4):
        for h in range(3):
            changed = not np.array_equal(res.tensor.maps[l, h], t.maps[l, h])
            assert changed == (l == 2)


def test_sharpen_tensor_head_targets_and_bounds(rng):
    t = _tensor(rng, L=2, H=2)
    res = sharpen_tensor(t, SharpenConfig(0.3, "head", {(1, 0)}))
    assert not np.array_equal(res.tensor.maps[1, 0], t.maps[1, 0])
    assert res.tensor.maps[0].tobytes() == t.maps[0].tobytes()
    with pytest.raises(IndexError):
        sharpen_tensor(t, SharpenConfig(0.3, "head", {(5, 5)}))
    with pytest.raises(IndexError):
        sharpen_tensor(t, SharpenConfig(0.3, "layer", {2}))
    with pytest.raises(ValueError):
        sharpen_tensor(t, SharpenConfig(0.3, "head", set()))


def test_sharpen_tensor_identity(rng):
    t = _tensor(rng)
    res = sharpen_tensor(t, SharpenConfig(1.0, "layer", {0, 1}))
    assert np.max(np.abs(res.tensor.maps - t.maps)) <= 1e-15


@pytest.mark.parametrize(
    "lam, gamma, expected",
    [(0.5, 0.5, 1.5), (0.3, 1.0, 1.0), (0.9, 1.0, 1.0), (0.0, 0.2, 1.0), (0.5, 0.0, 2.0)],
)
def test_amplification_ratio(lam, gamma, expected):
    assert amplification_ratio(lam, gamma) == pytest.approx(expected, abs=1e-15)


@given(st.floats(0, 0.999), st.floats(0, 1))
def test_amplification_ratio_at_least_one(lam, gamma):
    rho = amplification_ratio(lam, gamma)
    assert rho >= 1.0 - 1e-15
    if gamma < 0.999 and lam > 1e-6:
        assert rho > 1.0


def test_amplification_ratio_rejects_unit_lambda():
    with pytest.raises(ValueError):
        amplification_ratio(1.0, 0.5)


def test_parse_targets():
    assert parse_targets("1, 3", "layer") == {1, 3}
    assert parse_targets("1:2,0:0", "head") == {(1, 2), (0, 0)}
