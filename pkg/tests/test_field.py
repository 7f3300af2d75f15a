"""Lazy and dense disorder realizations on the tree."""

import numpy as np
import pytest

from crem import field as fld
from crem.covariance import IDENTITY, spec_from_profile
from crem.field import CremRealization, VertexId, materialize_tree

S2 = spec_from_profile("two-slope(0.5,1.5,0.5)")


def test_vertex_id_basics():
    r = VertexId.root()
    assert r.depth == 0 and r.code == 1
    v = r.child(1).child(0).child(1)
    assert (v.depth, v.path) == (3, 0b101)
    assert v.code == 0b1101
    assert v.ancestor(1) == VertexId(1, 1)
    assert v.ancestor(3) == v
    assert v.descend(2, 0b10) == VertexId(5, 0b10110)
    assert v.path_hex == "3:5"
    with pytest.raises(ValueError):
        VertexId(2, 4)
    with pytest.raises(ValueError):
        v.ancestor(4)


def test_split_codes_carry():
    base = (1 << 64) - 3  # hi word increments mid-run
    lo, hi = fld.split_codes(base, 6)
    for i in range(6):
        code = base + i
        assert int(lo[i]) == code & ((1 << 64) - 1)
        assert int(hi[i]) == code >> 64


def test_increment_std():
    assert fld.increment_std(IDENTITY, 10, 3) == pytest.approx(1.0)
    # two-slope: sqrt(N * a) on each half
    assert fld.increment_std(S2, 10, 1) == pytest.approx(np.sqrt(0.5))
    assert fld.increment_std(S2, 10, 10) == pytest.approx(np.sqrt(1.5))
    with pytest.raises(ValueError):
        fld.increment_std(IDENTITY, 10, 0)


def test_field_value_is_sum_of_edge_increments():
    real = CremRealization(S2, 8, 12345)
    v = VertexId(8, 0b10110011)
    total = sum(real.edge_increment(v.ancestor(d)) for d in range(1, 9))
    assert real.field_value(v) == pytest.approx(total, abs=1e-12)
    assert real.field_value(VertexId.root()) == 0.0


def test_dense_tree_matches_lazy_evaluation():
    real = CremRealization(S2, 6, 99)
    tree = materialize_tree(real)
    for path in (0, 13, 63):
        v = VertexId(6, path)
        assert tree.value_of(v) == pytest.approx(real.field_value(v), abs=1e-12)
    assert np.allclose(tree.leaf_values,
                       real.subtree_leaf_values(VertexId.root(), 6))


def test_subtree_levels_consistent():
    real = CremRealization(IDENTITY, 10, 5)
    v = VertexId(4, 7)
    levels = real.subtree_levels(v, 3)
    assert [lvl.size for lvl in levels] == [1, 2, 4, 8]
    assert np.array_equal(levels[-1], real.subtree_leaf_values(v, 3))
    # level values are recentred at v
    w = v.descend(2, 1)
    assert levels[2][1] == pytest.approx(
        real.field_value(w) - real.field_value(v), abs=1e-12)


def test_deep_vertices_use_wide_codes():
    # depths past 63 need two-word codes; values must still be reproducible
    real = CremRealization(IDENTITY, 100, 77)
    v = VertexId(100, (1 << 99) | 12345)
    x1 = real.field_value(v)
    x2 = real.field_value(v)
    assert x1 == x2
    assert abs(x1) < 100.0  # a centered Gaussian with variance 100
    leaves = real.subtree_leaf_values(v.ancestor(95), 5)
    assert leaves.size == 32
    assert np.unique(leaves).size == 32


def test_realizations_differ_across_seeds():
    a = materialize_tree(CremRealization(IDENTITY, 6, 1)).leaf_values
    b = materialize_tree(CremRealization(IDENTITY, 6, 2)).leaf_values
    assert not np.allclose(a, b)


def test_capacity_error():
    real = CremRealization(IDENTITY, 26, 0)
    with pytest.raises(fld.CapacityError):
        materialize_tree(real)
    with pytest.raises(fld.CapacityError):
        materialize_tree(CremRealization(IDENTITY, 29, 0), dense_cap=29)


def test_log_sum_exp():
    x = np.array([-1.0, 0.0, 2.5])
    assert fld.log_sum_exp(x) == pytest.approx(np.log(np.exp(x).sum()))
    big = np.array([1000.0, 1000.0])
    assert fld.log_sum_exp(big) == pytest.approx(1000.0 + np.log(2.0))
    m = np.arange(6.0).reshape(2, 3)
    assert np.allclose(fld.log_sum_exp(m, axis=1),
                       np.log(np.exp(m).sum(axis=1)))


def test_leaf_distribution_requires_normalization():
    with pytest.raises(ValueError):
        fld.LeafDistribution(2, np.zeros(4))
    lw = np.full(4, -np.log(4.0))
    d = fld.LeafDistribution(2, lw)
    assert d.probabilities() == pytest.approx(np.full(4, 0.25))


def test_log_partition_and_gibbs():
    real = CremRealization(S2, 5, 31)
    tree = materialize_tree(real)
    beta = 1.3
    v = VertexId(2, 3)
    seg = tree.level(5)[3 << 3:(4 << 3)]
    manual = np.log(np.exp(beta * (seg - tree.value_of(v))).sum())
    assert fld.log_partition(tree, v, 3, beta) == pytest.approx(manual)
    assert fld.log_partition(tree, v, 0, beta) == 0.0

    gibbs = fld.exact_gibbs(tree, beta)
    assert gibbs.probabilities().sum() == pytest.approx(1.0)

    stream = np.random.default_rng(0)
    draws = [fld.gibbs_sample(tree, beta, stream) for _ in range(50)]
    assert all(d.depth == 5 for d in draws)
    stream2 = np.random.default_rng(0)
    draws2 = [fld.gibbs_sample(tree, beta, stream2) for _ in range(50)]
    assert draws == draws2
