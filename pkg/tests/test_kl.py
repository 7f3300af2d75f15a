"""KL divergence routes and the disorder-averaged estimators."""

import math

import numpy as np
import pytest

from crem import kl
from crem.covariance import IDENTITY, spec_from_profile
from crem.field import (CremRealization, LeafDistribution, exact_gibbs,
                        materialize_tree)
from crem.sampler import SamplerConfig

S2 = spec_from_profile("two-slope(0.5,1.5,0.5)")


def _uniform(N):
    return LeafDistribution(N, np.full(1 << N, -N * math.log(2.0)))


def test_kl_divergence_basics():
    u = _uniform(3)
    assert kl.kl_divergence(u, u) == 0.0
    lw = np.log(np.array([0.7, 0.1, 0.1, 0.1, 0.0, 0.0, 0.0, 0.0]) + 1e-300)
    lw -= np.log(np.exp(lw).sum())
    p = LeafDistribution(3, lw)
    assert kl.kl_divergence(p, u) > 0.0


def test_kl_divergence_requires_dominance():
    with np.errstate(divide="ignore"):
        half = np.log(np.array([0.5, 0.5, 0.0, 0.0]))
    q = LeafDistribution(2, half)
    u = _uniform(2)
    assert kl.kl_divergence(q, u) == pytest.approx(math.log(2.0))
    with pytest.raises(ValueError):
        kl.kl_divergence(u, q)


def test_decomposition_matches_direct():
    for spec, N, M, beta in [(IDENTITY, 8, 3, 1.0), (S2, 8, 2, 2.0),
                             (S2, 7, 7, 1.3)]:
        tree = materialize_tree(CremRealization(spec, N, 23))
        rep = kl.kl_decomposition(tree, SamplerConfig(beta=beta, M=M, N=N))
        assert rep.kl_decomposed == pytest.approx(rep.kl_direct, abs=1e-10)
        assert rep.normalized == pytest.approx(rep.kl_direct / N)
        assert len(rep.per_level_terms) == -(N // -M)


def test_full_depth_block_gives_zero_kl():
    tree = materialize_tree(CremRealization(S2, 6, 4))
    rep = kl.kl_decomposition(tree, SamplerConfig(beta=2.0, M=6, N=6))
    assert rep.kl_direct == pytest.approx(0.0, abs=1e-12)
    assert rep.kl_decomposed == pytest.approx(0.0, abs=1e-12)


def test_summarize():
    vals = np.array([1.0, 2.0, 3.0, 4.0])
    s = kl.summarize(vals, keep=True)
    assert s.mean == 2.5
    assert s.sample_sd == pytest.approx(np.std(vals, ddof=1))
    assert s.stderr == pytest.approx(s.sample_sd / 2.0)
    assert np.array_equal(s.values, vals)
    assert kl.summarize(vals).values is None


def test_expected_kl_two_estimators_agree():
    res = kl.expected_kl(S2, 1.0, 2, 8, 40, seed=7, keep=True)
    assert res.decomposed.n_realizations == 40
    # both average the same underlying quantity; means are within joint noise
    gap = abs(res.decomposed.mean - res.free_energy_diff.mean)
    joint = 4.0 * (res.decomposed.stderr + res.free_energy_diff.stderr)
    assert gap <= joint
    assert res.decomposed.mean >= 0.0
    with pytest.raises(ValueError):
        kl.expected_kl(S2, 1.0, 2, 8, 1, seed=7)


def test_concentration_bound_p2_closed_form():
    # C1(2) = 8, so the L2 envelope is exactly 4 beta / sqrt(M)
    for beta in (0.5, 1.0, 2.0):
        for M in (2, 4, 8):
            assert kl.concentration_bound(beta, M, 2.0) == pytest.approx(
                4.0 * beta / math.sqrt(M), abs=1e-10)
    assert kl.concentration_bound(1.0, 4, 1.0) > 0.0
    with pytest.raises(ValueError):
        kl.concentration_bound(1.0, 4, 0.5)


def test_concentration_check_shapes():
    rows = kl.concentration_check(IDENTITY, 1.0, 10, [2, 5], 25, seed=3)
    assert [r["M"] for r in rows] == [2, 5]
    for r in rows:
        assert r["dev_l2"] >= r["dev_l1"] >= 0.0
        assert not r["violation"]


def test_convergence_gap_check_rows():
    rows = kl.convergence_gap_check(S2, 2.0, [8, 10], 1.0, 20, seed=5)
    assert [r["N"] for r in rows] == [8, 10]
    for r in rows:
        assert r["gap"] > 0.0
        assert r["mean_kl_per_n"] >= 0.0
        for s in r["sandwich"]:
            assert s["f_lower"] <= s["f_upper"]
