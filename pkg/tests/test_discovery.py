import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ampcausal import scm
from ampcausal.discovery import (
    BackgroundKnowledge,
    DiscoveryConfig,
    FisherZ,
    GaussianBic,
    Pdag,
    Skeleton,
    consistent_extension,
    discover,
    fisher_z_test,
    orient,
    pc_skeleton,
    refine_score,
)
from ampcausal.errors import DegenerateDataError, SampleSizeError
from ampcausal.graph import check_tiers
from ampcausal.tabular import ColumnRole, dataset_from_columns, standardize
from fixtures import random_tiered_scm, shd


def with_corr(r, n, seed=0):
    """Two columns whose sample correlation is exactly r."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 2))
    z -= z.mean(axis=0)
    q, _ = np.linalg.qr(z)
    a, b = q[:, 0], q[:, 1]
    return np.column_stack([a, r * a + math.sqrt(1 - r * r) * b])


def chain_data(n=20_000, seed=1, roles=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal(n)
    M = 0.9 * X + rng.standard_normal(n)
    Y = 0.9 * M + rng.standard_normal(n)
    roles = roles or {"X": "parameter", "M": "intermediate", "Y": "outcome"}
    return standardize(dataset_from_columns({"X": X, "M": M, "Y": Y}, roles))[0]


def test_fisher_z_zero_correlation():
    res = fisher_z_test(with_corr(0.0, 200), 0, 1)
    assert abs(res.statistic) < 1e-12 and res.p_value == pytest.approx(1.0)


def test_fisher_z_known_value():
    res = fisher_z_test(with_corr(0.5, 100), 0, 1)
    mpmath.mp.dps = 40
    z = mpmath.sqrt(97) * mpmath.atanh(mpmath.mpf("0.5"))
    p = mpmath.erfc(z / mpmath.sqrt(2))
    assert res.partial_corr == pytest.approx(0.5, abs=1e-12)
    assert res.statistic == pytest.approx(float(z), abs=1e-9)
    assert res.statistic == pytest.approx(5.410, abs=1e-3)
    assert res.p_value == pytest.approx(float(p), rel=1e-9)
    assert res.p_value == pytest.approx(6.3e-8, rel=0.02)


def test_fisher_z_duplicate_column_clamps():
    x = np.random.default_rng(0).standard_normal(500)
    res = fisher_z_test(np.column_stack([x, x]), 0, 1)
    assert math.isfinite(res.statistic) and res.statistic > 50
    assert res.p_value < 1e-300 or res.p_value == 0.0


def test_fisher_z_singular_conditioning_set():
    x = np.random.default_rng(0).standard_normal((500, 2))
    vals = np.column_stack([x, x[:, 0] + x[:, 1]])
    data = dataset_from_columns(
        {"a": vals[:, 0], "b": vals[:, 1], "c": vals[:, 2]},
        {"a": "parameter", "b": "parameter", "c": "outcome"},
    )
    with pytest.raises(DegenerateDataError, match="a, b, c"):
        fisher_z_test(data, 0, 1, [2])


def test_fisher_z_sample_size():
    with pytest.raises(SampleSizeError):
        fisher_z_test(np.random.default_rng(0).standard_normal((4, 3)), 0, 1, [2])


def test_fisher_z_symmetry_and_affine_invariance():
    rng = np.random.default_rng(5)
    v = rng.standard_normal((1000, 4))
    v[:, 1] += 0.3 * v[:, 0] + 0.2 * v[:, 2]
    t = FisherZ(v)
    a, b = t(0, 1, [2, 3]), t(1, 0, [3, 2])
    assert a == b
    w = v.copy()
    w[:, 1] = 10 * w[:, 1] + 4
    assert FisherZ(w)(0, 1, [2, 3]).statistic == pytest.approx(a.statistic, abs=1e-8)


def test_skeleton_independent_columns():
    rng = np.random.default_rng(2)
    v = rng.standard_normal((20_000, 3))
    data = dataset_from_columns({c: v[:, k] for k, c in enumerate("abc")}, {c: "intermediate" for c in "abc"})
    sk = pc_skeleton(standardize(data)[0], 0.01, BackgroundKnowledge.none(3))
    assert sk.edges() == []


def test_skeleton_chain_and_sepset():
    sk = pc_skeleton(chain_data(), 0.01, BackgroundKnowledge.none(3))
    assert sk.edges() == [(0, 1), (1, 2)]
    assert sk.sepsets[frozenset((0, 2))] == (1,)


def test_skeleton_monotone_in_alpha():
    data, _ = random_tiered_scm(4, n=500)
    std = standardize(data)[0]
    alphas = [1e-4, 1e-3, 0.01, 0.05, 0.2]
    edge_sets = [set(pc_skeleton(std, a).edges()) for a in alphas]
    for lo, hi in zip(edge_sets, edge_sets[1:]):
        assert lo <= hi


def test_orient_collider():
    rng = np.random.default_rng(3)
    X, Y = rng.standard_normal((2, 20_000))
    Z = X + Y + rng.standard_normal(20_000)
    data = standardize(dataset_from_columns({"X": X, "Y": Y, "Z": Z}, {k: "intermediate" for k in "XYZ"}))[0]
    bk = BackgroundKnowledge.none(3)
    pdag = orient(pc_skeleton(data, 0.01, bk), bk)
    assert pdag.directed == {(0, 2), (1, 2)} and not pdag.undirected


def test_orient_chain_stays_undirected():
    data = chain_data(roles={k: "intermediate" for k in "XMY"})
    bk = BackgroundKnowledge.none(3)
    pdag = orient(pc_skeleton(data, 0.01, bk), bk)
    assert not pdag.directed and len(pdag.undirected) == 2


def test_orient_tier_rule_overrides_sepsets():
    sk = Skeleton(2, {frozenset((0, 1))}, {})
    bk = BackgroundKnowledge.from_roles([ColumnRole.OUTCOME, ColumnRole.PARAMETER])
    pdag = orient(sk, bk)
    assert pdag.directed == {(1, 0)}


def test_refine_tiers_force_chain():
    data = chain_data()
    bk = BackgroundKnowledge.from_roles(data.roles)
    sk = pc_skeleton(data, 0.01, bk)
    pdag = orient(sk, bk)
    res = refine_score(data, pdag, bk, skeleton=sk)
    assert res.edges == {(0, 1), (1, 2)}


def test_refine_fixed_point():
    data = chain_data()
    bk = BackgroundKnowledge.from_roles(data.roles)
    pdag = Pdag(3, {(0, 1), (1, 2)}, set())
    res = refine_score(data, pdag, bk)
    assert res.edges == {(0, 1), (1, 2)}
    assert res.score == res.start_score and len(res.trajectory) == 1


def test_refine_never_lowers_score():
    for seed in range(5):
        data, _ = random_tiered_scm(seed, n=2000)
        std = standardize(data)[0]
        bk = BackgroundKnowledge.from_roles(std.roles)
        sk = pc_skeleton(std, 0.01, bk)
        res = refine_score(std, orient(sk, bk), bk, skeleton=sk)
        assert res.score >= res.start_score
        scores = [s for *_, s in res.trajectory]
        assert scores == sorted(scores)


def test_bic_local_score_formula():
    rng = np.random.default_rng(0)
    v = rng.standard_normal((400, 2))
    v[:, 1] += 0.5 * v[:, 0]
    v = (v - v.mean(0)) / v.std(0)
    beta = np.linalg.lstsq(v[:, [0]], v[:, 1], rcond=None)[0]
    rss = float(((v[:, 1] - v[:, [0]] @ beta) ** 2).sum())
    expect = -200 * math.log(rss / 400) - math.log(400)
    assert GaussianBic(v).local(1, [0]) == pytest.approx(expect, rel=1e-10)


def test_consistent_extension_keeps_v_structures():
    pdag = Pdag(4, {(0, 2), (1, 2)}, {frozenset((2, 3))})
    ext = consistent_extension(pdag)
    assert (0, 2) in ext and (1, 2) in ext and (2, 3) in ext


def test_discover_independent_columns_edgeless():
    rng = np.random.default_rng(8)
    v = rng.standard_normal((20_000, 3))
    data = dataset_from_columns({"a": v[:, 0], "b": v[:, 1], "y": v[:, 2]}, {"a": "parameter", "b": "parameter", "y": "outcome"})
    assert not discover(data).dag.edges


@pytest.fixture(scope="module")
def ota_result():
    model = scm.ota_current_mirror()
    data = scm.sample_observational(model, scm.SamplingPolicy.default(model), 20_000, 7)
    return discover(data, DiscoveryConfig(alpha=0.01))


def test_discover_ota(ota_result):
    dag = ota_result.dag
    assert check_tiers(dag) == []
    parents = dag.parents("AC_Gain")
    assert parents
    assert all(dag.role(p) in (ColumnRole.PARAMETER, ColumnRole.INTERMEDIATE) for p in parents)
    assert ("W_DP", "diff_s_v") in dag.edges
    assert ("W_PMOS", "diff_d_v") in dag.edges


def test_discover_report_shape(ota_result):
    rep = ota_result.report()
    assert set(rep) == {"nodes", "edges", "removed", "score_trajectory", "notes"}
    assert all(set(e) == {"from", "to", "kind"} for e in rep["edges"])
    assert all(set(r) == {"i", "j", "sepset", "p_value"} for r in rep["removed"])


def test_discover_random_scms_recovery():
    dists = []
    for seed in range(20):
        data, truth = random_tiered_scm(seed)
        a = discover(data)
        b = discover(data)
        assert a.dag.edges == b.dag.edges
        dists.append(shd(truth, set(a.dag.edges)))
    assert np.mean(dists) <= 1.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_discover_always_tier_consistent(seed):
    data, _ = random_tiered_scm(seed, n=300)
    dag = discover(data, DiscoveryConfig(alpha=0.2)).dag
    assert check_tiers(dag) == []
