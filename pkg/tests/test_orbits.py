import math
import random
from fractions import Fraction

import numpy as np
import pytest

from ergopt import orbits as O
from ergopt import systems as S


def test_smith_normal_form_random_matrices():
    random.seed(1)
    for _ in range(2000):
        M = [[random.randint(-50, 50) for _ in range(2)] for _ in range(2)]
        if O.det2(M) == 0:
            continue
        (s1, s2), U, V = O.smith_normal_form_2x2(M)
        assert abs(O.det2(U)) == 1 and abs(O.det2(V)) == 1
        P = O._mat_mul_int(tuple(map(tuple, U)),
                           O._mat_mul_int(tuple(map(tuple, M)), tuple(map(tuple, V))))
        assert P == ((s1, 0), (0, s2))
        assert s1 > 0 and s2 > 0 and s2 % s1 == 0
        assert s1 * s2 == abs(O.det2(M))


def test_census_matches_determinant():
    # |det(A^n - I)| = lam_u^n + lam_s^n - 2, checked both ways
    cat = S.cat_map()
    for n in range(1, 13):
        cnt = O.periodic_point_count(n)
        lucas = round(S.LAM_U ** n + S.LAM_S ** n) - 2
        assert cnt == lucas
        pts = O.periodic_points(cat, n, group=False)
        assert len(pts) == len(set(pts)) == cnt


def test_single_fixed_point():
    cat = S.cat_map()
    orbs = O.periodic_points(cat, 1)
    assert len(orbs) == 1 and orbs[0].period == 1
    assert orbs[0].points == [(Fraction(0), Fraction(0))]


def test_period_two_structure():
    cat = S.cat_map()
    orbs = O.periodic_points(cat, 2)
    assert sum(o.period for o in orbs) == 5
    assert sorted(o.period for o in orbs) == [1, 2, 2]
    assert all(o.verify() for o in orbs)


def test_exact_periodicity_rational():
    cat = S.cat_map()
    for n in (3, 5, 6):
        for o in O.periodic_points(cat, n):
            assert o.verify()
            p = o.points[0]
            for _ in range(o.period):
                p = O._cat_step_exact(p)
            assert p == o.points[0]


def test_birkhoff_constant_observable():
    cat = S.cat_map()
    z = S.observable_library("zero", cat)
    est = O.birkhoff_min_periodic(cat, z, P_max=4)
    assert est.value == 0.0


def test_birkhoff_coscos_min_at_origin():
    cat = S.cat_map()
    cc = S.observable_library("coscos", cat)
    est = O.birkhoff_min_periodic(cat, cc, P_max=6)
    assert est.value == pytest.approx(0.0, abs=1e-12)
    assert est.certificate.period == 1


def test_birkhoff_shifted_center_positive_and_monotone():
    cat = S.cat_map()
    obs = S.observable_library("dist2fix:0.5,0.5", cat)
    prev = math.inf
    for P in range(1, 7):
        est = O.birkhoff_min_periodic(cat, obs, P_max=P)
        assert est.value > 0.0
        assert est.value <= prev + 1e-15
        prev = est.value


def test_min_mean_cycle_example_table():
    # weights 0->0: 1, 0->1: 0, 1->0: 0 give value 0 via the 2-cycle
    g = S.golden_mean_shift(6)
    obs = S.observable_library("edgecost:1,0,0", g)
    est = O.min_mean_cycle(g, obs)
    assert est.value == 0.0
    assert est.certificate.cycle == ("0", "1")


def test_min_mean_cycle_constant_weights():
    g = S.golden_mean_shift(6)
    obs = S.observable_library("edgecost:0.7,0.7,0.7", g)
    assert O.min_mean_cycle(g, obs).value == pytest.approx(0.7)


def test_min_mean_cycle_equals_exhaustive_simple_cycles():
    g = S.golden_mean_shift(6)
    rng = np.random.default_rng(3)
    for _ in range(50):
        w = rng.normal(size=3)
        obs = S.observable_library(f"edgecost:{w[0]},{w[1]},{w[2]}", g)
        exhaustive = min(w[0], (w[1] + w[2]) / 2.0)
        assert O.min_mean_cycle(g, obs).value == pytest.approx(exhaustive, abs=1e-12)


def test_min_mean_cycle_rejects_nonlocal():
    g = S.golden_mean_shift(6)
    with pytest.raises(ValueError):
        O.min_mean_cycle(g, S.observable_library("dist2fix", g))


def test_karp_agrees_with_cycle_enumeration_on_small_graphs():
    rng = np.random.default_rng(4)
    for _ in range(60):
        n = int(rng.integers(2, 5))
        E = rng.normal(size=(n, n)) * 2.0
        best = math.inf
        # exhaustive over simple cycles
        import itertools
        for r in range(1, n + 1):
            for nodes in itertools.permutations(range(n), r):
                cyc = list(nodes) + [nodes[0]]
                w = sum(E[cyc[i], cyc[i + 1]] for i in range(r)) / r
                best = min(best, w)
        val, _ = O.karp_min_mean(E)
        assert val == pytest.approx(best, abs=1e-9)


def test_shift_periodic_consistency_with_mmc():
    g = S.golden_mean_shift(8)
    obs = S.observable_library("edgecost:default", g)
    est_p = O.birkhoff_min_periodic(g, obs, P_max=g.depth)
    est_k = O.min_mean_cycle(g, obs)
    assert est_p.value == pytest.approx(est_k.value, abs=1e-12)


def test_sweep_constant_exact():
    cat = S.cat_map()
    obs = S.observable_library("zero", cat)
    assert O.sweep_min(cat, obs, n=50, samples=100).value == 0.0


def test_sweep_coscos_hits_fixed_point():
    cat = S.cat_map()
    cc = S.observable_library("coscos", cat)
    est = O.sweep_min(cat, cc, n=1000, samples=1024, seed=0)
    assert est.value <= 1e-3   # the lattice start at the origin stays put


def test_sweep_vs_periodic_consistency():
    cat = S.cat_map()
    obs = S.observable_library("dist2fix:0.5,0.5", cat)
    per = O.birkhoff_min_periodic(cat, obs, P_max=6)
    sw = O.sweep_min(cat, obs, n=256, samples=1024, seed=1)
    assert per.value >= sw.value - 1e-9   # periodic estimate is an upper route


def test_positive_livsic_hypothesis_nonneg_observable():
    cat = S.cat_map()
    cc = S.observable_library("coscos", cat)
    rep = O.check_positive_livsic_hypothesis(cat, cc, P_max=5)
    assert rep["passed"]


def test_positive_livsic_hypothesis_violation_witness():
    import dataclasses
    cat = S.cat_map()
    cc = S.observable_library("coscos", cat)
    shifted = dataclasses.replace(
        cc, name="coscos-0.5",
        _fn=lambda x: 1.0 - math.cos(2 * math.pi * float(np.asarray(x)[0])) - 0.5,
        _fn_many=lambda X: cc.many(X) - 0.5)
    rep = O.check_positive_livsic_hypothesis(cat, shifted, P_max=3)
    assert not rep["passed"]
    orb, total = rep["violations"][0]
    assert orb.period == 1 and total == pytest.approx(-0.5)


def test_estimate_ebar_policies():
    cat = S.cat_map()
    g = S.golden_mean_shift(6)
    cc = S.observable_library("coscos", cat)
    ec = S.observable_library("edgecost:default", g)
    assert O.estimate_ebar(cat, cc, 0.25).value == 0.25
    assert O.estimate_ebar(g, ec, "auto").method == "exact-karp"
    est = O.estimate_ebar(cat, cc, "auto")
    assert est.method == "periodic-scan:8"
    assert "sweep_bracket" in est.meta
    with pytest.raises(ValueError):
        O.estimate_ebar(cat, cc, "auto:magic")


def test_perturbed_periodic_points_by_shadowing():
    from ergopt import charts as C
    p = S.perturbed_cat_map(1e-4, 7)
    fam, vc = C.build_charts(p)
    dc = C.derive_constants(vc, p, fam)
    pts = O.periodic_points_perturbed(p, 2, fam, dc)
    assert len(pts) == 2
    for q in pts:
        z = q.copy()
        for _ in range(2):
            z = p.f(z)
        assert p.dist(z, q) < 1e-10
