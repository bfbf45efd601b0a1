import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergopt import systems as S


def test_cat_fixed_point_origin():
    c = S.cat_map()
    assert np.allclose(c.f(np.zeros(2)), 0.0)


def test_cat_half_half():
    c = S.cat_map()
    assert np.allclose(c.f(np.array([0.5, 0.5])), [0.5, 0.0])


def test_unstable_eigenvalue_from_characteristic_polynomial():
    # roots of t^2 - 3t + 1 = 0
    roots = np.roots([1.0, -3.0, 1.0])
    lam = float(np.max(roots))
    assert abs(S.LAM_U - lam) < 1e-12
    assert abs(lam - 2.6180339887) < 1e-9
    # eigen data consistency with the matrix itself
    w = np.linalg.eigvals(S.A_CAT)
    assert abs(np.max(w) - S.LAM_U) < 1e-12
    assert abs(np.min(w) - S.LAM_S) < 1e-12


def test_eigenbasis_is_orthonormal():
    assert np.abs(S.V_EIG @ S.V_EIG.T - np.eye(2)).max() < 1e-14
    assert np.allclose(S.A_CAT @ S.EIG_U, S.LAM_U * S.EIG_U)
    assert np.allclose(S.A_CAT @ S.EIG_S, S.LAM_S * S.EIG_S)


def test_cat_preserves_rational_lattice():
    # integer matrix with det 1 maps (Z/q)^2 into itself exactly
    for q in (3, 7, 16, 64):
        pts = [(Fraction(i, q), Fraction(j, q)) for i in range(q) for j in range(q)]
        for x in pts[:: max(1, len(pts) // 50)]:
            y0 = (2 * x[0] + x[1]) % 1
            y1 = (x[0] + x[1]) % 1
            assert y0.denominator in (1, *[d for d in range(2, q + 1) if q % d == 0])
            assert (y0 * q).denominator == 1 and (y1 * q).denominator == 1


def test_perturbed_zero_eps_matches_cat():
    c, p = S.cat_map(), S.perturbed_cat_map(0.0, 3)
    X = np.random.default_rng(0).random((200, 2))
    assert np.max(S.torus_dist(c.f_many(X), p.f_many(X))) == 0.0


def test_perturbed_deviation_bound():
    c, p = S.cat_map(), S.perturbed_cat_map(1e-3, 7)
    X = np.random.default_rng(1).random((500, 2))
    dev = np.max(S.torus_dist(c.f_many(X), p.f_many(X)))
    assert dev <= 1e-3 * p.sup_g + 1e-15


def test_perturbed_rejects_negative_eps():
    with pytest.raises(ValueError):
        S.perturbed_cat_map(-1e-3, 0)


def test_perturbed_differential_finite_difference():
    p = S.perturbed_cat_map(1e-3, 7)
    rng = np.random.default_rng(2)
    h = 1e-7
    for x in rng.random((10, 2)):
        J = p.df(x)
        Jfd = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            d = S.torus_reduce(p.f((x + e) % 1.0) - p.f((x - e) % 1.0))
            Jfd[:, j] = d / (2 * h)
        assert np.abs(J - Jfd).max() < 1e-6


def test_perturbed_df_at_origin_formula():
    p = S.perturbed_cat_map(1e-3, 7)
    lin = S.cat_map()
    assert np.abs((p.df(np.zeros(2)) - lin.df(np.zeros(2))) / 1e-3).max() < p.lip_g


def test_golden_mean_word_count_depth4():
    # Fibonacci count, cross-checked by exhaustive enumeration
    words = S.admissible_words(4)
    assert len(words) == 8 == S.fibonacci_count(4)
    brute = [f"{i:04b}" for i in range(16) if "11" not in f"{i:04b}"]
    assert sorted(brute) == list(words)


def test_golden_mean_metric_and_shift():
    assert S.word_dist("0101", "0100") == 0.125
    g = S.golden_mean_shift(4)
    assert g.f("0101") == "1010"
    with pytest.raises(ValueError):
        S.golden_mean_shift(1)


def test_shift_metric_doubles_under_shift():
    g = S.golden_mean_shift(8)
    words = S.admissible_words(8)
    rng = np.random.default_rng(3)
    for _ in range(500):
        x, y = (words[i] for i in rng.integers(0, len(words), 2))
        if x[0] == y[0]:
            assert S.word_dist(g.f(x), g.f(y)) <= 2.0 * S.word_dist(x, y) + 1e-15


@pytest.mark.parametrize("sid", ["cat", "gms:6"])
def test_metric_axioms_sampled(sid):
    sysm = S.parse_system(sid)
    pts = sysm.points_sample(120, seed=4)
    rng = np.random.default_rng(5)
    for _ in range(10_000):
        i, j, k = rng.integers(0, len(pts), 3)
        x, y, z = pts[i], pts[j], pts[k]
        dxy, dyx = sysm.dist(x, y), sysm.dist(y, x)
        assert abs(dxy - dyx) < 1e-14
        assert sysm.dist(x, x) < 1e-14
        assert dxy <= sysm.dist(x, z) + sysm.dist(z, y) + 1e-12


def test_observable_zero_and_coscos_values():
    cat = S.cat_map()
    z = S.observable_library("zero", cat)
    assert z(np.array([0.3, 0.9])) == 0.0 and z.lip == 0.0
    cc = S.observable_library("coscos", cat)
    assert abs(cc(np.array([0.25, 0.9])) - 1.0) < 1e-15


def test_coscos_lipschitz_certificate_is_sharp_and_safe():
    # dual-norm value of the gradient bound for this metric; dense sampling
    # approaches it from below and never exceeds it
    cat = S.cat_map()
    cc = S.observable_library("coscos", cat)
    rng = np.random.default_rng(6)
    X = rng.random((100_000, 2))
    Y = X + rng.normal(scale=3e-3, size=X.shape)
    Y %= 1.0
    d = S.torus_dist(X, Y)
    keep = d > 1e-9
    ratio = np.abs(cc.many(X) - cc.many(Y))[keep] / d[keep]
    assert ratio.max() <= cc.lip * (1 + 1e-12)
    assert ratio.max() > 0.95 * cc.lip


@pytest.mark.parametrize("name,sid", [
    ("dist2fix", "cat"), ("dist2fix", "gms:6"),
    ("edgecost:default", "gms:6"), ("edgecost:0.3,1.2,-0.4", "gms:6"),
])
def test_observable_lipschitz_sampled(name, sid):
    # sampled ratio never exceeds the certificate over 1e5 random pairs
    sysm = S.parse_system(sid)
    obs = S.observable_library(name, sysm)
    rng = np.random.default_rng(8)
    if sysm.kind == "torus":
        X, Y = rng.random((2, 100_000, 2))
        d = S.torus_dist(X, Y)
        keep = d > 0
        worst = float(np.max(np.abs(obs.many(X) - obs.many(Y))[keep] / d[keep]))
    else:
        words = S.admissible_words(sysm.depth)
        vals = np.array([obs(w) for w in words])
        i = rng.integers(0, len(words), 100_000)
        j = rng.integers(0, len(words), 100_000)
        d = np.array([S.word_dist(words[a], words[b]) for a, b in zip(i, j)])
        keep = d > 0
        worst = float(np.max(np.abs(vals[i] - vals[j])[keep] / d[keep]))
    assert worst <= obs.lip + 1e-12


def test_observable_errors():
    cat = S.cat_map()
    with pytest.raises(ValueError):
        S.observable_library("nope", cat)
    with pytest.raises(ValueError):
        S.observable_library("edgecost:default", cat)
    with pytest.raises(ValueError):
        S.observable_library("coscos", S.golden_mean_shift(4))


def test_parse_system_ids():
    assert S.parse_system("cat").sid == "cat"
    assert S.parse_system("pcat:1e-3:7").eps_p == 1e-3
    assert S.parse_system("gms:8").depth == 8
    with pytest.raises(ValueError):
        S.parse_system("lorenz")


def test_f_maps_phase_space_into_itself():
    for sid in ("cat", "pcat:1e-3:7", "gms:6"):
        sysm = S.parse_system(sid)
        for x in sysm.points_sample(200, seed=9):
            y = sysm.f(x)
            if sysm.kind == "torus":
                assert np.all((np.asarray(y) >= 0) & (np.asarray(y) < 1))
            else:
                assert "11" not in y and len(y) == sysm.depth


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True),
       st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))
def test_torus_metric_symmetry_property(x0, x1, y0, y1):
    x = np.array([x0, x1])
    y = np.array([y0, y1])
    assert abs(S.torus_dist(x, y) - S.torus_dist(y, x)) < 1e-14


def test_fixed_point_and_preimage():
    p = S.perturbed_cat_map(2e-4, 11)
    xf = S.fixed_point(p, (0.02, 0.98))
    assert S.torus_dist(p.f(xf), xf) < 1e-13
    rng = np.random.default_rng(10)
    for x in rng.random((5, 2)):
        y = S.preimage(p, x)
        assert S.torus_dist(p.f(y), x) < 1e-13
