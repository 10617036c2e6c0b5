import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from unseenlp.modulus import (
    ModulusQuery, bias_variance_lp, default_st_grid, delta_bv_exact_small, delta_st, divergence_modulus,
    forced_zero_rows, tv_dual_lp,
)
from unseenlp.probspace import Kernel, SupportGrid, identity_kernel, make_binomial_kernel

TOY = Kernel(SupportGrid.integers(2), SupportGrid.integers(2),
             [[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.1, 0.2, 0.7]])
TOY_H = np.array([0.0, 0.5, 1.0])


def de_h(d):
    return np.r_[0.0, np.ones(d)]


def simplex_grid(step):
    g = np.arange(0, 1 + 1e-9, step)
    pts = np.array([(a, b, 1 - a - b) for a in g for b in g if a + b <= 1 + 1e-9])
    return np.clip(pts, 0, None)


def brute_modulus(K, h, kind, t, step=0.01):
    """Exhaustive search over pairs of simplex grid points (3-point support)."""
    pts = simplex_grid(step)
    M, T = pts @ K.rows, pts @ h
    best = 0.0
    for i in range(len(pts)):
        b = M[i]
        if kind == "chi2":
            safe = np.where(b > 0, b, 1.0)
            D = np.where(b > 0, (M - b) ** 2 / safe, np.where(M > 0, np.inf, 0.0)).sum(axis=1)
        else:
            D = ((np.sqrt(M) - np.sqrt(b)) ** 2).sum(axis=1)
        ok = D <= t * t
        if ok.any():
            best = max(best, float((T[ok] - T[i]).max()))
    return best


# ---------------------------------------------------------------- query validation


def test_query_validation():
    K = make_binomial_kernel(3, 0.5)
    with pytest.raises(ValueError):
        ModulusQuery(K, np.ones(3))
    with pytest.raises(ValueError):
        ModulusQuery(K, np.ones(4), "kl")
    with pytest.raises(ValueError):
        ModulusQuery(K, np.ones(4), t=-1.0)
    with pytest.raises(ValueError):
        ModulusQuery(K, np.ones(4), constraints=[(np.ones(4), math.inf)])


# ---------------------------------------------------------------- bias-variance LP and dual


def test_bv_zero_budget_invertible():
    K = make_binomial_kernel(4, 0.7)
    h = np.array([0.0, 1.0, 0.5, 2.0, -1.0])
    res = bias_variance_lp(ModulusQuery(K, h, "tv", 0.0))
    assert res.value == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(res.witness["g"], np.linalg.solve(K.rows, h), atol=1e-7)


def test_bv_parametric_regime():
    K = make_binomial_kernel(8, 0.6)
    n = 10 ** 4
    res = bias_variance_lp(ModulusQuery(K, de_h(8), "tv", n ** -0.5))
    assert res.value <= 2 * n ** -0.5
    assert res.certificate["recomputed_value"] == pytest.approx(res.value, abs=1e-9)


def test_bv_within_twice_dual():
    q = ModulusQuery(make_binomial_kernel(8, 1 / 3), de_h(8), "tv", 0.01)
    v, vd = bias_variance_lp(q).value, tv_dual_lp(q).value
    assert vd - 1e-9 <= v <= 2 * vd


def test_dual_large_budget():
    h = np.array([0.0, 0.3, 1.0, 0.6])
    q = ModulusQuery(make_binomial_kernel(3, 0.5), h, "tv", 2.5)
    assert tv_dual_lp(q).value == pytest.approx(h.max() - h.min(), abs=1e-12)
    # an unbalanced Delta may sit on a single point, so in general the value is ||h||_inf
    q = ModulusQuery(make_binomial_kernel(3, 0.5), h + 2.0, "tv", 2.5)
    assert tv_dual_lp(q).value == pytest.approx(3.0, abs=1e-12)


@pytest.mark.parametrize("t", [0.05, 0.3, 0.8])
def test_dual_identity_two_point_bruteforce(t):
    h = np.array([0.2, -0.7, 0.5, 0.1])
    res = tv_dual_lp(ModulusQuery(identity_kernel(SupportGrid.integers(3)), h, "tv", t))
    best = 0.0
    a = np.linspace(-1, 1, 401)
    A, B = np.meshgrid(a, a)
    ok = np.abs(A) + np.abs(B) <= min(t, 1.0) + 1e-12
    for i in range(4):
        for j in range(4):
            if i != j:
                best = max(best, float((A * h[i] + B * h[j])[ok].max()))
    assert res.value == pytest.approx(best, abs=1e-12)
    assert res.value == pytest.approx(t * np.abs(h).max())


@pytest.mark.parametrize("t", [0.1, 0.01])
def test_population_recovery_exponent(t):
    eps = 0.75
    h = np.zeros(21)
    h[0] = 1.0
    v = tv_dual_lp(ModulusQuery(make_binomial_kernel(20, 1 - eps), h, "tv", t)).value
    target = (1 - eps) / eps
    assert target - 0.15 <= math.log(v) / math.log(t) <= target + 0.35


def test_dual_witness_feasible():
    q = ModulusQuery(make_binomial_kernel(10, 0.4), de_h(10), "tv", 0.02)
    res = tv_dual_lp(q)
    d = res.witness["delta"].weights
    assert np.abs(d).sum() <= 1 + 1e-7
    assert np.abs(d @ q.kernel.rows).sum() <= 0.02 + 1e-7
    assert d @ q.h == pytest.approx(res.value, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.floats(0.0, 1.5), st.integers(0, 2 ** 31))
def test_strong_duality(m, k, t, seed):
    rng = np.random.default_rng(seed)
    rows = rng.dirichlet(np.ones(k), size=m)
    K = Kernel(SupportGrid.integers(m - 1), SupportGrid.integers(k - 1), rows)
    q = ModulusQuery(K, rng.normal(size=m), "tv", t)
    a, b = bias_variance_lp(q).value, tv_dual_lp(q).value
    assert a == pytest.approx(b, rel=1e-7, abs=1e-9)


def test_tv_subadditivity_exact():
    q = ModulusQuery(make_binomial_kernel(12, 0.4), de_h(12), "tv", 0.2)
    base = tv_dual_lp(q).value
    for c in (0.1, 0.5, 0.9):
        assert tv_dual_lp(q.with_t(c * 0.2)).value >= c * base - 1e-12


def test_moment_constraints():
    K = make_binomial_kernel(30, 0.3)
    theta = K.theta_grid.points
    q = ModulusQuery(K, (theta >= 1).astype(float), "tv", 0.01, [(theta, 1.0)])
    res = tv_dual_lp(q)
    assert res.certificate["relaxed_moments"]
    assert abs(res.certificate["moments"][0]) <= 1.0 + 1e-7
    free = tv_dual_lp(ModulusQuery(K, q.h, "tv", 0.01))
    assert res.value <= free.value + 1e-12
    # the primal carries the moment multipliers and stays dual to the relaxation
    assert bias_variance_lp(q).value == pytest.approx(res.value, rel=1e-7)


def test_forced_zero_rows():
    P = make_binomial_kernel(5, 0.5).rows
    assert forced_zero_rows(P).all()
    P = np.array([[1.0, 0.0, 0.0], [0.0, 0.5, 0.5], [0.0, 0.5, 0.5]])
    assert forced_zero_rows(P).tolist() == [True, False, False]
    # a dense square kernel is invertible but nothing is structurally forced
    assert not forced_zero_rows(TOY.rows).any()


def test_result_json_roundtrip():
    res = tv_dual_lp(ModulusQuery(make_binomial_kernel(3, 0.5), de_h(3), "tv", 0.1))
    d = json.loads(res.to_json())
    assert d["value"] == res.value and len(d["witness"]["delta"]["weights"]) == 4


# ---------------------------------------------------------------- chi2 / Hellinger


@pytest.mark.parametrize("kind", ["chi2", "hellinger", "tv"])
def test_zero_budget_identifiable(kind):
    q = ModulusQuery(make_binomial_kernel(4, 0.5), de_h(4), kind, 0.0)
    assert divergence_modulus(q).value == 0.0


def test_hellinger_saturates():
    q = ModulusQuery(TOY, TOY_H, "hellinger", math.sqrt(2))
    res = divergence_modulus(q)
    assert res.value == pytest.approx(TOY_H.max() - TOY_H.min())
    assert res.certificate["saturated"]


@pytest.mark.parametrize("kind", ["chi2", "hellinger"])
@pytest.mark.parametrize("t", [0.1, 0.3, 0.5])
def test_three_point_bruteforce(kind, t):
    res = divergence_modulus(ModulusQuery(TOY, TOY_H, kind, t))
    brute = brute_modulus(TOY, TOY_H, kind, t)
    assert brute - 1e-9 <= res.value <= brute + 5e-3
    assert res.certificate["divergence"] <= t * t * (1 + 1e-9)
    assert res.value <= res.certificate["upper_bound"] + 1e-12


@pytest.mark.parametrize("kind", ["chi2", "hellinger"])
def test_lower_bound_on_coarse_toy(kind):
    K, h = make_binomial_kernel(2, 0.5), np.array([0.0, 1.0, 1.0])
    res = divergence_modulus(ModulusQuery(K, h, kind, 0.3))
    assert res.value >= brute_modulus(K, h, kind, 0.3) - 1e-9
    assert res.value <= res.certificate["upper_bound"] + 1e-12


def test_sandwich_toys():
    rng = np.random.default_rng(11)
    for _ in range(3):
        rows = rng.dirichlet(np.ones(4), size=4)
        K = Kernel(SupportGrid.integers(3), SupportGrid.integers(3), rows)
        h, t = rng.uniform(size=4), 0.15
        v = {kind: divergence_modulus(ModulusQuery(K, h, kind, t)).value for kind in ("chi2", "hellinger", "tv")}
        v2 = divergence_modulus(ModulusQuery(K, h, "hellinger", math.sqrt(2 * t))).value
        chain = [0.5 * v["hellinger"], v["chi2"], v["hellinger"], v["tv"], v2]
        for lo, hi in zip(chain, chain[1:]):
            assert lo <= hi * (1 + 1e-2) + 1e-12


def test_witness_pair_feasible():
    res = divergence_modulus(ModulusQuery(TOY, TOY_H, "chi2", 0.2))
    a = res.witness["pi_prime"].weights @ TOY.rows
    b = res.witness["pi"].weights @ TOY.rows
    assert ((a - b) ** 2 / b).sum() <= 0.04 * (1 + 1e-9)
    assert TOY_H @ (res.witness["pi_prime"].weights - res.witness["pi"].weights) == pytest.approx(res.value)


def test_grid_guard():
    K = identity_kernel(SupportGrid.integers(250))
    with pytest.raises(ValueError):
        divergence_modulus(ModulusQuery(K, np.ones(251), "chi2", 0.1))


# ---------------------------------------------------------------- delta_bv oracle


def test_delta_bv_small():
    assert delta_bv_exact_small(ModulusQuery(identity_kernel(SupportGrid.integers(2)), TOY_H, "tv", 0.0)) \
        == pytest.approx(0.0, abs=1e-9)
    q = ModulusQuery(TOY, TOY_H, "tv", 0.2)
    bv = delta_bv_exact_small(q)
    assert bv <= divergence_modulus(q.with_t(0.2, "chi2")).value + 5e-3
    assert bv <= bias_variance_lp(q).value + 1e-9
    with pytest.raises(ValueError):
        delta_bv_exact_small(ModulusQuery(identity_kernel(SupportGrid.integers(20)), np.ones(21)))


# ---------------------------------------------------------------- delta(s, t)


def test_delta_st_examples():
    assert delta_st(4.0, 0.0).value == 0.0
    grid = SupportGrid(np.arange(0, 10 + 1e-9, 0.05))
    res = delta_st(4.0, 0.01, grid, x_max=60)
    assert res.value <= 0.01 ** 0.5


def test_delta_st_monotone():
    grid = SupportGrid.linspace(0, 10, 101)
    vals_t = [delta_st(2.0, t, grid, 60).value for t in (0.01, 0.05, 0.2)]
    assert vals_t == sorted(vals_t)
    # Delta = t * (point mass at 0) is always feasible, and for s <= 2 the bound t^min(1, 2/s) is t
    vals_s = [delta_st(s, 0.05, grid, 60).value for s in (1.0, 2.0, 4.0)]
    assert vals_s[0] == pytest.approx(0.05, abs=1e-8) and vals_s[1] == pytest.approx(0.05, abs=1e-8)
    assert 0.05 < vals_s[2] <= 0.05 ** 0.5
    fine = SupportGrid.linspace(0, 10, 201)
    assert delta_st(2.0, 0.05, fine, 60).value >= vals_t[1] - 1e-10


def test_delta_st_default_grid():
    g = default_st_grid(4.0, 0.01)
    assert len(g) == 400 and g.points[-1] == pytest.approx(max(10.0, math.log(100.0)))
    with pytest.raises(ValueError):
        delta_st(0.0, 0.1)
    with pytest.raises(ValueError):
        delta_st(1.0, 1.5)
