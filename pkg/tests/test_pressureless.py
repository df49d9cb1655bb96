import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulerlab import pressureless as pl


@pytest.fixture(scope="module")
def example():
    g = 0.1
    prof = pl.paper_example_profile(g)
    ens = pl.TrajectoryEnsemble.for_gamma(g, 48)
    return g, prof, ens


def test_weight_derivatives_match_finite_differences():
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, (20, 3))
    g, h = 0.7, 1e-5
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        fd = (pl.weight_H(x + e, g) - pl.weight_H(x - e, g)) / (2 * h)
        assert np.allclose(fd, pl.weight_gradH(x, g)[:, j], atol=1e-9)
        fdg = (pl.weight_gradH(x + e, g) - pl.weight_gradH(x - e, g)) / (2 * h)
        assert np.allclose(fdg, pl.weight_hessH(x, g)[:, :, j], atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(gamma=st.floats(0.01, 10), scale=st.floats(0, 5), seed=st.integers(0, 1000))
def test_hessian_operator_bound(gamma, scale, seed):
    x = scale * np.random.default_rng(seed).standard_normal((16, 3))
    hb = pl.weight_hessH_norm_bound(x, gamma)
    assert hb.op_holds and np.all(hb.op2 <= hb.frob2 * (1 + 1e-12))


def test_hessian_frobenius_bound_fails_near_origin():
    # |D^2 H|_F^2 = e^{-2s}(16 s^2 - 16 s + 12), s = |x|^2/gamma; exceeds 10 e^{-s} for s < 0.0796
    gamma = 0.3
    s = np.array([0.0, 0.05, 0.079, 0.0797, 0.2, 2.0])
    x = np.zeros((len(s), 3))
    x[:, 0] = np.sqrt(s * gamma)
    hb = pl.weight_hessH_norm_bound(x, gamma, strict=None)
    assert np.allclose(hb.frob2, np.exp(-2 * s) * (16 * s**2 - 16 * s + 12))
    assert list(hb.frob2 > hb.bound) == [True, True, True, False, False, False]
    assert hb.worst_ratio("fro") == pytest.approx(1.2)
    with pytest.raises(AssertionError):
        pl.weight_hessH_norm_bound(x, gamma, strict="fro")


def test_hessian_sweep():
    x = np.random.default_rng(4).uniform(-3, 3, (10_000, 3))
    hb = pl.weight_hessH_norm_bound(x, 1.0)
    assert hb.worst_ratio("op") < 0.53


def test_profile_gradient(example):
    _, prof, _ = example
    assert prof.check_gradient() < 1e-7


def test_ensemble_accuracy():
    assert pl.TrajectoryEnsemble(3.0, 48).gaussian_check() < 1e-12


def test_initial_functionals_closed_form(example):
    g, prof, ens = example
    f0 = pl.initial_functionals(1.0, prof, g, ens)
    for got, want in zip((f0["A1_0"], f0["A2_0"], f0["E0"]), pl.example_functionals_exact(g)):
        assert got == pytest.approx(want, rel=1e-9)


def test_truncation_guard():
    with pytest.raises(ValueError):
        pl.initial_functionals(1.0, pl.paper_example_profile(1.0), 1.0, pl.TrajectoryEnsemble(1.0, 16))


@pytest.mark.parametrize("gamma", [0.01, 0.05, 0.1, 0.5])
def test_mstar_gamma_independent(gamma):
    A1, A2, E0 = pl.example_functionals_exact(gamma)
    crit = pl.criterion_check(A1, A2, E0, gamma**1.25, 1.0, gamma)
    assert crit.Mstar == pytest.approx(1 / (2**1.5 + 0.5), rel=1e-12)


def test_criterion_window_and_violations():
    g = 0.1
    A1, A2, E0 = pl.example_functionals_exact(g)
    crit = pl.criterion_check(A1, A2, E0, g**1.25, 1.0, g)
    assert crit.gamma_high == pytest.approx(crit.Mstar / 2)
    assert crit.gamma_low == pytest.approx(4 * (g**1.25 / crit.Mstar**2) ** 2)
    assert not crit.verdict
    assert set(crit.violated) == {"Mstar_above_threshold", "gamma_above_low"}
    with pytest.raises(ValueError):
        pl.criterion_check(A1, 0.0, E0, 1.0, 1.0, g)


def test_criterion_true_at_small_gamma():
    g = 0.01
    A1, A2, E0 = pl.example_functionals_exact(g)
    crit = pl.criterion_check(A1, A2, E0, g**1.25, 1.0, g)
    assert crit.verdict and all(v > 0 for v in crit.margins.values())


def test_characteristics_identity_at_zero(example):
    g, prof, _ = example
    x0 = np.random.default_rng(1).uniform(-0.5, 0.5, (10, 3))
    X, u, J = pl.characteristics(x0, 0.0, prof, g)
    assert np.array_equal(X, x0) and np.allclose(J, 1.0)
    with pytest.raises(ValueError):
        pl.characteristics(x0, -1.0, prof, g)


def test_linear_compression_jacobian():
    c, g, t = 2.0, 1.0, 0.4
    prof = pl.linear_profile(c)
    s = (1 - math.exp(-g * t)) / g
    _, _, J = pl.characteristics(np.zeros((1, 3)), t, prof, g)
    assert J[0] == pytest.approx((1 - s * c) ** 3, rel=1e-12)


def test_blowup_times_linear():
    ens = pl.TrajectoryEnsemble(1.0, 8)
    assert pl.blowup_time(pl.linear_profile(2.0), 1.0, ens)["t_star"] == pytest.approx(math.log(2), abs=1e-8)
    assert math.isinf(pl.blowup_time(pl.linear_profile(2.0), 3.0, ens)["t_star"])
    c, g = 5.0, 2.0
    assert pl.blowup_time(pl.linear_profile(c), g, ens)["t_star"] == pytest.approx(-math.log(1 - g / c) / g, abs=1e-8)


def test_blowup_time_example(example):
    g, prof, ens = example
    bt = pl.blowup_time(prof, g, ens)
    assert bt["converged"] and math.isfinite(bt["t_star"])
    _, _, J = pl.characteristics(np.array([bt["x0"]]), bt["t_star"], prof, g)
    assert abs(J[0]) < 1e-6
    # no node degenerates before t*
    _, _, Js = pl.characteristics(ens.nodes, 0.999 * bt["t_star"], prof, g)
    assert np.all(Js > 0)


def test_functionals_along_flow(example):
    g, prof, ens = example
    t = np.linspace(0, 2.0, 41)
    fs = pl.evolve_functionals(1.0, prof, g, t, ens)
    E0 = pl.example_functionals_exact(g)[2]
    assert np.allclose(fs.kinetic, np.exp(-2 * g * t) * E0, rtol=1e-9)
    assert np.all(fs.A2 > 0)
    # A2' = A1 and A2'' + gamma A2' = stress
    assert np.allclose(fs.A2_dot[2:-2], fs.A1[2:-2], rtol=0, atol=1e-3 * np.max(np.abs(fs.A1)))
    mon = pl.inequality_monitor(fs, g, 1.0, g**1.25)
    assert mon["sharp_holds"]
    lhs_fd = np.array(mon["lhs_fd"])[3:-3]
    assert np.allclose(lhs_fd, fs.stress[3:-3], atol=1e-2 * np.max(np.abs(fs.stress)))


def test_evolve_rejects_window_past_blowup():
    prof = pl.linear_profile(2.0)
    with pytest.raises(ValueError):
        pl.evolve_functionals(1.0, prof, 1.0, [0.0, 1.0], pl.TrajectoryEnsemble(1.0, 8))


def test_riccati_bound_is_exact_solution():
    rng = np.random.default_rng(2)
    t = np.linspace(0, 10, 101)
    for _ in range(20):
        c1, c2 = rng.uniform(0.1, 2, 2)
        c3, h0, h0p = rng.uniform(-1, 1, 3)
        b = pl.riccati_bound(h0, h0p, c1, c2, c3, t)
        e = pl.riccati_exact(h0, h0p, c1, c2, c3, t)
        assert np.allclose(b, e, rtol=1e-9, atol=1e-9)
    with pytest.raises(ValueError):
        pl.riccati_bound(1, 1, 0.0, 1, 1, t)


def test_riccati_dominates_subsolutions():
    from eulerlab.experiments import riccati_suite

    res = riccati_suite(10, seed=3)
    assert res["min_rel_slack"] >= -1e-9


def test_contradiction_certificate_small_gamma():
    g = 0.01
    prof = pl.paper_example_profile(g)
    ens = pl.TrajectoryEnsemble.for_gamma(g, 40)
    f0 = pl.initial_functionals(1.0, prof, g, ens)
    crit = pl.criterion_check(f0["A1_0"], f0["A2_0"], f0["E0"], prof.a0, 1.0, g)
    bt = pl.blowup_time(prof, g, ens)
    cert = pl.contradiction_certificate(crit, bt["t_star"])
    assert cert["leading_coefficient"] < 0 and cert["a01_quantity"] < 0
    assert math.isfinite(cert["T_neg"]) and cert["consistent"]
    b = pl.riccati_bound(crit.A2_0, crit.A1_0, g, cert["Dstar"], cert["Dstar"] * crit.E0, cert["T_neg"])
    assert abs(b) < 1e-12


def test_certificate_refuses_false_verdict():
    A1, A2, E0 = pl.example_functionals_exact(0.1)
    crit = pl.criterion_check(A1, A2, E0, 0.1**1.25, 1.0, 0.1)
    with pytest.raises(ValueError, match="criterion not satisfied"):
        pl.contradiction_certificate(crit)
