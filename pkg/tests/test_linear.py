import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from eulerlab import linear as lg
from eulerlab import spectral as sp


def test_eigen_identities():
    rng = np.random.default_rng(0)
    for r, g in rng.uniform(1e-3, 10, (2000, 2)):
        e = lg.eigenvalues(r, g)
        assert abs(e.lam3 + e.lam4 + g) <= 1e-11 * g
        assert abs(e.lam3 * e.lam4 - r * r) <= 1e-11 * r * r
        assert e.lam3.real >= e.lam4.real


def test_eigen_rejects_nonpositive_gamma():
    with pytest.raises(ValueError):
        lg.eigenvalues(1.0, 0.0)


def test_spectral_gap_values():
    assert lg.spectral_gap(0.25, 1.0) == pytest.approx(0.0625)
    assert lg.spectral_gap(0.4, 1.0) == pytest.approx(0.16)
    with pytest.raises(ValueError):
        lg.spectral_gap(0.6, 1.0)


def test_low_frequency_expansion():
    errs = [lg.low_freq_expansion_error(r, 1.0) for r in (0.1, 0.05, 0.025)]
    # lambda_3 = -r^2/gamma - r^4/gamma^3 + ..., so the relative error is O(r^2)
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(4, rel=0.05)


def _xi(r, seed=0):
    d = np.random.default_rng(seed).standard_normal(3)
    return r * d / np.linalg.norm(d)


@pytest.mark.parametrize("r", [0.0, 0.1, 0.5, 0.5 * (1 + 1e-10), 0.5 * (1 - 1e-10), 2.0, 7.0])
@pytest.mark.parametrize("t", [0.0, 0.3, 2.0, 9.0])
def test_green_matches_matrix_exponential(r, t):
    gamma = 1.0
    xi = _xi(r)
    G = lg.green_matrix(xi, t, gamma)
    ref = expm(-lg.linear_operator(xi, gamma) * t)
    assert np.max(np.abs(G - ref)) < 1e-12


def test_green_identity_at_zero_time():
    for r in (0.0, 0.5, 3.0):
        assert np.max(np.abs(lg.green_matrix(_xi(r), 0.0, 1.0) - np.eye(4))) < 1e-12


def test_repeated_root_closed_form():
    # d = 0: g11 = e^{-gamma t/2}(1 + gamma t / 2)
    g = lg.green_hat([0.5, 0, 0], 2.0, 1.0)
    assert g.g11.real == pytest.approx(2 * math.exp(-1), rel=1e-14)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        lg.green_hat([1, 0, 0], -1.0, 1.0)


@settings(max_examples=40, deadline=None)
@given(r=st.floats(0, 6), t=st.floats(0, 5), s=st.floats(0, 5), gamma=st.floats(0.1, 5))
def test_semigroup_property(r, t, s, gamma):
    xi = _xi(r, 1)
    lhs = lg.green_matrix(xi, t + s, gamma)
    rhs = lg.green_matrix(xi, t, gamma) @ lg.green_matrix(xi, s, gamma)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.max(np.abs(lhs)))


def test_ode_residual_second_order():
    xi = np.array([0.3, -0.2, 0.4])
    r1 = lg.green_ode_residual(xi, 1.0, 1.0, 1e-3)
    r2 = lg.green_ode_residual(xi, 1.0, 1.0, 5e-4)
    assert math.log2(r1 / r2) == pytest.approx(2.0, abs=0.1)


def test_box_propagation_real_and_consistent():
    g = sp.Grid(16, 10.0)
    rng = np.random.default_rng(3)
    W = sp.transform_forward(rng.standard_normal((4,) + g.shape))
    out = lg.propagate_linear(g, W, 0.7, 1.5)
    phys = sp.transform_inverse(out, real=False)
    assert np.max(np.abs(phys.imag)) < 1e-12
    i, j, k = 1, 3, 14
    xi = np.array([kk[i, j, k] for kk in g.kvec_odd])
    ref = expm(-lg.linear_operator(xi, 1.5) * 0.7) @ W[:, i, j, k]
    assert np.allclose(out[:, i, j, k], ref, atol=1e-12)
    P = lg.BoxPropagator(g, 0.7, 1.5)
    assert np.array_equal(P(W), out)


def test_fit_decay_exponent_synthetic():
    t = np.geomspace(10, 1000, 30)
    fit = lg.fit_decay_exponent(t, 3.0 * (1 + t) ** -1.3)
    assert fit.exponent == pytest.approx(-1.3, abs=1e-12)
    with pytest.raises(ValueError):
        lg.fit_decay_exponent(t[:5], t[:5])
    with pytest.raises(ValueError):
        lg.fit_decay_exponent(t, -t)


def test_heat_kernel_control():
    # heat weight e^{-2 r^2 t / gamma} on a Gaussian: known -3/4 slope
    prof = lg.RadialProfile.gaussian()
    t = np.geomspace(10, 1000, 20)
    vals = [lg.radial_decay_norm(prof, 11, 0, tt, weight=lambda r, s: math.exp(-2 * r * r * s)) for tt in t]
    assert lg.fit_decay_exponent(t, vals).exponent == pytest.approx(-0.75, abs=0.02)


@pytest.mark.parametrize("block,k,expected", [(11, 0, -0.75), (11, 1, -1.25), (21, 0, -1.25), (22, 0, -1.75)])
def test_decay_slopes(block, k, expected):
    prof = lg.RadialProfile.gaussian()
    t = np.geomspace(10, 1000, 24)
    vals = [lg.radial_decay_norm(prof, block, k, tt) for tt in t]
    assert lg.fit_decay_exponent(t, vals).exponent == pytest.approx(expected, abs=0.05)


def test_block_weight_unknown():
    with pytest.raises(ValueError):
        lg.block_weight(33, 1.0, 1.0, 1.0)


def test_nondegeneracy_check():
    with pytest.raises(ValueError):
        lg.RadialProfile.gaussian(0.1).check_nondegenerate(0.25, 1.0)
    assert lg.RadialProfile.plateau(0.3).check_nondegenerate(0.25, 1.0) == 1.0


def test_certificate():
    t = np.geomspace(50, 1000, 16)
    cert = lg.lower_bound_certificate(lg.RadialProfile.plateau(0.25), 1.0, 0.25, t)
    assert cert["phi"]["slope_lower"] == pytest.approx(-0.75, abs=0.05)
    assert cert["u"]["slope_lower"] == pytest.approx(-1.25, abs=0.05)
    assert cert["phi"]["sandwich"] and cert["u"]["sandwich"]
    for row in cert["rows"]:
        assert row["lead_phi"] - row["rem_phi"] <= row["norm_phi"] * (1 + 1e-9)
    with pytest.raises(ValueError):
        lg.lower_bound_certificate(lg.RadialProfile.plateau(0.25), 1.0, 0.6, t)
