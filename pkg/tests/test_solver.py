import math

import numpy as np
import pytest

from eulerlab import linear as lg
from eulerlab import solver as sv
from eulerlab import spectral as sp
from eulerlab.experiments import random_smooth_field


@pytest.fixture
def grid():
    return sp.Grid(16, 4 * np.pi)


def _state(grid, amp, gamma=1.0, seed=0):
    rng = np.random.default_rng(seed)
    phi = random_smooth_field(grid, rng, max_mode=2)
    u = np.stack([random_smooth_field(grid, rng, max_mode=2) for _ in range(3)])
    return sv.make_state(grid, amp * phi, amp * u, gamma)


def test_potential_validation(grid):
    with pytest.raises(ValueError):
        sv.Potential(grid, -np.ones(grid.shape))
    V = sv.Potential.with_gradient_norm(grid, 1e-3, 1.5)
    assert V.grad_norm(3) == pytest.approx(1e-3, rel=1e-12)
    assert V.hypothesis_report(1e-2)["inside"]
    assert np.allclose(V.rho_inf, np.exp(-V.V))


def test_config_validation():
    with pytest.raises(ValueError):
        sv.SolverConfig(dt=0.0)
    with pytest.raises(ValueError):
        sv.SolverConfig(scheme="euler")


def test_steady_state_is_fixed(grid):
    V = sv.Potential.gaussian(grid, 0.3, 1.5)
    s = sv.steady_state(V, 1.0)
    assert np.max(np.abs(sv.rhs(s, V))) == 0
    fin, _ = sv.run(s, V, sv.SolverConfig(dt=0.2, t_end=1.0))
    assert np.max(np.abs(fin.W_hat)) == 0
    assert np.allclose(fin.density(V), V.rho_inf)


def test_linear_only_matches_exact_propagator(grid):
    s = _state(grid, 1e-2, gamma=0.7)
    V = sv.Potential.zero(grid)
    fin, _ = sv.run(s, V, sv.SolverConfig(dt=0.25, t_end=2.0), linear_only=True)
    exact = lg.propagate_linear(grid, s.W_hat, 2.0, 0.7)
    assert np.max(np.abs(fin.W_hat - exact)) < 1e-12 * np.max(np.abs(exact))


def test_time_convergence_fourth_order():
    grid = sp.Grid(16, 8 * np.pi)  # coarse enough that the CFL cap stays above dt
    s = _state(grid, 0.1)
    V = sv.Potential.gaussian(grid, 0.1, 3.0)
    sols = [sv.run(s, V, sv.SolverConfig(dt=dt, t_end=1.0))[0].W_hat for dt in (0.2, 0.1, 0.05)]
    e1 = np.max(np.abs(sols[0] - sols[2]))
    e2 = np.max(np.abs(sols[1] - sols[2]))
    # Richardson: (e(h) - e(h/4)) / (e(h/2) - e(h/4)) = (1 - 4^-p)/(2^-p - 4^-p) ~ 17 for p = 4
    assert math.log2(e1 / e2 - 1) == pytest.approx(4, abs=0.5)


def test_real_fields_stay_real(grid):
    s = _state(grid, 1e-2)
    fin, _ = sv.run(s, sv.Potential.gaussian(grid, 0.01, 1.5), sv.SolverConfig(dt=0.2, t_end=2.0))
    assert fin.imag_residue() < 1e-14


def test_conservative_form_residuals_converge():
    res = []
    for n in (16, 32, 64):
        g = sp.Grid(n, 4 * np.pi)
        x, y, z = g.coords
        k = 2 * np.pi / g.L
        phi = 0.05 * np.sin(k * x) * np.cos(k * y)
        u = 0.05 * np.stack([np.cos(k * z), np.sin(k * x), np.cos(k * y)])
        mv = sv.momentum_view(sv.make_state(g, phi, u, 1.0), sv.Potential.gaussian(g, 0.05, 1.0))
        assert np.allclose(mv["rho"], mv["drho"] + np.exp(-sv.Potential.gaussian(g, 0.05, 1.0).V))
        res.append((mv["residual_mass"], mv["residual_momentum"]))
    # the residuals are pure spatial truncation error: spectral convergence
    for i in (0, 1):
        assert res[1][i] < 1e-2 * res[0][i] and res[2][i] < 1e-2 * res[1][i]
        assert res[2][i] < 1e-9


def test_small_data_dissipation(grid):
    s = _state(grid, 1e-3)
    V = sv.Potential.with_gradient_norm(grid, 1e-3, 1.5)
    fin, hist = sv.run(s, V, sv.SolverConfig(dt=0.25, t_end=10.0))
    rep = sv.check_dissipation(hist)
    assert rep["monotone"] and rep["C4"] > 0 and rep["ratio"] < 1
    assert all(b.int_u_H3_sq >= a.int_u_H3_sq for a, b in zip(hist, hist[1:]))
    assert hist[-1].Q >= hist[0].Q and hist[-1].N0 == hist[0].N0


def test_check_dissipation_needs_records(grid):
    s = _state(grid, 1e-3)
    rec = sv.record_energies(s, sv.Potential.zero(grid), [])
    with pytest.raises(ValueError):
        sv.check_dissipation([rec, rec])


def test_energy_record_csv(grid):
    rec = sv.record_energies(_state(grid, 1e-3), sv.Potential.zero(grid), [])
    assert len(rec.csv_row()) == len(sv.EnergyRecord.csv_header())


def test_cfl_substeps(grid):
    s = _state(grid, 0.5)
    cfg = sv.SolverConfig(dt=1.0, t_end=1.0)
    assert cfg.cfl_limit(grid, float(np.max(np.abs(s.u)))) < 1.0
    out = sv.step(s, cfg, sv.Potential.zero(grid))
    assert out.t == pytest.approx(1.0)
    assert np.all(np.isfinite(out.W_hat))


def test_blowup_abort(grid):
    s = _state(grid, 1e-3)
    cfg = sv.SolverConfig(dt=0.25, t_end=1.0, blowup_factor=1e-6)
    with pytest.raises(sv.SolverBlowup) as exc:
        sv.run(s, sv.Potential.zero(grid), cfg)
    assert "umax" in exc.value.diagnostics
