"""Damped-diffusion comparison flow and maximum-principle monitoring.

Solves ``rho_t = (Lap rho + div(rho grad V)) / gamma`` on the periodic box.
The heat part goes through the exact multiplier ``exp(-|k|^2 dt / gamma)``
and the drift is explicit, so the scheme is a Lawson RK2 (Heun). The drift
is differentiated spectrally in divergence form, which keeps the zero mode,
and hence the mass, fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import spectral as sp
from .solver import Potential

__all__ = [
    "DiffusionState",
    "BoundMonitor",
    "step_parabolic",
    "run_parabolic",
    "run_max_principle",
    "compare_density",
    "drift_stability_bound",
]


@dataclass
class DiffusionState:
    grid: sp.Grid
    rho: np.ndarray
    gamma: float
    V: Potential
    t: float = 0.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not np.all(np.isfinite(self.rho)):
            raise ValueError("density contains non-finite values")
        if np.min(self.rho) <= 0:
            raise ValueError("density must be positive")

    def mass(self) -> float:
        return float(np.sum(self.rho) * self.grid.cell_volume)


@dataclass
class BoundMonitor:
    rho1: float
    rho2: float
    min_seen: float = math.inf
    max_seen: float = -math.inf
    worst_violation: float = 0.0
    t_of_worst: float = 0.0
    samples: int = 0
    history: list = field(default_factory=list, repr=False)

    def update(self, t: float, rho: np.ndarray) -> None:
        lo, hi = float(rho.min()), float(rho.max())
        self.min_seen = min(self.min_seen, lo)
        self.max_seen = max(self.max_seen, hi)
        # positive when a bound is broken, negative slack otherwise
        v = max(self.rho1 - lo, hi - self.rho2)
        if self.samples == 0 or v > self.worst_violation:
            self.worst_violation, self.t_of_worst = v, t
        self.samples += 1
        self.history.append((t, lo, hi))

    @property
    def violation(self) -> float:
        return max(self.worst_violation, 0.0)

    def report(self) -> dict:
        return {
            "rho1": self.rho1,
            "rho2": self.rho2,
            "min_seen": self.min_seen,
            "max_seen": self.max_seen,
            "worst_violation": self.worst_violation,
            "t_of_worst": self.t_of_worst,
        }


def drift_stability_bound(grid: sp.Grid, V: Potential, gamma: float) -> float:
    """Time-step limit for the explicit drift (first derivative, speed ``|grad V|/gamma``)."""
    speed = float(np.max(np.linalg.norm(V.grad_V, axis=0))) / gamma
    kmax = float(np.max(np.abs(grid.k1d)))
    # RK2 region contains the imaginary axis segment |z| < ~1; keep a margin
    return math.inf if speed == 0 else 0.5 / (speed * kmax * math.sqrt(3))


def _drift_hat(grid: sp.Grid, rho: np.ndarray, V: Potential, gamma: float) -> np.ndarray:
    flux = sp.transform_forward(rho * V.grad_V)
    return sp.spectral_divergence(grid, flux) / gamma


def step_parabolic(s: DiffusionState, dt: float) -> DiffusionState:
    g = s.grid
    if dt > drift_stability_bound(g, s.V, s.gamma):
        raise ValueError(f"dt={dt} exceeds the drift stability bound")
    E = np.exp(-g.kabs**2 * dt / s.gamma)
    r_hat = sp.transform_forward(s.rho)
    k1 = _drift_hat(g, s.rho, s.V, s.gamma)
    pred = E * (r_hat + dt * k1)
    k2 = _drift_hat(g, sp.transform_inverse(pred), s.V, s.gamma)
    new_hat = E * (r_hat + 0.5 * dt * k1) + 0.5 * dt * k2
    rho = sp.transform_inverse(new_hat)
    if not np.all(np.isfinite(rho)):
        raise ValueError("non-finite density")
    return replace(s, rho=rho, t=s.t + dt)


def run_parabolic(s: DiffusionState, dt: float, t_end: float, callback=None) -> DiffusionState:
    n = int(math.ceil(t_end / dt - 1e-9))
    h = t_end / n if n else 0.0
    if callback:
        callback(s)
    for _ in range(n):
        s = step_parabolic(s, h)
        if callback:
            callback(s)
    return s


def run_max_principle(rho0: np.ndarray, V: Potential, gamma: float, t_end: float, dt: float = 0.05,
                      eps0: float = 1e-2, gamma_min: float = 50.0) -> tuple[BoundMonitor, dict]:
    """Track ``min/max`` of the comparison density against the initial range.

    The hypotheses (``gamma >= gamma_min``, ``||grad V||_{H^3} <= eps0``) are
    reported, not enforced.
    """
    s = DiffusionState(V.grid, np.asarray(rho0, dtype=float), gamma, V)
    mon = BoundMonitor(float(s.rho.min()), float(s.rho.max()))
    m0 = s.mass()
    final = run_parabolic(s, dt, t_end, lambda st: mon.update(st.t, st.rho))
    gv = V.grad_norm(3)
    info = {
        "grad_V_H3": gv,
        "inside_hypotheses": bool(gamma >= gamma_min and gv <= eps0),
        "mass_drift": abs(final.mass() - m0) / m0,
        "final": final,
    }
    return mon, info


def compare_density(euler_series, parabolic_series, rho1: float | None = None,
                    rho2: float | None = None) -> dict:
    """Sup-norm gap between Euler and comparison densities at matched times.

    Each series is a list of ``(t, rho)``; times must agree to 1e-9. With
    ``rho1, rho2`` given, the Euler density is checked against
    ``[rho1/2, 3 rho2/2]`` at every sample.
    """
    if len(euler_series) != len(parabolic_series):
        raise ValueError("series lengths differ")
    times, gaps, lo, hi = [], [], [], []
    for (te, re), (tp, rp) in zip(euler_series, parabolic_series):
        if abs(te - tp) > 1e-9:
            raise ValueError(f"time mismatch {te} vs {tp}")
        if re.shape != rp.shape:
            raise ValueError("grid mismatch")
        times.append(te)
        gaps.append(float(np.max(np.abs(re - rp))))
        lo.append(float(re.min()))
        hi.append(float(re.max()))
    out = {"t": times, "gap": gaps, "euler_min": lo, "euler_max": hi}
    if rho1 is not None and rho2 is not None:
        out["bracket"] = [0.5 * rho1, 1.5 * rho2]
        out["bracket_holds"] = bool(min(lo) >= 0.5 * rho1 and max(hi) <= 1.5 * rho2)
    return out
