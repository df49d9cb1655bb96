"""Pseudo-spectral integration of the damped isothermal Euler system.

Unknowns are the log-density perturbation ``phi = ln rho - ln rho_inf`` and
the velocity ``u``, with ``rho_inf = exp(-V)``:

    phi_t + div u        = -u.grad(phi) + u.grad(V)   (= f1)
    u_t + grad(phi) + g u = -u.grad(u)                 (= f2)

The linear part is propagated exactly with the Green symbol; the
nonlinear terms go through a Lawson (integrating-factor) RK4.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import spectral as sp
from .linear import BoxPropagator

log = logging.getLogger(__name__)

__all__ = [
    "Potential",
    "State",
    "SolverConfig",
    "SolverBlowup",
    "EnergyRecord",
    "steady_state",
    "rhs",
    "nonlinear_terms",
    "step",
    "run",
    "record_energies",
    "check_dissipation",
    "momentum_view",
    "make_state",
]


class SolverBlowup(RuntimeError):
    """Raised when the velocity leaves the admissible range or goes NaN."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class Potential:
    grid: sp.Grid
    V: np.ndarray

    def __post_init__(self):
        if np.min(self.V) < -1e-14:
            raise ValueError("potential must be nonnegative")
        self.V_hat = sp.transform_forward(self.V)
        self.grad_V = sp.transform_inverse(sp.spectral_gradient(self.grid, self.V_hat))
        self.rho_inf = np.exp(-self.V)

    @classmethod
    def zero(cls, grid: sp.Grid) -> "Potential":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def gaussian(cls, grid: sp.Grid, amplitude: float, width: float, center=None) -> "Potential":
        c = np.full(3, grid.L / 2) if center is None else np.asarray(center, dtype=float)
        r2 = sum((x - ci) ** 2 for x, ci in zip(grid.coords, c))
        return cls(grid, amplitude * np.exp(-r2 / width**2))

    @classmethod
    def with_gradient_norm(cls, grid: sp.Grid, target: float, width: float, center=None) -> "Potential":
        """Gaussian bump rescaled so that ``||grad V||_{H^3} == target``."""
        unit = cls.gaussian(grid, 1.0, width, center)
        return cls.gaussian(grid, target / unit.grad_norm(3), width, center)

    def grad_norm(self, k: int = 3) -> float:
        return sp.sobolev_norm(self.grid, sp.spectral_gradient(self.grid, self.V_hat), k)

    def hypothesis_report(self, eps0: float) -> dict:
        g = self.grad_norm(3)
        return {"grad_V_H3": g, "eps0": eps0, "inside": bool(g <= eps0)}


@dataclass
class State:
    """Spectral state ``W_hat = (phi_hat, u1_hat, u2_hat, u3_hat)``."""

    grid: sp.Grid
    W_hat: np.ndarray
    gamma: float
    t: float = 0.0

    @property
    def phi_hat(self):
        return self.W_hat[0]

    @property
    def u_hat(self):
        return self.W_hat[1:]

    @property
    def phi(self) -> np.ndarray:
        return sp.transform_inverse(self.W_hat[0])

    @property
    def u(self) -> np.ndarray:
        return sp.transform_inverse(self.W_hat[1:])

    def imag_residue(self) -> float:
        """Largest imaginary part of the physical fields."""
        raw = sp.transform_inverse(self.W_hat, real=False)
        return float(np.max(np.abs(raw.imag)))

    def density(self, V: Potential) -> np.ndarray:
        return V.rho_inf * np.exp(self.phi)


def _strip_nyquist(grid: sp.Grid, W_hat: np.ndarray) -> np.ndarray:
    W_hat = np.array(W_hat, dtype=complex, copy=True)
    h = grid.n // 2
    W_hat[..., h, :, :] = 0
    W_hat[..., :, h, :] = 0
    W_hat[..., :, :, h] = 0
    return W_hat


def make_state(grid: sp.Grid, phi: np.ndarray, u: np.ndarray, gamma: float, t: float = 0.0) -> State:
    """Build a state from physical fields; Nyquist planes are removed."""
    W = np.concatenate([np.asarray(phi)[None], np.asarray(u)])
    return State(grid, _strip_nyquist(grid, sp.transform_forward(W)), gamma, t)


def steady_state(V: Potential, gamma: float) -> State:
    g = V.grid
    return State(g, np.zeros((4,) + g.shape, dtype=complex), gamma, 0.0)


@dataclass
class SolverConfig:
    dt: float = 0.1
    t_end: float = 1.0
    scheme: str = "ifrk4"
    dealias: bool = True
    output_stride: int = 1
    delta0: float = 1e-3
    eps0: float = 1e-3
    cfl: float = 0.5
    max_halvings: int = 10
    blowup_factor: float = 1e3

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.scheme != "ifrk4":
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def cfl_limit(self, grid: sp.Grid, umax: float) -> float:
        return self.cfl * grid.dx / (1.0 + umax + 1.0)


def nonlinear_terms(state: State, V: Potential, dealias: bool = True) -> np.ndarray:
    """Spectral ``(f1, f2)`` with 2/3-rule dealiasing of every product."""
    g = state.grid
    W = state.W_hat * g.dealias_mask if dealias else state.W_hat
    half = g.n // 2 + 1
    Wh = W[..., :half]
    ik = [1j * k[..., :half] for k in g.kvec_odd]
    # u (3), grad phi (3), grad u_i (9), all inverse-transformed in one batch
    stack = [Wh[1], Wh[2], Wh[3]] + [ikj * Wh[0] for ikj in ik]
    stack += [ikj * Wh[1 + i] for i in range(3) for ikj in ik]
    phys = sp.transform_inverse_half(np.stack(stack), g)
    u, grad_phi, grad_u = phys[:3], phys[3:6], phys[6:].reshape(3, 3, *g.shape)
    f = np.empty((4,) + g.shape)
    f[0] = np.einsum("i...,i...->...", u, V.grad_V - grad_phi)
    f[1:] = -np.einsum("j...,ij...->i...", u, grad_u)
    out = _strip_nyquist(g, sp.transform_forward(f))
    return out * g.dealias_mask if dealias else out


def rhs(state: State, V: Potential, dealias: bool = True) -> np.ndarray:
    """Full time derivative ``(phi_t, u_t)`` in spectral form."""
    g = state.grid
    N = nonlinear_terms(state, V, dealias)
    out = N.copy()
    out[0] += -sp.spectral_divergence(g, state.W_hat[1:])
    out[1:] += -sp.spectral_gradient(g, state.W_hat[0]) - state.gamma * state.W_hat[1:]
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite right-hand side")
    return out


class _Propagators:
    """Cache of Green-symbol multipliers keyed by step size."""

    def __init__(self, grid, gamma):
        self.grid, self.gamma, self._cache = grid, gamma, {}

    def __call__(self, h):
        key = round(h, 15)
        if key not in self._cache:
            self._cache[key] = BoxPropagator(self.grid, h, self.gamma)
        return self._cache[key]


def _ifrk4(state: State, V: Potential, h: float, props, dealias: bool, linear_only: bool) -> np.ndarray:
    P_half, P_full = props(h / 2), props(h)

    def N(W):
        if linear_only:
            return np.zeros_like(W)
        return nonlinear_terms(replace(state, W_hat=W), V, dealias)

    W0 = state.W_hat
    k1 = N(W0)
    k2 = N(P_half(W0 + 0.5 * h * k1))
    k3 = N(P_half(W0) + 0.5 * h * k2)
    PW0 = P_full(W0)
    k4 = N(PW0 + h * P_half(k3))
    return PW0 + h / 6 * (P_full(k1) + 2 * P_half(k2 + k3) + k4)


def step(state: State, cfg: SolverConfig, V: Potential, props=None, linear_only: bool = False) -> State:
    """Advance by ``cfg.dt``, halving internally while the CFL bound is violated."""
    props = props or _Propagators(state.grid, state.gamma)
    umax = float(np.max(np.abs(state.u)))
    n_sub = 1
    h = cfg.dt
    while h > cfg.cfl_limit(state.grid, umax):
        h /= 2
        n_sub *= 2
        if n_sub > 2**cfg.max_halvings:
            raise SolverBlowup("CFL could not be satisfied", {"t": state.t, "umax": umax})
    W = state.W_hat
    cur = state
    for _ in range(n_sub):
        W = _ifrk4(cur, V, h, props, cfg.dealias, linear_only)
        cur = replace(cur, W_hat=W, t=cur.t + h)
    if n_sub > 1:
        log.debug("t=%.4g: CFL substeps %d", state.t, n_sub)
    return cur


# --- diagnostics ---------------------------------------------------------------


@dataclass
class EnergyRecord:
    t: float
    phi_H: list
    u_H: list
    E: float
    D: float
    energy_sq: float
    dissipation_sq: float
    cross: float
    int_grad_phi_H2_sq: float
    int_u_H3_sq: float
    int_mu_H3_sq: float
    int_grad_rho_H2_sq: float
    pert_H3: float
    Z1: float
    Z2: float
    Q: float
    M: float
    N0: float
    rho_min: float
    rho_max: float
    u_linf: float
    grad_rho_H2_sq: float = field(default=0.0, repr=False)
    mu_H3_sq: float = field(default=0.0, repr=False)
    weighted_Q: float = field(default=0.0, repr=False)
    weighted_M: float = field(default=0.0, repr=False)

    CSV_FIELDS = (
        "t", "E", "D", "energy_sq", "dissipation_sq", "cross", "int_grad_phi_H2_sq", "int_u_H3_sq",
        "pert_H3", "Z1", "Z2", "Q", "M", "N0", "rho_min", "rho_max", "u_linf",
    )

    def csv_row(self) -> list:
        row = [getattr(self, f) for f in self.CSV_FIELDS]
        return row + list(self.phi_H) + list(self.u_H)

    @classmethod
    def csv_header(cls) -> list:
        return list(cls.CSV_FIELDS) + [f"phi_H{k}" for k in range(4)] + [f"u_H{k}" for k in range(4)]


def _l1_data_norm(state: State) -> float:
    g = state.grid
    return sp.lp_norm(g, state.phi, 1) + sp.lp_norm(g, state.u, 1)


def record_energies(state: State, V: Potential, history: list) -> EnergyRecord:
    """Evaluate every diagnostic functional at ``state``.

    Running integrals use the trapezoidal rule against the previous record;
    ``Q`` and ``M`` are suprema of the weighted norms over recorded times.
    """
    g = state.grid
    ph, uh = state.phi_hat, state.u_hat
    phi_H = [sp.sobolev_norm(g, ph, k) for k in range(4)]
    u_H = [sp.sobolev_norm(g, uh, k) for k in range(4)]
    grad_phi_H2 = sp.sobolev_norm(g, ph, 3, start=1)
    energy_sq = phi_H[3] ** 2 + u_H[3] ** 2
    dissipation_sq = grad_phi_H2**2 + u_H[3] ** 2

    # sum_{k<=2} int grad^k u . grad^{k+1} phi  ==  sum_k |xi|^{2k} Re(conj(u_hat).(i xi phi_hat))
    grad_ph = sp.spectral_gradient(g, ph)
    k2 = g.kabs**2
    pair = np.real(np.sum(np.conj(uh) * grad_ph, axis=0))
    cross = float(np.sum((1 + k2 + k2**2) * pair) * g.cell_volume)

    rho = state.density(V)
    u = state.u
    drho_hat = sp.transform_forward(rho - V.rho_inf)
    m_hat = sp.transform_forward(rho * u)
    pert_H3 = math.sqrt(sp.sobolev_norm(g, drho_hat, 3) ** 2 + sp.sobolev_norm(g, m_hat, 3) ** 2 + u_H[3] ** 2)
    mu_H3_sq = sp.sobolev_norm(g, m_hat, 3) ** 2 + u_H[3] ** 2
    grad_rho_H2_sq = sp.sobolev_norm(g, drho_hat, 3, start=1) ** 2

    t = state.t
    wQ = (1 + t) ** 0.75 * phi_H[0] + (1 + t) ** 1.25 * (grad_phi_H2 + u_H[3])
    grad2_phi_H1 = sp.sobolev_norm(g, ph, 3, start=2)
    grad_u_H2 = sp.sobolev_norm(g, uh, 3, start=1)
    wM = (1 + t) ** 1.75 * (grad2_phi_H1 + grad_u_H2)

    if history:
        prev = history[-1]
        dt = t - prev.t
        trap = lambda a, b: 0.5 * dt * (a + b)
        i_phi = prev.int_grad_phi_H2_sq + trap(prev.dissipation_sq - prev.u_H[3] ** 2, grad_phi_H2**2)
        i_u = prev.int_u_H3_sq + trap(prev.u_H[3] ** 2, u_H[3] ** 2)
        i_mu = prev.int_mu_H3_sq + trap(prev.mu_H3_sq, mu_H3_sq)
        i_rho = prev.int_grad_rho_H2_sq + trap(prev.grad_rho_H2_sq, grad_rho_H2_sq)
        Q = max(prev.Q, wQ)
        M = max(prev.M, wM)
        N0 = prev.N0
    else:
        i_phi = i_u = i_mu = i_rho = 0.0
        Q, M = wQ, wM
        N0 = _l1_data_norm(state)

    return EnergyRecord(
        t=t, phi_H=phi_H, u_H=u_H,
        E=phi_H[3] + u_H[3], D=grad_phi_H2 + u_H[3],
        energy_sq=energy_sq, dissipation_sq=dissipation_sq, cross=cross,
        int_grad_phi_H2_sq=i_phi, int_u_H3_sq=i_u, int_mu_H3_sq=i_mu, int_grad_rho_H2_sq=i_rho,
        pert_H3=pert_H3,
        Z1=pert_H3 / math.sqrt(state.gamma) + math.sqrt(i_mu),
        Z2=math.sqrt(i_rho / state.gamma),
        Q=Q, M=M, N0=N0,
        rho_min=float(rho.min()), rho_max=float(rho.max()), u_linf=float(np.max(np.abs(u))),
        grad_rho_H2_sq=grad_rho_H2_sq, mu_H3_sq=mu_H3_sq, weighted_Q=wQ, weighted_M=wM,
    )


def run(state: State, V: Potential, cfg: SolverConfig, callback=None, linear_only: bool = False):
    """Integrate to ``cfg.t_end``; returns ``(final_state, history)``.

    ``callback(state)`` is invoked at every output step.
    """
    props = _Propagators(state.grid, state.gamma)
    history = [record_energies(state, V, [])]
    # a vanishing initial velocity would give a zero threshold; floor it at delta0
    u0max = max(float(np.max(np.abs(state.u))), cfg.delta0)
    n_steps = int(math.ceil(cfg.t_end / cfg.dt - 1e-9))
    cur = state
    if callback:
        callback(cur)
    for i in range(1, n_steps + 1):
        h = min(cfg.dt, cfg.t_end - cur.t)
        if h <= 1e-14:
            break
        cur = step(cur, replace(cfg, dt=h), V, props, linear_only)
        umax = float(np.max(np.abs(cur.u)))
        if not math.isfinite(umax) or umax > cfg.blowup_factor * u0max:
            raise SolverBlowup(f"velocity blow-up at t={cur.t:.4g}",
                               {"t": cur.t, "umax": umax, "u0max": u0max, "history": history})
        if i % cfg.output_stride == 0 or i == n_steps:
            rec = record_energies(cur, V, history)
            if rec.rho_min <= 0:
                raise SolverBlowup("density lost positivity", {"t": cur.t})
            history.append(rec)
            if callback:
                callback(cur)
    return cur, history


def check_dissipation(history: list, rel_tol: float = 1e-8, cap: float = 1e6) -> dict:
    """Discrete check of the H^3 energy inequality along a run.

    Reports per-step monotonicity of ``||(phi, u)||_{H^3}`` and the largest
    ``C4`` with ``d/dt ||(phi,u)||^2_{H^3} + C4 (||grad phi||^2_{H^2} +
    ||u||^2_{H^3}) <= 0`` at every recorded interval.
    """
    if len(history) < 3:
        raise ValueError("need at least 3 records")
    norms = np.sqrt([r.energy_sq for r in history])
    violations = []
    C4 = cap
    for a, b in zip(history[:-1], history[1:]):
        na, nb = math.sqrt(a.energy_sq), math.sqrt(b.energy_sq)
        if nb > na * (1 + rel_tol):
            violations.append({"t": b.t, "increase": (nb - na) / na})
        dt = b.t - a.t
        rate = (b.energy_sq - a.energy_sq) / dt
        diss = 0.5 * (a.dissipation_sq + b.dissipation_sq)
        if diss > 0:
            C4 = min(C4, -rate / diss)
    e0 = history[0].energy_sq
    budget = [r.energy_sq + 0.5 * max(C4, 0.0) * (r.int_grad_phi_H2_sq + r.int_u_H3_sq) for r in history]
    return {
        "monotone": not violations,
        "violations": violations,
        "C4": C4,
        "E0": float(norms[0]),
        "E_final": float(norms[-1]),
        "ratio": float(norms[-1] / norms[0]) if norms[0] > 0 else 0.0,
        "budget_max_ratio": float(max(budget) / e0) if e0 > 0 else 0.0,
    }


def momentum_view(state: State, V: Potential) -> dict:
    """Density/momentum fields and residuals of the conservative form.

    Residuals of ``rho_t + div m = 0`` and
    ``m_t + grad rho + rho grad V + gamma m + div(m (x) m / rho) = 0`` are
    evaluated with the time derivatives supplied by :func:`rhs`.
    """
    g = state.grid
    rho = state.density(V)
    if np.min(rho) <= 0:
        raise ValueError("density must be positive")
    u = state.u
    m = rho * u
    dW = sp.transform_inverse(rhs(state, V, dealias=False))
    phi_t, u_t = dW[0], dW[1:]
    rho_t = rho * phi_t
    m_t = rho_t * u + rho * u_t

    def div(v):
        return sp.transform_inverse(sp.spectral_divergence(g, sp.transform_forward(v)))

    def grad(f):
        return sp.transform_inverse(sp.spectral_gradient(g, sp.transform_forward(f)))

    res_mass = rho_t + div(m)
    grad_rho = grad(rho)
    flux = np.stack([div(m[i] * m / rho) for i in range(3)])
    terms = [m_t, grad_rho, rho * V.grad_V, state.gamma * m, flux]
    res_mom = sum(terms)
    scale = max(float(np.max(np.abs(x))) for x in terms)
    return {
        "rho": rho,
        "drho": rho - V.rho_inf,
        "m": m,
        "residual_mass": float(np.max(np.abs(res_mass))) / max(float(np.max(np.abs(rho_t))), 1e-300),
        "residual_momentum": float(np.max(np.abs(res_mom))) / scale if scale > 0 else 0.0,
    }
