"""Exact characteristics and weighted functionals for the pressureless system.

Without pressure the velocity is transported and damped along particle paths,
so for ``x0`` in the initial configuration

    s(t) = (1 - exp(-gamma t)) / gamma
    X(t; x0) = x0 + s(t) u0(x0),   u(X, t) = u0(x0) exp(-gamma t)

and the flow map degenerates when ``det(I + s(t) grad u0(x0))`` reaches 0.
All integrals against the density are evaluated in Lagrangian form,
``int rho(t) f dx = int rho0(x0) f(X(t; x0)) dx0``, which never divides by
the Jacobian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

__all__ = [
    "VelocityProfile",
    "TrajectoryEnsemble",
    "BlowupCriterion",
    "FunctionalSeries",
    "weight_H",
    "weight_gradH",
    "weight_hessH",
    "weight_hessH_norm_bound",
    "HessianBound",
    "initial_functionals",
    "criterion_check",
    "characteristics",
    "blowup_time",
    "evolve_functionals",
    "inequality_monitor",
    "riccati_bound",
    "riccati_beta",
    "riccati_exact",
    "contradiction_certificate",
    "paper_example_profile",
    "linear_profile",
    "example_functionals_exact",
]


# --- Gaussian weight -------------------------------------------------------------


def weight_H(x, gamma: float):
    x = np.asarray(x, dtype=float)
    return gamma * np.exp(-np.sum(x * x, axis=-1) / gamma)


def weight_gradH(x, gamma: float):
    x = np.asarray(x, dtype=float)
    return -2 * x * np.exp(-np.sum(x * x, axis=-1) / gamma)[..., None]


def weight_hessH(x, gamma: float):
    """Closed-form Hessian ``(4 x x^T / gamma - 2 I) exp(-|x|^2/gamma)``."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.sum(x * x, axis=-1) / gamma)[..., None, None]
    return (4 * x[..., :, None] * x[..., None, :] / gamma - 2 * np.eye(3)) * e


@dataclass
class HessianBound:
    """Pointwise comparison of ``|D^2 H|^2`` with ``10 H / gamma``.

    The Frobenius form exceeds the bound for ``|x|^2 / gamma < 0.0796``
    (at the origin it is ``12 e^0`` against ``10``); the operator-norm form
    stays below ``0.53`` of the bound everywhere, and it is the operator
    norm that enters ``u (x) u : D^2 H <= |u|^2 |D^2 H|``.
    """

    frob2: np.ndarray
    op2: np.ndarray
    bound: np.ndarray

    @property
    def frob_holds(self) -> bool:
        return bool(np.all(self.frob2 <= self.bound * (1 + 1e-12)))

    @property
    def op_holds(self) -> bool:
        return bool(np.all(self.op2 <= self.bound * (1 + 1e-12)))

    def worst_ratio(self, norm: str = "fro") -> float:
        vals = self.frob2 if norm == "fro" else self.op2
        return float(np.max(vals / self.bound))


def weight_hessH_norm_bound(x, gamma: float, strict: str | None = "op") -> HessianBound:
    """Evaluate both norms of ``D^2 H`` against ``10 H / gamma``.

    ``strict`` names the norm (``"op"`` or ``"fro"``) whose violation raises
    ``AssertionError``; ``None`` only reports.
    """
    hess = weight_hessH(x, gamma)
    frob2 = np.sum(hess * hess, axis=(-2, -1))
    op2 = np.max(np.abs(np.linalg.eigvalsh(hess)), axis=-1) ** 2
    out = HessianBound(frob2, op2, 10 * weight_H(x, gamma) / gamma)
    if strict == "op" and not out.op_holds:
        raise AssertionError("|D^2 H|_op^2 <= 10 H / gamma violated")
    if strict == "fro" and not out.frob_holds:
        raise AssertionError("|D^2 H|_F^2 <= 10 H / gamma violated")
    return out


# --- initial data --------------------------------------------------------------


@dataclass
class VelocityProfile:
    """Analytic initial velocity with its exact gradient.

    ``u(x)`` maps ``(..., 3) -> (..., 3)`` and ``grad(x)`` maps
    ``(..., 3) -> (..., 3, 3)`` with ``grad[..., i, j] = d u_i / d x_j``.
    """

    u: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    envelope_radius: float
    a0: float | None = None
    name: str = "custom"

    def check_gradient(self, n_points: int = 100, seed: int = 0, h: float = 1e-5) -> float:
        """Max relative error of ``grad`` against central differences."""
        rng = np.random.default_rng(seed)
        pts = rng.uniform(-self.envelope_radius, self.envelope_radius, (n_points, 3)) * 0.5
        exact = self.grad(pts)
        fd = np.empty_like(exact)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd[..., :, j] = (self.u(pts + e) - self.u(pts - e)) / (2 * h)
        scale = np.max(np.abs(exact)) + 1e-300
        return float(np.max(np.abs(fd - exact)) / scale)


def paper_example_profile(gamma: float) -> VelocityProfile:
    """``u0 = (x1, 0, x3) exp(-|x|^2/gamma)`` with ``a0 = gamma^{5/4}``."""

    def u(x):
        x = np.asarray(x, dtype=float)
        e = np.exp(-np.sum(x * x, axis=-1) / gamma)
        out = np.zeros_like(x)
        out[..., 0] = x[..., 0] * e
        out[..., 2] = x[..., 2] * e
        return out

    def grad(x):
        x = np.asarray(x, dtype=float)
        e = np.exp(-np.sum(x * x, axis=-1) / gamma)
        g = np.zeros(x.shape + (3,))
        for i in (0, 2):
            g[..., i, :] = -2 * x[..., i, None] * x / gamma
            g[..., i, i] += 1
        return g * e[..., None, None]

    return VelocityProfile(u, grad, envelope_radius=math.sqrt(37 * gamma), a0=gamma**1.25,
                           name="paper-example")


def linear_profile(c: float) -> VelocityProfile:
    """``u0 = -c x`` (uniform compression for ``c > 0``)."""
    return VelocityProfile(lambda x: -c * np.asarray(x, dtype=float),
                           lambda x: np.broadcast_to(-c * np.eye(3), np.shape(x) + (3,)).copy(),
                           envelope_radius=1.0, name=f"linear(-{c} x)")


def example_functionals_exact(gamma: float) -> tuple[float, float, float]:
    """Gaussian-moment values of ``(A1(0), A2(0), E0)`` for the example profile."""
    half = (math.pi * gamma / 2) ** 1.5
    return -gamma * half, gamma * (math.pi * gamma) ** 1.5, 0.5 * gamma * half


# --- quadrature ensemble -------------------------------------------------------


@dataclass
class TrajectoryEnsemble:
    """Tensor Gauss-Legendre nodes on the cube ``[-R, R]^3``."""

    radius: float
    n: int = 48
    nodes: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x, w = np.polynomial.legendre.leggauss(self.n)
        x, w = x * self.radius, w * self.radius
        X = np.stack(np.meshgrid(x, x, x, indexing="ij"), axis=-1).reshape(-1, 3)
        W = (w[:, None, None] * w[None, :, None] * w[None, None, :]).ravel()
        self.nodes, self.weights = X, W

    @classmethod
    def for_gamma(cls, gamma: float, n: int = 48) -> "TrajectoryEnsemble":
        # weight e^{-|x|^2/gamma} below 1e-16 at the faces
        return cls(math.sqrt(37 * gamma), n)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    def gaussian_check(self) -> float:
        """Relative error of the ensemble on ``int exp(-|x|^2 / s^2)`` for ``s = R/6``."""
        s = self.radius / 6
        exact = (math.pi * s * s) ** 1.5
        approx = self.integrate(np.exp(-np.sum(self.nodes**2, axis=1) / s**2))
        return abs(approx - exact) / exact


def _rho0_values(rho0, nodes):
    if callable(rho0):
        return np.asarray(rho0(nodes), dtype=float)
    return np.full(len(nodes), float(rho0))


def initial_functionals(rho0, profile: VelocityProfile, gamma: float,
                        ensemble: TrajectoryEnsemble) -> dict:
    """``A1(0) = int rho0 u0.grad H``, ``A2(0) = int rho0 H``, ``E0 = int rho0 |u0|^2``.

    Error estimates compare against a half-resolution ensemble.
    """

    def evaluate(ens):
        x = ens.nodes
        r0 = _rho0_values(rho0, x)
        u0 = profile.u(x)
        return (ens.integrate(r0 * np.sum(u0 * weight_gradH(x, gamma), axis=1)),
                ens.integrate(r0 * weight_H(x, gamma)),
                ens.integrate(r0 * np.sum(u0 * u0, axis=1)))

    A1, A2, E0 = evaluate(ensemble)
    coarse = evaluate(TrajectoryEnsemble(ensemble.radius, max(ensemble.n * 2 // 3, 8)))
    errs = [abs(a - b) / max(abs(a), 1e-300) for a, b in zip((A1, A2, E0), coarse)]
    # truncation: the weight at the faces of the cube
    trunc = math.exp(-ensemble.radius**2 / gamma)
    if trunc > 1e-6:
        raise ValueError(f"truncation radius too small: weight {trunc:.2e} at the boundary")
    return {"A1_0": A1, "A2_0": A2, "E0": E0, "rel_errors": errs, "truncation": trunc}


# --- criterion -------------------------------------------------------------------


@dataclass
class BlowupCriterion:
    A1_0: float
    A2_0: float
    E0: float
    a0: float
    Cstar: float
    gamma: float
    Mstar: float = field(init=False)
    mstar_threshold: float = field(init=False)
    gamma_low: float = field(init=False)
    gamma_high: float = field(init=False)
    margins: dict = field(init=False)
    violated: list = field(init=False)
    verdict: bool = field(init=False)

    def __post_init__(self):
        if self.A2_0 <= 0:
            raise ValueError("A2(0) must be positive")
        self.Mstar = -self.A1_0 / (self.A2_0 + self.E0)
        self.mstar_threshold = (8 * self.Cstar**2 * self.a0**2) ** 0.2
        self.gamma_high = 0.5 * self.Mstar
        self.gamma_low = (4 * (self.Cstar * self.a0 / self.Mstar**2) ** 2 if self.Mstar != 0 else math.inf)
        self.margins = {
            "Mstar_above_threshold": self.Mstar - self.mstar_threshold,
            "gamma_above_low": self.gamma - self.gamma_low,
            "gamma_below_high": self.gamma_high - self.gamma,
        }
        self.violated = [k for k, v in self.margins.items() if not v > 0]
        self.verdict = not self.violated

    def as_dict(self) -> dict:
        return {
            "A1_0": self.A1_0, "A2_0": self.A2_0, "E0": self.E0,
            "Mstar": self.Mstar, "threshold": self.mstar_threshold,
            "gamma": self.gamma, "gamma_window": [self.gamma_low, self.gamma_high],
            "a0": self.a0, "Cstar": self.Cstar,
            "verdict": self.verdict, "margins": self.margins, "violated": self.violated,
        }


def criterion_check(A1_0: float, A2_0: float, E0: float, a0: float, Cstar: float,
                    gamma: float) -> BlowupCriterion:
    return BlowupCriterion(A1_0, A2_0, E0, a0, Cstar, gamma)


def empirical_cstar(profile: VelocityProfile, h3_norm: float, ensemble: TrajectoryEnsemble) -> float:
    """Lower-bound sanity value ``||u0||_inf / ||u0||_{H^3}``."""
    sup = float(np.max(np.linalg.norm(profile.u(ensemble.nodes), axis=1)))
    return sup / h3_norm


# --- characteristics and blow-up ----------------------------------------------


def _s_of_t(t, gamma):
    return -np.expm1(-gamma * np.asarray(t, dtype=float)) / gamma


def characteristics(x0, t: float, profile: VelocityProfile, gamma: float):
    """Return ``(X, u, J)`` at time ``t`` for initial positions ``x0``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    x0 = np.asarray(x0, dtype=float)
    s = float(_s_of_t(t, gamma))
    u0 = profile.u(x0)
    X = x0 + s * u0
    u = u0 * math.exp(-gamma * t)
    J = np.linalg.det(np.eye(3) + s * profile.grad(x0))
    return X, u, J


def _critical_s(grad_u0: np.ndarray) -> np.ndarray:
    """Smallest ``s > 0`` with ``det(I + s M) = 0`` (``inf`` if none).

    ``det(I + s M) = prod(1 + s mu_i)`` vanishes at ``s = -1/mu`` for real
    negative eigenvalues ``mu``.
    """
    mu = np.linalg.eigvals(grad_u0)
    real_neg = (np.abs(mu.imag) <= 1e-12 * (1 + np.abs(mu.real))) & (mu.real < 0)
    with np.errstate(divide="ignore"):
        s = np.where(real_neg, -1.0 / np.where(real_neg, mu.real, -1.0), np.inf)
    return s.min(axis=-1)


def _bisect_time(x0, profile, gamma, t_hi, tol=1e-8):
    """Bisection on ``J(x0, t) = 0`` within ``[0, t_hi]`` where ``J(t_hi) <= 0``."""
    lo, hi = 0.0, t_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if characteristics(x0, mid, profile, gamma)[2] > 0:
            lo = mid
        else:
            hi = mid
    return hi


def blowup_time(profile: VelocityProfile, gamma: float, ensemble: TrajectoryEnsemble,
                tol: float = 1e-8, n_coarse: int = 400) -> dict:
    """Earliest time at which the Jacobian of the flow vanishes.

    Nodes are screened on a coarse time grid, the best node is refined by a
    local search in ``x0``, and the crossing time by bisection to ``tol``.
    """
    s_cap = 1.0 / gamma
    s_nodes = _critical_s(profile.grad(ensemble.nodes))
    i = int(np.argmin(s_nodes))
    x_best = ensemble.nodes[i]

    def s_at(x):
        return float(_critical_s(profile.grad(np.asarray(x)[None])[0][None])[0])

    if np.isfinite(s_nodes[i]):
        res = optimize.minimize(s_at, x_best, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
        if res.fun < s_nodes[i]:
            x_best = res.x
    s_star = s_at(x_best)
    if not s_star < s_cap:
        return {"t_star": math.inf, "x0": x_best.tolist(), "s_star": s_star, "converged": True}

    # coarse scan brackets the first sign change, bisection refines it
    t_lim = -math.log1p(-gamma * s_star) / gamma
    grid = np.linspace(0.0, 1.05 * t_lim + 1e-12, n_coarse)
    Js = np.array([characteristics(x_best, t, profile, gamma)[2] for t in grid])
    first = int(np.argmax(Js <= 0))
    t_hi = float(grid[first])
    t_star = _bisect_time(x_best, profile, gamma, t_hi, tol)
    return {"t_star": t_star, "x0": x_best.tolist(), "s_star": s_star,
            "t_closed_form": t_lim, "converged": abs(t_star - t_lim) <= 10 * tol}


# --- functionals along the flow ------------------------------------------------


@dataclass
class FunctionalSeries:
    t: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    stress: np.ndarray   # int rho u (x) u : D^2 H
    kinetic: np.ndarray
    u_sup: np.ndarray
    A2_dot: np.ndarray = field(init=False)
    A2_ddot: np.ndarray = field(init=False)

    def __post_init__(self):
        self.A2_dot = np.gradient(self.A2, self.t, edge_order=2)
        self.A2_ddot = np.gradient(self.A2_dot, self.t, edge_order=2)

    def rows(self):
        keys = ("t", "A1", "A2", "stress", "kinetic", "u_sup", "A2_dot", "A2_ddot")
        return keys, np.column_stack([getattr(self, k) for k in keys])


def evolve_functionals(rho0, profile: VelocityProfile, gamma: float, t_list,
                       ensemble: TrajectoryEnsemble) -> FunctionalSeries:
    """Push-forward quadrature of ``A1, A2`` and the kinetic energy at each time."""
    x0 = ensemble.nodes
    r0 = _rho0_values(rho0, x0)
    u0 = profile.u(x0)
    grad0 = profile.grad(x0)
    speed0 = np.linalg.norm(u0, axis=1)
    out = {k: [] for k in ("A1", "A2", "stress", "kinetic", "u_sup")}
    for t in t_list:
        s = float(_s_of_t(t, gamma))
        J = np.linalg.det(np.eye(3) + s * grad0)
        if np.any(J <= 0):
            raise ValueError(f"flow map degenerate at t={t}: inside the blow-up window")
        X = x0 + s * u0
        decay = math.exp(-gamma * t)
        u = u0 * decay
        out["A2"].append(ensemble.integrate(r0 * weight_H(X, gamma)))
        out["A1"].append(ensemble.integrate(r0 * np.sum(u * weight_gradH(X, gamma), axis=1)))
        hess = weight_hessH(X, gamma)
        out["stress"].append(ensemble.integrate(r0 * np.einsum("ni,nij,nj->n", u, hess, u)))
        out["kinetic"].append(ensemble.integrate(r0 * np.sum(u * u, axis=1)))
        out["u_sup"].append(float(speed0.max()) * decay)
    return FunctionalSeries(np.asarray(t_list, dtype=float), *(np.array(out[k]) for k in
                                                               ("A1", "A2", "stress", "kinetic", "u_sup")))


def inequality_monitor(series: FunctionalSeries, gamma: float, Cstar: float | None = None,
                       a0: float | None = None, E0: float | None = None) -> dict:
    """Slack of the second-order differential inequality for ``A2``.

    The left side ``A2'' + gamma A2' = A1' + gamma A1`` equals the stress
    integral ``int rho u (x) u : D^2 H`` exactly; it is compared with

    (a) ``||u||_inf sqrt(10/gamma) sqrt(int rho |u|^2) sqrt(A2)``
    (b) ``D*(A2 + E0)`` with ``D* = C* a0 / sqrt(gamma)`` when ``C*`` is given.
    """
    if len(series.t) < 3:
        raise ValueError("need at least 3 samples")
    lhs = series.stress
    sharp = series.u_sup * math.sqrt(10 / gamma) * np.sqrt(series.kinetic) * np.sqrt(series.A2)
    fd_lhs = series.A2_ddot + gamma * series.A2_dot
    report = {
        "t": series.t.tolist(),
        "lhs": lhs.tolist(),
        "lhs_fd": fd_lhs.tolist(),
        "sharp_rhs": sharp.tolist(),
        "sharp_slack_min": float(np.min(sharp - lhs)),
        "sharp_holds": bool(np.all(lhs <= sharp * (1 + 1e-12) + 1e-300)),
    }
    if Cstar is not None:
        E0 = float(series.kinetic[0]) if E0 is None else E0
        Dstar = Cstar * a0 / math.sqrt(gamma)
        dform = Dstar * (series.A2 + E0)
        report.update({
            "Dstar": Dstar,
            "dstar_rhs": dform.tolist(),
            "dstar_slack_min": float(np.min(dform - lhs)),
            "dstar_holds": bool(np.all(lhs <= dform * (1 + 1e-12))),
        })
    return report


# --- Riccati-type bound ----------------------------------------------------------


def riccati_beta(c1: float, c2: float) -> float:
    return (-c1 + math.sqrt(c1 * c1 + 4 * c2)) / 2


def _riccati_coeffs(h0, h0p, c1, c2, c3):
    beta = riccati_beta(c1, c2)
    mid = (h0p - beta * h0 - c3 / (beta + c1)) / (c1 + 2 * beta)
    lead = h0 + c3 / (beta * (beta + c1)) + mid
    return beta, lead, mid, c3 / (beta * (c1 + beta))


def riccati_bound(h0: float, h0p: float, c1: float, c2: float, c3: float, t):
    """Explicit upper bound for ``h'' + c1 h' <= c2 h + c3``:

    ``lead e^{beta t} - mid e^{-(c1+beta) t} - c3 / (beta (c1 + beta))``.
    """
    if not (c1 > 0 and c2 > 0):
        raise ValueError("need c1 > 0 and c2 > 0")
    beta, lead, mid, const = _riccati_coeffs(h0, h0p, c1, c2, c3)
    t = np.asarray(t, dtype=float)
    return lead * np.exp(beta * t) - mid * np.exp(-(c1 + beta) * t) - const


def riccati_exact(h0: float, h0p: float, c1: float, c2: float, c3: float, t):
    """Closed-form solution of the equality ``h'' + c1 h' = c2 h + c3``.

    Built from the characteristic roots ``r+ = beta``, ``r- = -(c1 + beta)``
    and the particular solution ``-c3/c2``.
    """
    disc = math.sqrt(c1 * c1 + 4 * c2)
    rp, rm = (-c1 + disc) / 2, (-c1 - disc) / 2
    p = -c3 / c2
    A = (h0p - rm * (h0 - p)) / (rp - rm)
    B = (h0 - p) - A
    t = np.asarray(t, dtype=float)
    return A * np.exp(rp * t) + B * np.exp(rm * t) + p


def contradiction_certificate(crit: BlowupCriterion, t_star: float | None = None) -> dict:
    """Time at which the Riccati bound for ``A2`` turns negative.

    Uses ``c1 = gamma``, ``c2 = D* = C* a0 / sqrt(gamma)``, ``c3 = D* E0``.
    The leading coefficient is negative iff ``D*(A2(0) + E0) + beta A1(0) < 0``.
    """
    if not crit.verdict:
        raise ValueError(f"criterion not satisfied: {', '.join(crit.violated)}")
    g = crit.gamma
    Dstar = crit.Cstar * crit.a0 / math.sqrt(g)
    c3 = Dstar * crit.E0
    beta, lead, mid, const = _riccati_coeffs(crit.A2_0, crit.A1_0, g, Dstar, c3)
    cond = Dstar * (crit.A2_0 + crit.E0) + beta * crit.A1_0
    report = {"beta": beta, "Dstar": Dstar, "leading_coefficient": lead,
              "a01_quantity": cond, "T_neg": math.inf, "t_star": t_star}
    if lead < 0:
        f = lambda t: float(riccati_bound(crit.A2_0, crit.A1_0, g, Dstar, c3, t))
        hi = 1.0
        while f(hi) > 0:
            hi *= 2
            if hi > 1e12:
                break
        if f(hi) <= 0:
            report["T_neg"] = optimize.brentq(f, 0.0, hi, xtol=1e-12)
    if t_star is not None:
        report["consistent"] = bool(t_star <= report["T_neg"])
    return report
