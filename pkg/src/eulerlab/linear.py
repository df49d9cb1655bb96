"""Spectral analysis of the linearized damped Euler system.

The linearization around ``(phi, u) = (0, 0)`` reads, in Fourier variables,

    d/dt W_hat + A(xi) W_hat = 0,   A(xi) = [[0, i xi^T], [i xi, gamma I]],

with ``W = (phi, u)``.  Its nontrivial eigenvalues are the roots of
``lambda^2 + gamma lambda + |xi|^2``.  Writing ``mu = -gamma/2`` and
``d = sqrt(gamma^2/4 - |xi|^2)`` (real or imaginary), every entry of the
Green symbol is a combination of

    C(t)     = e^{mu t} cosh(d t)
    delta(t) = e^{mu t} sinh(d t) / d      = (e^{l3 t} - e^{l4 t}) / (l3 - l4)

which are real, entire in ``d^2`` and free of the 0/0 at the repeated root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .spectral import Grid

__all__ = [
    "BoxPropagator",
    "EigenPair",
    "GreenHat",
    "RadialProfile",
    "DecayFit",
    "eigenvalues",
    "spectral_gap",
    "low_freq_expansion_error",
    "green_scalars",
    "green_hat",
    "green_matrix",
    "linear_operator",
    "green_ode_residual",
    "propagate_linear",
    "green_box_matrices",
    "block_weight",
    "radial_decay_norm",
    "fit_decay_exponent",
    "lower_bound_certificate",
]


@dataclass(frozen=True)
class EigenPair:
    lam3: complex
    lam4: complex
    gamma: float
    xi_abs: float


def eigenvalues(xi_abs: float, gamma: float) -> EigenPair:
    """Roots of ``lambda^2 + gamma lambda + xi^2``, ordered by real part."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    disc = gamma * gamma - 4.0 * xi_abs * xi_abs
    if disc >= 0:
        s = math.sqrt(disc)
        # l3 via the product form avoids cancellation when xi << gamma
        lam4 = (-gamma - s) / 2
        lam3 = (xi_abs * xi_abs) / lam4 if lam4 != 0 else 0.0
        return EigenPair(complex(lam3), complex(lam4), gamma, xi_abs)
    s = math.sqrt(-disc)
    return EigenPair(complex(-gamma / 2, s / 2), complex(-gamma / 2, -s / 2), gamma, xi_abs)


def spectral_gap(r0: float, gamma: float, n_check: int = 200) -> float:
    """``eta = min(r0^2/gamma, gamma/2)``, checked on a sweep of ``|xi| >= r0``."""
    if not 0 < r0 < gamma / 2:
        raise ValueError(f"need 0 < r0 < gamma/2, got r0={r0}, gamma={gamma}")
    eta = min(r0 * r0 / gamma, gamma / 2)
    for xi in np.linspace(r0, 10 * gamma, n_check):
        ep = eigenvalues(float(xi), gamma)
        worst = max(ep.lam3.real, ep.lam4.real)
        if worst > -eta * (1 - 1e-12):
            raise AssertionError(f"spectral gap violated at |xi|={xi}: Re lambda={worst}, eta={eta}")
    return eta


def low_freq_expansion_error(xi_abs: float, gamma: float) -> float:
    """Relative error of ``lambda_3 ~ -|xi|^2/gamma``: ``|l3 + xi^2/gamma| / xi^2``."""
    if not xi_abs < gamma / 2:
        raise ValueError("expansion only valid for |xi| < gamma/2")
    if xi_abs == 0:
        return 0.0
    lam3 = eigenvalues(xi_abs, gamma).lam3.real
    return abs(lam3 + xi_abs**2 / gamma) / xi_abs**2


# --- Green symbol ------------------------------------------------------------


def green_scalars(xi_abs, t, gamma):
    """Return ``(g11, delta, h)`` for arrays of ``|xi|`` at time ``t``.

    ``g11 = (l3 e^{l4 t} - l4 e^{l3 t})/(l3 - l4)``,
    ``delta = (e^{l3 t} - e^{l4 t})/(l3 - l4)``,
    ``h = (l3 e^{l3 t} - l4 e^{l4 t})/(l3 - l4)``.
    """
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be nonnegative")
    xi_abs = np.asarray(xi_abs, dtype=float)
    t = np.asarray(t, dtype=float)
    mu = -gamma / 2
    d2 = gamma * gamma / 4 - xi_abs * xi_abs
    real = d2 >= 0
    d = np.sqrt(np.abs(d2))
    dt = d * t

    # overdamped branch: factor out e^{l3 t} so nothing overflows
    lam3 = np.where(real, mu + d, mu)
    e3 = np.exp(lam3 * t)
    with np.errstate(divide="ignore", invalid="ignore"):
        em = -np.expm1(-2 * dt)
        ratio = np.where(dt > 0, em / (2 * np.where(dt > 0, dt, 1.0)), 1.0)
    C_real = e3 * (1 + np.exp(-2 * dt)) / 2
    delta_real = e3 * t * ratio

    # underdamped branch
    emu = np.exp(mu * t)
    C_osc = emu * np.cos(dt)
    delta_osc = emu * t * np.sinc(dt / np.pi)

    C = np.where(real, C_real, C_osc)
    delta = np.where(real, delta_real, delta_osc)
    return C - mu * delta, delta, C + mu * delta


def _green_scalars_1(r: float, t: float, gamma: float) -> tuple[float, float, float]:
    """Scalar fast path of :func:`green_scalars` for quadrature integrands."""
    mu = -gamma / 2
    d2 = gamma * gamma / 4 - r * r
    if d2 >= 0:
        dt = math.sqrt(d2) * t
        e3 = math.exp((mu + math.sqrt(d2)) * t)
        ratio = -math.expm1(-2 * dt) / (2 * dt) if dt > 0 else 1.0
        C = e3 * (1 + math.exp(-2 * dt)) / 2
        delta = e3 * t * ratio
    else:
        w = math.sqrt(-d2)
        emu = math.exp(mu * t)
        C = emu * math.cos(w * t)
        delta = emu * (math.sin(w * t) / w)
    return C - mu * delta, delta, C + mu * delta


@dataclass(frozen=True)
class GreenHat:
    """Block form of the 4x4 Green symbol at one wavevector."""

    g11: complex
    g12: np.ndarray  # (3,) row
    g21: np.ndarray  # (3,) column
    g22: np.ndarray  # (3, 3)

    def matrix(self) -> np.ndarray:
        G = np.zeros((4, 4), dtype=complex)
        G[0, 0] = self.g11
        G[0, 1:] = self.g12
        G[1:, 0] = self.g21
        G[1:, 1:] = self.g22
        return G


def green_hat(xi, t: float, gamma: float) -> GreenHat:
    if t < 0:
        raise ValueError("t must be nonnegative")
    xi = np.asarray(xi, dtype=float)
    r = float(np.linalg.norm(xi))
    g11, delta, h = (float(v) for v in green_scalars(r, t, gamma))
    eg = math.exp(-gamma * t)
    g12 = -1j * xi * delta
    if r == 0.0:
        g22 = eg * np.eye(3, dtype=complex)
    else:
        g22 = eg * np.eye(3) + (h - eg) * np.outer(xi, xi) / (r * r)
        g22 = g22.astype(complex)
    return GreenHat(complex(g11), g12, g12.copy(), g22)


def green_matrix(xi, t: float, gamma: float) -> np.ndarray:
    return green_hat(xi, t, gamma).matrix()


def linear_operator(xi, gamma: float) -> np.ndarray:
    """The symbol ``A(xi) = [[0, i xi^T], [i xi, gamma I]]``."""
    xi = np.asarray(xi, dtype=float)
    A = np.zeros((4, 4), dtype=complex)
    A[0, 1:] = 1j * xi
    A[1:, 0] = 1j * xi
    A[1:, 1:] = gamma * np.eye(3)
    return A


def green_ode_residual(xi, t: float, gamma: float, dt: float) -> float:
    """Max-norm of ``dG/dt + A G`` with a central difference in ``t``."""
    if t - dt < 0:
        raise ValueError("need t >= dt for the central difference")
    dG = (green_matrix(xi, t + dt, gamma) - green_matrix(xi, t - dt, gamma)) / (2 * dt)
    return float(np.max(np.abs(dG + linear_operator(xi, gamma) @ green_matrix(xi, t, gamma))))


def green_box_matrices(grid: Grid, t: float, gamma: float) -> np.ndarray:
    """Green symbol at every box wavevector, shape ``(4, 4, n, n, n)``.

    Off-diagonal blocks use the Nyquist-free wavevector so the propagator
    maps real fields to real fields.
    """
    kx, ky, kz = grid.kvec_odd
    k = np.stack([kx, ky, kz])
    kabs = np.sqrt(kx**2 + ky**2 + kz**2)
    g11, delta, h = green_scalars(kabs, t, gamma)
    eg = math.exp(-gamma * t)
    G = np.zeros((4, 4) + grid.shape, dtype=complex)
    G[0, 0] = g11
    safe = np.where(kabs > 0, kabs, 1.0)
    for i in range(3):
        G[0, 1 + i] = -1j * k[i] * delta
        G[1 + i, 0] = -1j * k[i] * delta
        for j in range(3):
            proj = np.where(kabs > 0, k[i] * k[j] / safe**2, 0.0)
            G[1 + i, 1 + j] = (eg if i == j else 0.0) + (h - eg) * proj
    return G


def apply_box_matrices(G: np.ndarray, W_hat: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,j...->i...", G, W_hat)


class BoxPropagator:
    """Green symbol on the box for a fixed step, applied as a callable."""

    def __init__(self, grid: Grid, t: float, gamma: float):
        if t < 0:
            raise ValueError("t must be nonnegative")
        self.G = green_box_matrices(grid, t, gamma)

    def __call__(self, W_hat: np.ndarray) -> np.ndarray:
        return apply_box_matrices(self.G, W_hat)


def propagate_linear(grid: Grid, W_hat: np.ndarray, t: float, gamma: float) -> np.ndarray:
    """Exact linear solution: modewise multiplication by the Green symbol.

    ``W_hat`` stacks ``(phi_hat, u1_hat, u2_hat, u3_hat)`` along axis 0.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    return apply_box_matrices(green_box_matrices(grid, t, gamma), W_hat)


# --- continuous-Fourier radial quadrature ------------------------------------


@dataclass
class RadialProfile:
    """Radially symmetric datum in continuous Fourier space, ``|xi| -> f(|xi|)``."""

    func: Callable[[float], float]
    truncation: float = 12.0
    limit: int = 400

    def __call__(self, r):
        return self.func(r)

    def check_nondegenerate(self, r0: float, c0: float, samples: int = 400) -> float:
        """Verify ``inf_{|xi|<r0} |f| >= c0``; returns the sampled infimum."""
        rs = np.linspace(0.0, r0, samples, endpoint=False)
        inf = float(np.min(np.abs([self.func(r) for r in rs])))
        if inf < c0:
            raise ValueError(f"non-degeneracy fails: inf |phi0_hat| = {inf} < c0 = {c0}")
        return inf

    @classmethod
    def gaussian(cls, width: float = 1.0, amplitude: float = 1.0) -> "RadialProfile":
        trunc = width * math.sqrt(40.0)
        return cls(lambda r: amplitude * math.exp(-(r / width) ** 2), truncation=trunc)

    @classmethod
    def plateau(cls, r_flat: float, c0: float = 1.0, width: float = 1.0) -> "RadialProfile":
        """``c0`` on ``|xi| <= r_flat`` with a Gaussian shoulder outside."""

        def f(r):
            return c0 if r <= r_flat else c0 * math.exp(-((r - r_flat) / width) ** 2)

        return cls(f, truncation=r_flat + width * math.sqrt(40.0))


def block_weight(block: int, r, t: float, gamma: float):
    """Squared symbol magnitude of one Green block acting on a radial datum.

    Scalar data enter blocks 11 and 21; vector data for blocks 12 and 22 are
    taken longitudinal, ``u0_hat = (xi/|xi|) f(|xi|)``, so that
    ``|G12 u0_hat| = |xi| |delta| |f|`` and ``|G22 u0_hat| = |h| |f|``.
    """
    g11, delta, h = _green_scalars_1(r, t, gamma)
    if block == 11:
        return g11**2
    if block in (12, 21):
        return (r * delta) ** 2
    if block == 22:
        return h**2
    raise ValueError(f"unknown block {block}")


def _radial_integral(integrand, breaks, upper, limit):
    """Adaptive Gauss-Kronrod over ``[0, upper]`` split at the kink points.

    The first panel sets the absolute tolerance of the later ones, which
    only carry exponentially small tails at late times.
    """
    pts = sorted({0.0, upper, *[b for b in breaks if 0 < b < upper]})
    total, err, epsabs = 0.0, 0.0, 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, e = integrate.quad(integrand, a, b, limit=limit, epsabs=epsabs, epsrel=1e-11)
        total += val
        err += e
        epsabs = max(epsabs, 1e-15 * abs(total))
    if not np.isfinite(total) or err > 1e-6 * abs(total) + 1e-300:
        raise ArithmeticError(f"radial quadrature did not converge (value={total}, err={err})")
    return total


def _tail_radius(t: float, gamma: float, base: float) -> float:
    # heat-like decay e^{-2 r^2 t/gamma} on the diffusive shell
    if t <= 0:
        return base
    return min(base, math.sqrt(40.0 * gamma / t) + gamma)


def radial_decay_norm(profile: RadialProfile, block: int, k: int, t: float, gamma: float = 1.0,
                      weight: Callable | None = None) -> float:
    """``||grad^k G_block * f||_{L^2(R^3)}`` by radial quadrature.

    ``weight(r, t)`` overrides the squared symbol (used for the heat-kernel
    control case).
    """
    w = weight if weight is not None else (lambda r, tt: block_weight(block, r, tt, gamma))

    def integrand(r):
        return r ** (2 * k) * float(w(r, t)) * profile(r) ** 2 * 4 * math.pi * r * r

    upper = profile.truncation
    breaks = [gamma / 2, _tail_radius(t, gamma, upper)]
    return math.sqrt(_radial_integral(integrand, breaks, upper, profile.limit))


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    intercept: float
    residual: float
    window: tuple[float, float]

    def as_dict(self) -> dict:
        return {"slope": self.exponent, "intercept": self.intercept,
                "residual": self.residual, "window": list(self.window)}


def fit_decay_exponent(times, values, window=(10.0, 1e3)) -> DecayFit:
    """Least-squares slope of ``log(value)`` against ``log(1 + t)``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    sel = (times >= window[0]) & (times <= window[1])
    t, v = times[sel], values[sel]
    if t.size < 8:
        raise ValueError(f"need at least 8 samples in window {window}, got {t.size}")
    if np.any(v <= 0):
        raise ValueError("decay fit needs strictly positive values")
    x, y = np.log1p(t), np.log(v)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.max(np.abs(A @ np.array([slope, icpt]) - y)))
    return DecayFit(float(slope), float(icpt), resid, (float(window[0]), float(window[1])))


# --- optimality ----------------------------------------------------------------


def _split_terms(r, t, gamma, phi0, u0):
    """Leading diffusive term and remainder (amplitudes) for phi and u.

    ``phi_hat = -l4 e^{l3 t}/(l3-l4) phi0 + [l3 e^{l4 t}/(l3-l4) phi0 - delta |xi| u0]``
    ``u_hat   = -e^{l3 t}/(l3-l4) |xi| phi0 + [e^{l4 t}/(l3-l4) |xi| phi0 + h u0]``
    (magnitudes along the longitudinal direction, valid for ``|xi| < gamma/2``).
    """
    g11, delta, h = _green_scalars_1(r, t, gamma)
    s = math.sqrt(max(gamma * gamma / 4 - r * r, 0.0))
    lam3, lam4 = -gamma / 2 + s, -gamma / 2 - s
    gap = lam3 - lam4
    e3, e4 = math.exp(lam3 * t), math.exp(lam4 * t)
    lead_phi = -lam4 * e3 / gap * phi0
    rem_phi = lam3 * e4 / gap * phi0 - delta * r * u0
    lead_u = -e3 / gap * r * phi0
    rem_u = e4 / gap * r * phi0 + h * u0
    return lead_phi, float(rem_phi), lead_u, float(rem_u)


def lower_bound_certificate(profile: RadialProfile, c0: float, r0: float, t_list, gamma: float = 1.0,
                            u_profile: RadialProfile | None = None, t_cert: float = 50.0) -> dict:
    """Certify two-sided algebraic bounds for the linear flow of radial data.

    On the ball ``|xi| <= r0`` the solution splits into the slow diffusive
    mode and a remainder; the lower bound uses
    ``||phi|| >= ||lead||_{ball} - ||rem||_{ball}`` and the upper bound the
    full radial norm.  Returns fitted slopes and certified constants.
    """
    if not 0 < r0 < gamma / 2:
        raise ValueError("need 0 < r0 < gamma/2")
    profile.check_nondegenerate(r0, c0)
    u0 = u_profile if u_profile is not None else (lambda r: 0.0)

    def ball(fn):
        val = _radial_integral(lambda r: fn(r) ** 2 * 4 * math.pi * r * r, [], r0, profile.limit)
        return math.sqrt(val)

    def full(block_phi, block_u):
        def integrand(r):
            g11, delta, h = _green_scalars_1(r, t, gamma)
            if block_phi:
                amp = g11 * profile(r) - delta * r * u0(r)
            else:
                amp = -delta * r * profile(r) + h * u0(r)
            return float(amp) ** 2 * 4 * math.pi * r * r

        upper = max(profile.truncation, getattr(u_profile, "truncation", 0.0))
        return math.sqrt(_radial_integral(integrand, [gamma / 2, r0, _tail_radius(t, gamma, upper)],
                                          upper, profile.limit))

    rows = []
    for t in t_list:
        t = float(t)
        parts = [lambda r, i=i: _split_terms(r, t, gamma, profile(r), u0(r))[i] for i in range(4)]
        lead_phi, rem_phi, lead_u, rem_u = (ball(p) for p in parts)
        rows.append({
            "t": t,
            "lead_phi": lead_phi, "rem_phi": rem_phi, "norm_phi": full(True, False),
            "lead_u": lead_u, "rem_u": rem_u, "norm_u": full(False, True),
        })

    times = np.array([r["t"] for r in rows])
    window = (float(times.min()), float(times.max()))

    def slope(key):
        vals = np.array([r[key] for r in rows])
        pos = vals > 1e-300
        if pos.sum() < 8:
            return -math.inf  # faster than any power over the window
        return fit_decay_exponent(times[pos], vals[pos], window).exponent

    report = {"gamma": gamma, "r0": r0, "c0": c0, "window": list(window), "rows": rows}
    for var, rate in (("phi", 0.75), ("u", 1.25)):
        lower = np.array([r[f"lead_{var}"] - r[f"rem_{var}"] for r in rows])
        norm = np.array([r[f"norm_{var}"] for r in rows])
        weight = (1 + times) ** rate
        late = times >= t_cert
        ok_from = [t for t, lo in zip(times, lower) if lo > 0]
        d = float(np.min(lower[late] * weight[late])) if late.any() else float("nan")
        C = float(np.max(norm[late] * weight[late])) if late.any() else float("nan")
        sandwich = bool(late.any() and d > 0
                        and np.all(d / weight[late] <= norm[late] * (1 + 1e-12))
                        and np.all(norm[late] <= C / weight[late] * (1 + 1e-12)))
        report[var] = {
            "slope_lower": slope(f"lead_{var}"),
            "slope_norm": slope(f"norm_{var}"),
            "slope_remainder": slope(f"rem_{var}"),
            "expected": -rate,
            "d": d,
            "C": C,
            "t0": float(ok_from[0]) if ok_from else math.inf,
            "sandwich": sandwich,
        }
    return report
