"""Restricted three-body problem in the inertial frame as a forced Kepler problem.

Two primaries of masses ``M_ε = 1 - m_ε`` and ``m_ε`` move on a Keplerian
ellipse about their common centre of mass.  In the scaled time
``s = t / T_ε`` (period 1) and the coordinates ``u = λ_ε⁻¹(ξ - X_ε)`` centred
on the big primary, the motion of the infinitesimal body becomes

    u'' = -u/|u|³ + ε ∇_u U(s, u, ε),
    U = f(ε) / |d(s, ε) - u| - g(ε) <χ(s, ε), u>,

with ``λ_ε³ = T_ε² M_ε``.  :func:`build_perturbation` returns ``U`` as a
:class:`~ks_orbits.kepler.PerturbationModel`.
"""

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import quat
from .errors import AtPrimaryCollision, DeltaBoundViolated
from .kepler import PerturbationModel

TWO_PI = 2.0 * np.pi
KEPLER_TOL = 1e-14


def kepler_eq_solve(ell, e):
    """Eccentric anomaly ``E`` solving ``E - e sin E = ℓ`` for ``0 <= e < 1``.

    Newton iteration from ``E₀ = ℓ + 0.85 e sign(sin ℓ)`` on the mean
    anomaly reduced to ``[-π, π]``; entries that fail to reach the
    tolerance are finished by bisection on ``[ℓ - e, ℓ + e]``, where the
    root is always bracketed.  Accepts scalars or arrays.
    """
    ell = np.asarray(ell, dtype=float)
    e = np.asarray(e, dtype=float)
    if np.any((e < 0) | (e >= 1)):
        raise ValueError("eccentricity must lie in [0, 1)")
    ell_b, e_b = np.broadcast_arrays(ell, e)
    if not np.any(e_b):
        return float(ell_b) if ell_b.ndim == 0 else ell_b.astype(float)
    turns = np.round(ell_b / TWO_PI)
    m = ell_b - TWO_PI * turns
    E = m + 0.85 * e_b * np.sign(np.sin(m))
    for _ in range(30):
        f = E - e_b * np.sin(E) - m
        E = E - f / (1.0 - e_b * np.cos(E))
        # the step just taken squares an error this small
        if np.max(np.abs(f)) < 1e-12:
            break
    resid = np.abs(E - e_b * np.sin(E) - m)
    bad = ~(resid < KEPLER_TOL)
    if np.any(bad):
        E = np.array(E, copy=True)
        E[bad] = _bisect(m[bad], e_b[bad])
    out = E + TWO_PI * turns
    return float(out) if out.ndim == 0 else out


def _kepler_scalar(ell, e):
    """Scalar Newton solve of Kepler's equation on Python floats."""
    turns = round(ell / TWO_PI)
    m = ell - TWO_PI * turns
    E = m + 0.85 * e * math.copysign(1.0, math.sin(m)) if m else 0.0
    for _ in range(30):
        f = E - e * math.sin(E) - m
        E -= f / (1.0 - e * math.cos(E))
        if abs(f) < 1e-12:
            break
    if not abs(E - e * math.sin(E) - m) < KEPLER_TOL:
        E = float(_bisect(np.array([m]), np.array([e]))[0])
    return E + TWO_PI * turns


def _bisect(m, e):
    lo, hi = m - e, m + e
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f = mid - e * np.sin(mid) - m
        lo = np.where(f < 0, mid, lo)
        hi = np.where(f < 0, hi, mid)
        if np.all(hi - lo < 1e-16 * np.maximum(1.0, np.abs(mid))):
            break
    return 0.5 * (lo + hi)


def rotation_matrix(q):
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q)
    return np.stack([quat.rotate_im(q, e) for e in np.eye(3)], axis=1)


@dataclass(frozen=True)
class PrimariesFamily:
    """Smooth one-parameter family of primaries with ``m_0 = 0``.

    ``mass_fn(ε) -> m_ε`` and ``a_fn(ε) -> a_ε`` default to ``m_ε = ε`` and
    ``a_ε = m_ε (T0/2π)^{2/3}``, which keeps ``T_ε = T0`` for every ``ε``.
    ``e_fn`` defaults to the constant ``e0``.  Smoothness of user-supplied
    functions is not checked.
    """

    e0: float = 0.0
    T0: float = TWO_PI
    R0: tuple = (1.0, 0.0, 0.0, 0.0)
    mass_fn: Optional[Callable] = None
    a_fn: Optional[Callable] = None
    e_fn: Optional[Callable] = None

    def __post_init__(self):
        if not 0.0 <= self.e0 < 1.0:
            raise ValueError("e0 must lie in [0, 1)")
        if not self.T0 > 0:
            raise ValueError("T0 must be positive")
        object.__setattr__(self, "R0", tuple(float(c) for c in self.R0))
        object.__setattr__(self, "_R", rotation_matrix(self.R0))

    @property
    def R(self):
        return self._R

    def masses(self, eps):
        m = float(eps) if self.mass_fn is None else float(self.mass_fn(eps))
        return m, 1.0 - m

    def m_over_eps(self, eps):
        if self.mass_fn is None:
            return 1.0
        if eps == 0:
            h = 1e-8
            return float(self.mass_fn(h)) / h
        return self.masses(eps)[0] / eps

    def ecc(self, eps):
        return self.e0 if self.e_fn is None else float(self.e_fn(eps))

    def a_over_m(self, eps):
        m, _ = self.masses(eps)
        if self.a_fn is None or m == 0.0:
            return (self.T0 / TWO_PI) ** (2.0 / 3.0)
        return float(self.a_fn(eps)) / m

    def semi_major(self, eps):
        return self.masses(eps)[0] * self.a_over_m(eps)

    def period(self, eps):
        """``T_ε = 2π a_ε^{3/2} / m_ε^{3/2}`` (third Kepler law)."""
        return TWO_PI * self.a_over_m(eps) ** 1.5

    def lam(self, eps):
        """Length scale with ``λ_ε³ = T_ε² M_ε``."""
        _, M = self.masses(eps)
        return (self.period(eps) ** 2 * M) ** (1.0 / 3.0)

    def validate(self, eps):
        m, M = self.masses(eps)
        if eps > 0 and not (m > 0 and M > 0):
            raise ValueError("masses must be positive for eps > 0")
        if not 0.0 <= self.ecc(eps) < 1.0:
            raise ValueError("eccentricity outside [0, 1)")


@dataclass
class BodyState:
    xi: np.ndarray
    xi_dot: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float)
        self.xi_dot = np.asarray(self.xi_dot, dtype=float)
        self.t = float(self.t)


def _anomaly_derivatives(s, e):
    """E and its first three derivatives with respect to scaled time."""
    E = kepler_eq_solve(TWO_PI * np.asarray(s, dtype=float), e)
    E = np.asarray(E, dtype=float)
    cE, sE = np.cos(E), np.sin(E)
    E1 = TWO_PI / (1.0 - e * cE)
    E2 = -e * sE * E1**3 / TWO_PI
    E3 = -(e / TWO_PI) * (cE * E1**4 + 3.0 * sE * E1**2 * E2)
    return E, cE, sE, E1, E2, E3


def _orbit_vectors(cE, sE, e, R):
    """Rotated ``c(E)``, ``c_E`` and ``c_EE`` of the reference ellipse."""
    beta = np.sqrt(1.0 - e * e)
    zero = np.zeros_like(cE)
    c = np.stack([cE - e, beta * sE, zero], axis=-1) @ R.T
    cE_ = np.stack([-sE, beta * cE, zero], axis=-1) @ R.T
    cEE = np.stack([-cE, -beta * sE, zero], axis=-1) @ R.T
    return c, cE_, cEE


def primary_positions(family: PrimariesFamily, s, eps):
    """Positions ``(φ_ε(s), ψ_ε(s))`` of the big and small primary in scaled time."""
    e = family.ecc(eps)
    _, cE, sE, *_ = _anomaly_derivatives(s, e)
    c, _, _ = _orbit_vectors(cE, sE, e, family.R)
    m, M = family.masses(eps)
    phi = family.semi_major(eps) * c
    psi = -M * family.a_over_m(eps) * c
    return phi, psi


def primary_velocities(family: PrimariesFamily, s, eps):
    """``(φ'_ε(s), ψ'_ε(s))`` with respect to scaled time."""
    e = family.ecc(eps)
    _, cE, sE, E1, *_ = _anomaly_derivatives(s, e)
    _, c_E, _ = _orbit_vectors(cE, sE, e, family.R)
    m, M = family.masses(eps)
    dphi = family.semi_major(eps) * E1[..., None] * c_E
    dpsi = -M * family.a_over_m(eps) * E1[..., None] * c_E
    return dphi, dpsi


def chi(family: PrimariesFamily, s, eps):
    """``χ(s, ε) = φ''_ε(s) / a_ε``, smooth down to ``ε = 0``."""
    e = family.ecc(eps)
    _, cE, sE, E1, E2, _ = _anomaly_derivatives(s, e)
    _, c_E, c_EE = _orbit_vectors(cE, sE, e, family.R)
    return E2[..., None] * c_E + (E1**2)[..., None] * c_EE


def phi_dd(family: PrimariesFamily, s, eps):
    return family.semi_major(eps) * chi(family, s, eps)


class RTBPPerturbation(PerturbationModel):
    """The forcing potential of the restricted problem in scaled time.

    ``d(s, ε) = λ⁻¹(ψ - φ) = -(2π)^{-2/3} M_ε^{-1/3} R c(E)`` is the scaled
    position of the small primary; ``f = m/(εM)`` and
    ``g = m/(ε M^{1/3} (2π)^{2/3})`` are smooth at ``ε = 0``.
    """

    def __init__(self, family: PrimariesFamily, eps_star=1e-2, n_grid=(100, 10)):
        self.family = family
        self.eps_star = float(eps_star)
        self.eps_max = float(eps_star)
        self.period = 1.0
        self._cache_key = None
        self._cache_val = None
        self.inf_distance = self._inf_distance(*n_grid)
        if not np.isfinite(self.inf_distance) or self.inf_distance <= 0:
            raise DeltaBoundViolated(f"inf |d| = {self.inf_distance!r}")
        self.domain_radius = 0.5 * self.inf_distance

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_cache_key"] = None
        state["_cache_val"] = None
        return state

    def f(self, eps):
        m, M = self.family.masses(eps)
        return self.family.m_over_eps(eps) / M

    def g(self, eps):
        _, M = self.family.masses(eps)
        return self.family.m_over_eps(eps) / (M ** (1.0 / 3.0) * TWO_PI ** (2.0 / 3.0))

    def d_scale(self, eps):
        _, M = self.family.masses(eps)
        return -(TWO_PI ** (-2.0 / 3.0)) * M ** (-1.0 / 3.0)

    def d(self, s, eps):
        return self._ephemeris(s, eps)[0]

    def chi(self, s, eps):
        return self._ephemeris(s, eps)[2]

    def _ephemeris(self, s, eps):
        if np.ndim(s) == 0:
            return self._ephemeris_scalar(float(s), float(eps))
        s = np.asarray(s, dtype=float)
        key = (s.tobytes(), s.shape, float(eps))
        if key == self._cache_key:
            return self._cache_val
        fam = self.family
        e = fam.ecc(eps)
        _, cE, sE, E1, E2, E3 = _anomaly_derivatives(s, e)
        c, c_E, c_EE = _orbit_vectors(cE, sE, e, fam.R)
        k = self.d_scale(eps)
        d = k * c
        dd = k * E1[..., None] * c_E
        ch = E2[..., None] * c_E + (E1**2)[..., None] * c_EE
        # c_EEE = -c_E
        dch = (E3 - E1**3)[..., None] * c_E + (3.0 * E1 * E2)[..., None] * c_EE
        val = (d, dd, ch, dch)
        self._cache_key, self._cache_val = key, val
        return val

    def _ephemeris_scalar(self, s, eps):
        """Same as :meth:`_ephemeris` for one time, on Python floats."""
        key = (s, eps)
        if key == self._cache_key:
            return self._cache_val
        fam = self.family
        e = fam.ecc(eps)
        E = _kepler_scalar(TWO_PI * s, e) if e else TWO_PI * s
        cE, sE = math.cos(E), math.sin(E)
        E1 = TWO_PI / (1.0 - e * cE)
        E2 = -e * sE * E1**3 / TWO_PI
        E3 = -(e / TWO_PI) * (cE * E1**4 + 3.0 * sE * E1**2 * E2)
        beta = math.sqrt(1.0 - e * e)
        R0, R1 = fam.R[:, 0], fam.R[:, 1]
        c = (cE - e) * R0 + (beta * sE) * R1
        c_E = -sE * R0 + (beta * cE) * R1
        c_EE = -cE * R0 - (beta * sE) * R1
        k = self.d_scale(eps)
        val = (k * c, (k * E1) * c_E, E2 * c_E + E1**2 * c_EE,
               (E3 - E1**3) * c_E + (3.0 * E1 * E2) * c_EE)
        self._cache_key, self._cache_val = key, val
        return val

    def U(self, t, u, eps):
        d, _, ch, _ = self._ephemeris(t, eps)
        u = np.asarray(u, dtype=float)
        return self.f(eps) / np.linalg.norm(d - u, axis=-1) - self.g(eps) * np.sum(ch * u, axis=-1)

    def grad_u(self, t, u, eps):
        d, _, ch, _ = self._ephemeris(t, eps)
        u = np.asarray(u, dtype=float)
        diff = d - u
        r = np.linalg.norm(diff, axis=-1)[..., None]
        return self.f(eps) * diff / r**3 - self.g(eps) * ch

    def grad_t(self, t, u, eps):
        d, dd, _, dch = self._ephemeris(t, eps)
        u = np.asarray(u, dtype=float)
        diff = d - u
        r = np.linalg.norm(diff, axis=-1)
        return -self.f(eps) * np.sum(diff * dd, axis=-1) / r**3 - self.g(eps) * np.sum(dch * u, axis=-1)

    def terms(self, t, u, eps):
        d, dd, ch, dch = self._ephemeris(t, eps)
        u = np.asarray(u, dtype=float)
        if u.ndim == 1 and np.ndim(t) == 0:
            return self._terms_scalar(d, dd, ch, dch, u, eps)
        f, g = self.f(eps), self.g(eps)
        diff = d - u
        r = np.sqrt(np.sum(diff * diff, axis=-1))
        inv3 = 1.0 / r**3
        U = f / r - g * np.sum(ch * u, axis=-1)
        grad = f * diff * inv3[..., None] - g * ch
        dt = -f * np.sum(diff * dd, axis=-1) * inv3 - g * np.sum(dch * u, axis=-1)
        return U, grad, dt

    def _terms_scalar(self, d, dd, ch, dch, u, eps):
        f, g = self.f(eps), self.g(eps)
        x0, x1, x2 = (d - u).tolist()
        r2 = x0 * x0 + x1 * x1 + x2 * x2
        r = math.sqrt(r2)
        inv3 = 1.0 / (r2 * r)
        u0, u1, u2 = u.tolist()
        c0, c1, c2 = ch.tolist()
        U = f / r - g * (c0 * u0 + c1 * u1 + c2 * u2)
        grad = np.array([f * x0 * inv3 - g * c0, f * x1 * inv3 - g * c1, f * x2 * inv3 - g * c2])
        e0, e1, e2 = dd.tolist()
        h0, h1, h2 = dch.tolist()
        dt = -f * (x0 * e0 + x1 * e1 + x2 * e2) * inv3 - g * (h0 * u0 + h1 * u1 + h2 * u2)
        return U, grad, dt

    def _inf_distance(self, n_s, n_eps):
        s = np.linspace(0.0, 1.0, n_s, endpoint=False)
        best = np.inf
        for eps in np.linspace(0.0, self.eps_star, n_eps):
            d = self._ephemeris(s, eps)[0]
            best = min(best, float(np.min(np.linalg.norm(d, axis=-1))))
        self._cache_key = None
        return best


def build_perturbation(family: PrimariesFamily, eps_star=1e-2):
    family.validate(eps_star)
    return RTBPPerturbation(family, eps_star)


def delta_limit(e0):
    """Limit ``(1 - e0)/(2π)^{2/3}`` of the scaled distance bound as ``ε -> 0``."""
    return (1.0 - e0) / TWO_PI ** (2.0 / 3.0)


def min_scaled_distance(family: PrimariesFamily, eps, n_s=4096):
    """``inf_s |λ_ε⁻¹(ψ_ε(s) - φ_ε(s))|`` on a fine grid refined by golden search."""
    from scipy.optimize import minimize_scalar

    lam = family.lam(eps)

    def dist(s):
        phi, psi = primary_positions(family, np.atleast_1d(s), eps)
        return float(np.linalg.norm(psi - phi, axis=-1)[0]) / lam

    grid = np.linspace(0.0, 1.0, n_s, endpoint=False)
    phi, psi = primary_positions(family, grid, eps)
    vals = np.linalg.norm(psi - phi, axis=-1) / lam
    i = int(np.argmin(vals))
    h = 1.0 / n_s
    res = minimize_scalar(dist, bounds=(grid[i] - h, grid[i] + h), method="bounded",
                          options={"xatol": 1e-12})
    return min(float(res.fun), float(vals[i]))


def rtbp_rhs(state: BodyState, family: PrimariesFamily, eps):
    """Acceleration of the infinitesimal body attracted by both primaries."""
    T = family.period(eps)
    m, M = family.masses(eps)
    phi, psi = primary_positions(family, np.atleast_1d(state.t / T), eps)
    X, x = phi[0], psi[0]
    dX, dx = X - state.xi, x - state.xi
    rX, rx = np.linalg.norm(dX), np.linalg.norm(dx)
    if rX == 0.0 or (m > 0 and rx == 0.0):
        raise AtPrimaryCollision("body coincides with a primary")
    acc = M * dX / rX**3
    if m > 0:
        acc = acc + m * dx / rx**3
    return acc


def body_to_model(state: BodyState, family: PrimariesFamily, eps):
    """Physical body state -> ``(s, u, u')`` in the scaled frame of the big primary."""
    T, lam = family.period(eps), family.lam(eps)
    s = state.t / T
    phi = primary_positions(family, np.atleast_1d(s), eps)[0][0]
    dphi = primary_velocities(family, np.atleast_1d(s), eps)[0][0]
    u = (state.xi - phi) / lam
    du = (T * state.xi_dot - dphi) / lam
    return s, u, du


def model_to_body(s, u, du, family: PrimariesFamily, eps):
    T, lam = family.period(eps), family.lam(eps)
    phi = primary_positions(family, np.atleast_1d(s), eps)[0][0]
    dphi = primary_velocities(family, np.atleast_1d(s), eps)[0][0]
    xi = phi + lam * np.asarray(u, dtype=float)
    xi_dot = (dphi + lam * np.asarray(du, dtype=float)) / T
    return BodyState(xi, xi_dot, T * s)


def consistency_check(model: RTBPPerturbation, s, u, eps):
    """Relative mismatch between the transformed restricted problem and the perturbed Kepler form.

    The left side is assembled from :func:`rtbp_rhs` through
    ``ξ = φ + λu``, ``η'' = T² ξ̈`` and ``u'' = λ⁻¹(η'' - φ'')``; the right side
    is ``-u/|u|³ + ε ∇_u U``.
    """
    fam = model.family
    T, lam = fam.period(eps), fam.lam(eps)
    u = np.asarray(u, dtype=float)
    phi = primary_positions(fam, np.atleast_1d(s), eps)[0][0]
    xi = phi + lam * u
    eta_dd = T**2 * rtbp_rhs(BodyState(xi, np.zeros(3), T * s), fam, eps)
    lhs = (eta_dd - phi_dd(fam, np.atleast_1d(s), eps)[0]) / lam
    r = np.linalg.norm(u)
    rhs = -u / r**3 + eps * model.grad_u(np.atleast_1d(s), u[None, :], eps)[0]
    scale = max(np.linalg.norm(lhs), np.linalg.norm(rhs))
    return float(np.linalg.norm(lhs - rhs) / scale)


def energy_identity_mismatch(family: PrimariesFamily, eps, s, u, du):
    """Max |LHS - RHS| of the Kepler-energy identity along model-frame samples.

    LHS is ``½|u'|² - 1/|u|``; RHS is
    ``(T²/λ²)(½|ξ̇ - Ẋ|² - M/|ξ - X|)`` evaluated on the physical states.
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    u = np.atleast_2d(u)
    du = np.atleast_2d(du)
    T, lam = family.period(eps), family.lam(eps)
    _, M = family.masses(eps)
    lhs = 0.5 * np.sum(du * du, axis=1) - 1.0 / np.linalg.norm(u, axis=1)
    phi = primary_positions(family, s, eps)[0]
    dphi = primary_velocities(family, s, eps)[0]
    xi = phi + lam * u
    xi_dot = (dphi + lam * du) / T
    X_dot = dphi / T
    rel_v = xi_dot - X_dot
    rhs = (T**2 / lam**2) * (0.5 * np.sum(rel_v * rel_v, axis=1) - M / np.linalg.norm(xi - phi, axis=1))
    return float(np.max(np.abs(lhs - rhs)))


def energy_identity_check(orbit, family: PrimariesFamily, eps=None):
    """Energy identity along the collisionless samples of an orbit record."""
    eps = orbit.eps if eps is None else eps
    t, u, v = orbit.sample_arrays()
    keep = np.linalg.norm(u, axis=1) > 1e-6
    return energy_identity_mismatch(family, eps, t[keep], u[keep], v[keep])


EPHEMERIS_COLUMNS = ["t", "X1", "X2", "X3", "x1", "x2", "x3", "xi1", "xi2", "xi3"]


def write_ephemeris_csv(path, family: PrimariesFamily, eps, s, u):
    """Physical positions of both primaries and the body at model samples ``(s, u)``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    u = np.atleast_2d(u)
    T, lam = family.period(eps), family.lam(eps)
    phi, psi = primary_positions(family, s, eps)
    xi = phi + lam * u
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPHEMERIS_COLUMNS)
        for row in zip(T * s, phi, psi, xi):
            writer.writerow([f"{row[0]:.17g}"] + [f"{c:.17g}" for vec in row[1:] for c in vec])
