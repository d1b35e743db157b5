"""Kustaanheimo-Stiefel regularization in extended phase space.

States are ``(z, w, t, τ)`` with quaternions ``z, w``, the real lift ``t``
of the periodic time and its conjugate ``τ``.  The Hamiltonian is

    K_ε = |w|²/8 + τ|z|² - 1 + ε P(t, z, ε),   P = -|z|² U(t, z̄ i z, ε),

whose zero level reproduces ``ü = -u/|u|³ + ε∇U`` after the Sundman time
change ``dt/ds = |z|²``.  Flat arrays of length 10 ``(z0..z3, w0..w3, t, τ)``
are used inside integrators; :class:`KSState` is the user-facing type.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from . import quat
from .errors import AtCollision, OutsideDomain
from .flow import IntegratorConfig, propagate
from .kepler import PhysState, ZeroPerturbation, kepler_energy

COLLISION_RADIUS = 1e-8


@dataclass(frozen=True)
class KSState:
    z: np.ndarray
    w: np.ndarray
    t: float
    tau: float

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float).reshape(4))
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(4))
        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "tau", float(self.tau))

    def as_array(self):
        return np.concatenate([self.z, self.w, [self.t, self.tau]])

    @classmethod
    def from_array(cls, y):
        y = np.asarray(y, dtype=float)
        return cls(y[0:4], y[4:8], y[8], y[9])

    def __eq__(self, other):
        if not isinstance(other, KSState):
            return NotImplemented
        return bool(np.array_equal(self.as_array(), other.as_array()))

    __hash__ = None


@dataclass(frozen=True)
class SeedOrbit:
    """Closed-form Kepler orbit of ``K_0`` on the level ``τ = τ_k``.

    On this level ``z`` is a harmonic oscillator of frequency
    ``ω = (τ_k/2)^{1/2}``, so every ellipse of semi-major axis ``1/(2τ_k)``
    is periodic with the same KS period ``2π/ω``.  The base orbit starts at
    pericentre on the ``i`` axis and moves prograde in the ``(i, j)`` plane;
    for ``ecc = 0`` it is ``z(s) = ρ(cos ωs - k sin ωs)``.  ``orientation``
    rotates the physical orbit (``z -> z q̄``) and ``t0`` is the time at
    ``s = 0``.
    """

    k: int
    period: float
    tau_k: float
    rho: float
    omega: float
    orientation: np.ndarray
    t0: float
    s_period: float
    ecc: float = 0.0

    def _initial(self):
        a = self.rho**2
        r = a * (1.0 - self.ecc)
        vp = np.sqrt((1.0 + self.ecc) / r)
        qbar = quat.qconj(self.orientation)
        z0 = quat.qmul(np.array([np.sqrt(r), 0.0, 0.0, 0.0]), qbar)
        # horizontal velocity lift: z' = -i z v / 2 with v = vp j
        dz0 = -0.5 * _times_i(quat.qmul(z0, quat.pure(quat.rotate_im(self.orientation, [0.0, vp, 0.0]))))
        return z0, dz0

    def state(self, s=0.0):
        z0, dz0 = self._initial()
        om = self.omega
        c, sn = np.cos(om * s), np.sin(om * s)
        z = z0 * c + dz0 * (sn / om)
        w = 4.0 * (-z0 * om * sn + dz0 * c)
        # |z|^2 integrated in closed form (z0 ⟂ z0' at pericentre)
        A, B = z0 @ z0, (dz0 @ dz0) / om**2
        t = self.t0 + 0.5 * (A + B) * s + (A - B) * np.sin(2.0 * om * s) / (4.0 * om)
        return KSState(z, w, t, self.tau_k)

    @property
    def radius(self):
        """Semi-major axis ``ρ² = 1/(2τ_k)`` (radius of the circular seed)."""
        return self.rho**2

    @property
    def apocentre(self):
        return self.rho**2 * (1.0 + self.ecc)

    @property
    def shooting_span(self):
        """KS time ``k·S`` over which the physical time advances by one period."""
        return self.k * self.s_period


def tau_k(k, period):
    return (np.sqrt(2.0) * k * np.pi / period) ** (2.0 / 3.0)


def make_seed(k, period, orientation=None, t0=0.0, ecc=0.0):
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= ecc < 1.0:
        raise ValueError("ecc must lie in [0, 1)")
    orientation = quat.ONE if orientation is None else np.asarray(orientation, dtype=float)
    orientation = orientation / np.linalg.norm(orientation)
    tk = tau_k(k, period)
    omega = np.sqrt(tk / 2.0)
    return SeedOrbit(k=int(k), period=float(period), tau_k=tk, rho=(2.0 * tk) ** -0.5, omega=omega,
                     orientation=orientation, t0=float(t0), s_period=2.0 * np.pi / omega,
                     ecc=float(ecc))


def _times_i(q):
    """Left multiplication by ``i`` on an array of quaternions."""
    return np.stack([-q[..., 1], q[..., 0], -q[..., 3], q[..., 2]], axis=-1)


def _domain_check(pert, r2):
    if np.any(r2 >= pert.domain_radius):
        raise OutsideDomain(f"|z|^2 = {np.max(r2):.6g} >= {pert.domain_radius:.6g}")


def ks_rhs(y, pert=None, eps=0.0):
    """Hamiltonian vector field on flat states, shape ``(10,)`` or ``(n, 10)``."""
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        return _ks_rhs_single(y, pert, eps)
    z, w, t, tau = y[..., 0:4], y[..., 4:8], y[..., 8], y[..., 9]
    r2 = np.sum(z * z, axis=-1)
    dz = 0.25 * w
    dw = -2.0 * tau[..., None] * z
    dtau = np.zeros_like(tau)
    if pert is not None and not isinstance(pert, ZeroPerturbation):
        _domain_check(pert, r2)
        if eps:
            u = quat.ks_map(z)
            U, A, Ut = pert.terms(t, u, eps)
            # gradient of |z|^2 U(z̄ i z): 2 U z + |z|^2 (-2 i z A)
            G = -2.0 * _times_i(quat.qmul(z, quat.pure(A)))
            dw = dw + eps * (2.0 * U[..., None] * z + r2[..., None] * G)
            dtau = eps * r2 * Ut
    out = np.empty_like(y)
    out[..., 0:4] = dz
    out[..., 4:8] = dw
    out[..., 8] = r2
    out[..., 9] = dtau
    return out


def _ks_rhs_single(y, pert, eps):
    # float arithmetic: integrators call this once per stage, numpy overhead dominates
    z0, z1, z2, z3, w0, w1, w2, w3, t, tau = y.tolist()
    r2 = z0 * z0 + z1 * z1 + z2 * z2 + z3 * z3
    dw0, dw1, dw2, dw3 = -2.0 * tau * z0, -2.0 * tau * z1, -2.0 * tau * z2, -2.0 * tau * z3
    dtau = 0.0
    if pert is not None and not isinstance(pert, ZeroPerturbation):
        _domain_check(pert, r2)
        if eps:
            u = np.array([z0 * z0 + z1 * z1 - z2 * z2 - z3 * z3,
                          2.0 * (z1 * z2 - z0 * z3), 2.0 * (z1 * z3 + z0 * z2)])
            U, A, Ut = pert.terms(t, u, eps)
            a1, a2, a3 = np.asarray(A, dtype=float).tolist()
            U = float(U)
            # G = -2 i z A
            p0 = -z1 * a1 - z2 * a2 - z3 * a3
            p1 = z0 * a1 + z2 * a3 - z3 * a2
            p2 = z0 * a2 - z1 * a3 + z3 * a1
            p3 = z0 * a3 + z1 * a2 - z2 * a1
            dw0 += eps * (2.0 * U * z0 + r2 * 2.0 * p1)
            dw1 += eps * (2.0 * U * z1 - r2 * 2.0 * p0)
            dw2 += eps * (2.0 * U * z2 + r2 * 2.0 * p3)
            dw3 += eps * (2.0 * U * z3 - r2 * 2.0 * p2)
            dtau = eps * r2 * float(Ut)
    return np.array([0.25 * w0, 0.25 * w1, 0.25 * w2, 0.25 * w3, dw0, dw1, dw2, dw3, r2, dtau])


def vector_field(X: KSState, pert=None, eps=0.0):
    """``dX/ds`` as a KSState-shaped derivative."""
    return KSState.from_array(ks_rhs(X.as_array(), pert, eps))


def hamiltonian_array(y, pert=None, eps=0.0):
    y = np.asarray(y, dtype=float)
    z, w, t, tau = y[..., 0:4], y[..., 4:8], y[..., 8], y[..., 9]
    r2 = np.sum(z * z, axis=-1)
    K = np.sum(w * w, axis=-1) / 8.0 + tau * r2 - 1.0
    if pert is not None and not isinstance(pert, ZeroPerturbation):
        _domain_check(pert, r2)
        if eps:
            K = K - eps * r2 * pert.U(t, quat.ks_map(z), eps)
    return K


def hamiltonian(X: KSState, pert=None, eps=0.0):
    return float(hamiltonian_array(X.as_array(), pert, eps))


def bl_quaternion(X: KSState):
    """Full quaternion ``z̄ i w`` (diagnostic; only its real part is a constraint)."""
    return quat.qmul(quat.qmul(quat.qconj(X.z), quat.I), X.w)


def bl_moment_array(y):
    y = np.asarray(y, dtype=float)
    z, w = y[..., 0:4], y[..., 4:8]
    # Re(z̄ i w) = <-i z, w>
    return -np.sum(_times_i(z) * w, axis=-1)


def bl_moment(X: KSState):
    return float(bl_moment_array(X.as_array()))


def ks_to_phys(X: KSState):
    r2 = float(X.z @ X.z)
    if np.sqrt(r2) <= COLLISION_RADIUS:
        raise AtCollision("velocity undefined at |z| = 0")
    u = quat.ks_map(X.z)
    # v = 2 Im(z̄ i z') / |z|^2 with z' = w/4
    v = bl_quaternion(X)[1:] / (2.0 * r2)
    return PhysState(u, v, X.t)


def phys_to_ks(state: PhysState, fiber_phase=0.0, pert=None, eps=0.0):
    r = float(np.linalg.norm(state.u))
    if r <= 0.0:
        raise AtCollision("cannot lift a collision state")
    if pert is not None:
        pert.check_domain(state.u)
    z = np.sqrt(r) * quat.fiber_point(state.u / r, fiber_phase)
    # horizontal inverse of the velocity map: z' = -i z v / 2
    w = -2.0 * _times_i(quat.qmul(z, quat.pure(state.v)))
    tau = -kepler_energy(state)
    if pert is not None and eps:
        tau += eps * float(pert.U(state.t, state.u, eps))
    return KSState(z, w, state.t, tau)


def propagate_ks(X0, s_span, pert=None, eps=0.0, config=None, events=()):
    y0 = X0.as_array() if isinstance(X0, KSState) else np.asarray(X0, dtype=float)
    return propagate(lambda s, y: ks_rhs(y, pert, eps), y0, s_span, config or IntegratorConfig(), events)


def sundman_time(s, z, t0=0.0):
    """Physical time ``t(s) = t0 + ∫ |z|² ds`` from samples of ``z(s)``.

    Uses cumulative Simpson quadrature on the sample grid.
    """
    s = np.asarray(s, dtype=float)
    r2 = np.sum(np.asarray(z, dtype=float) ** 2, axis=-1)
    return t0 + cumulative_simpson(r2, x=s, initial=0.0)


def collision_event(s, y):
    """Rising zero of ``<z, w>`` marks a local minimum of ``|z|``."""
    return float(y[0:4] @ y[4:8])


def min_admissible_k(period, domain_radius, k_max=100000):
    """Smallest ``k`` whose circular seed radius ``1/(2τ_k)`` lies inside the domain."""
    for k in range(1, k_max + 1):
        if seed_in_domain(k, period, domain_radius):
            return k
    raise ValueError("no admissible k below k_max")


def seed_in_domain(k, period, domain_radius):
    # strict with a relative guard: a seed on the boundary is not admissible
    return 1.0 / (2.0 * tau_k(k, period)) < domain_radius * (1.0 - 1e-12)


@dataclass
class LiftedTrajectory:
    """KS trajectory rebuilt from a physical one by a horizontal lift.

    ``z(t) = (-1)^j |u(t)|^{1/2} Σ(t)`` on the ``j``-th collisionless arc,
    where ``Σ`` is the horizontal lift of ``u/|u|``; the sign flip at each
    collision keeps ``z`` smooth through ``z = 0``.
    """

    lift: object
    state_at: object
    collision_times: list
    t0: float
    period: float
    holonomy: complex
    pert: object = None
    eps: float = 0.0

    def _sign(self, t):
        return -1.0 if sum(c <= t for c in self.collision_times) % 2 else 1.0

    def state(self, t):
        """KSState at physical time ``t``; ``w`` uses ``dz/ds = |z|² dz/dt``."""
        st = self.state_at(t)
        r = float(np.linalg.norm(st.u))
        if r <= COLLISION_RADIUS**2:
            raise AtCollision("state requested at a collision")
        Sig, dSig = self.lift.evaluate(t)
        sg = self._sign(t)
        z = sg * np.sqrt(r) * Sig
        w = sg * (2.0 * float(st.u @ st.v) / np.sqrt(r) * Sig + 4.0 * r**1.5 * dSig)
        tau = -kepler_energy(st)
        if self.pert is not None and self.eps:
            tau += self.eps * float(self.pert.U(t, st.u, self.eps))
        return KSState(z, w, t, tau)

    @property
    def twist(self):
        """Boundary twist ``g'`` with ``z(t0 + T) = g' z(t0)``."""
        n = len(self.collision_times)
        return (-1.0) ** n * self.holonomy


def lift_trajectory(state_at, period, collision_times=(), t0=0.0, fiber_phase=0.0,
                    limit_direction=None, pert=None, eps=0.0):
    """Lift a (generalized) periodic physical trajectory into KS space.

    Args:
        state_at: callable ``t -> PhysState`` away from collisions.
        period: the period ``T``; the lift covers ``[t0, t0 + T]``.
        collision_times: collision instants inside ``(t0, t0 + T)``.
        fiber_phase: S¹ phase of the starting point over ``u(t0)/|u(t0)|``.
        limit_direction: optional ``(t, side) -> unit vector`` giving the
            one-sided limit of ``u/|u|`` at a collision; by default it is
            taken from :func:`~ks_orbits.kepler.fit_collision_asymptote`.
    """
    from . import pathlift
    from .kepler import collision_samples, fit_collision_asymptote

    cts = sorted(float(c) for c in collision_times if t0 < c < t0 + period)
    partition = [t0, *cts, t0 + period]
    tau_fit = 1e-4 * period

    def limit(c, side):
        if limit_direction is not None:
            return np.asarray(limit_direction(c, side), dtype=float)
        fit = fit_collision_asymptote(collision_samples(state_at, c, side, tau_fit, 10), t0=c)
        return fit.direction

    def make_piece(a, b):
        da = limit(a, +1) if a in cts else None
        db = limit(b, -1) if b in cts else None

        def piece(t):
            if da is not None and t <= a:
                return da, np.full(3, np.inf)
            if db is not None and t >= b:
                return db, np.full(3, np.inf)
            st = state_at(t)
            r = np.linalg.norm(st.u)
            sig = st.u / r
            return sig, (st.v - sig * (sig @ st.v)) / r

        return piece

    pieces = [make_piece(a, b) for a, b in zip(partition[:-1], partition[1:])]
    sigma = pathlift.PPath(partition, pieces)
    start = quat.fiber_point(sigma.point(t0), fiber_phase)
    res = pathlift.lift_ppath(sigma, start)
    return LiftedTrajectory(res.lift, state_at, cts, float(t0), float(period),
                            res.holonomy, pert, eps)


TRAJECTORY_COLUMNS = ["s", "z0", "z1", "z2", "z3", "w0", "w1", "w2", "w3", "t", "tau", "K", "BL"]


def write_trajectory_csv(path, s, y, pert=None, eps=0.0):
    """Write sampled KS states with energy and moment diagnostics."""
    y = np.atleast_2d(y)
    K = hamiltonian_array(y, pert, eps)
    BL = bl_moment_array(y)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_COLUMNS)
        for si, yi, ki, bi in zip(s, y, K, BL):
            writer.writerow([f"{v:.17g}" for v in (si, *yi, ki, bi)])
