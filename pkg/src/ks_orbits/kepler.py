"""The periodically forced Kepler problem on the physical side.

The model is ``ü = -u/|u|³ + ε ∇_u U(t, u, ε)`` with ``U`` periodic in
``t``.  Collisions are never integrated here; this module only evaluates
the right-hand side, energies and the asymptotics of one-sided collision
limits used to certify generalized solutions.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import AtCollision, BadFit, NonDiscreteZeroSet, OutsideDomain

COLLISION_EPS = 1e-300


class PerturbationModel:
    """Base class for the forcing potential ``U(t, u, ε)``.

    Subclasses set ``period``, ``domain_radius`` and ``eps_max`` and
    implement :meth:`U` and :meth:`grad_u`.  :meth:`grad_t` falls back to a
    central difference when not overridden.  All methods broadcast over a
    leading batch axis (``t`` of shape ``(n,)`` and ``u`` of shape
    ``(n, 3)``).
    """

    period: float = 1.0
    domain_radius: float = np.inf
    eps_max: float = np.inf

    def U(self, t, u, eps):
        raise NotImplementedError

    def grad_u(self, t, u, eps):
        raise NotImplementedError

    def grad_t(self, t, u, eps):
        h = 1e-6 * max(1.0, self.period)
        t = np.asarray(t, dtype=float)
        return (self.U(t + h, u, eps) - self.U(t - h, u, eps)) / (2.0 * h)

    def terms(self, t, u, eps):
        """``(U, ∇_u U, ∂U/∂t)`` in one call; override to share work."""
        return self.U(t, u, eps), self.grad_u(t, u, eps), self.grad_t(t, u, eps)

    def check_domain(self, u, eps=None):
        r = np.linalg.norm(np.asarray(u, dtype=float), axis=-1)
        if np.any(r >= self.domain_radius):
            raise OutsideDomain(f"|u| = {np.max(r):.6g} >= domain radius {self.domain_radius:.6g}")
        if eps is not None and not 0.0 <= eps <= self.eps_max:
            raise OutsideDomain(f"eps = {eps!r} outside [0, {self.eps_max!r}]")

    def periodicity_defect(self, rng, n=64, eps=None):
        """Max of ``|U(t+T) - U(t)|`` over random interior samples."""
        t, u, e = self._random_points(rng, n, eps)
        return float(np.max(np.abs(self.U(t + self.period, u, e) - self.U(t, u, e))))

    def gradient_defect(self, rng, n=64, eps=None, h=1e-6):
        """Worst ratio of the FD/analytic gradient mismatch to its allowance.

        A value below 1 means every sample satisfies
        ``|FD - grad| <= max(1e-6, 1e-4 |grad|)``.
        """
        t, u, e = self._random_points(rng, n, eps)
        g = self.grad_u(t, u, e)
        fd = np.empty_like(g)
        for c in range(3):
            du = np.zeros(3)
            du[c] = h
            fd[:, c] = (self.U(t, u + du, e) - self.U(t, u - du, e)) / (2 * h)
        err = np.linalg.norm(fd - g, axis=-1)
        allow = np.maximum(1e-6, 1e-4 * np.linalg.norm(g, axis=-1))
        return float(np.max(err / allow))

    def _random_points(self, rng, n, eps):
        radius = min(self.domain_radius, 1.0)
        t = rng.uniform(0.0, self.period, n)
        d = rng.normal(size=(n, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        u = d * (0.9 * radius * rng.uniform(0.05, 1.0, n) ** (1 / 3))[:, None]
        e = min(self.eps_max, 1e-2) if eps is None else eps
        return t, u, e


class ZeroPerturbation(PerturbationModel):
    """``U ≡ 0``: the unperturbed Kepler problem with a nominal period."""

    def __init__(self, period=1.0):
        self.period = float(period)

    def U(self, t, u, eps):
        u = np.asarray(u, dtype=float)
        return np.zeros(u.shape[:-1])

    def grad_u(self, t, u, eps):
        return np.zeros(np.shape(u))

    def grad_t(self, t, u, eps):
        u = np.asarray(u, dtype=float)
        return np.zeros(u.shape[:-1])


class CallablePerturbation(PerturbationModel):
    """Wrap user callables ``U(t, u, eps)`` and ``grad_u(t, u, eps)``."""

    def __init__(self, period, U, grad_u, domain_radius=np.inf, eps_max=np.inf, grad_t=None):
        self.period = float(period)
        self._U = U
        self._grad_u = grad_u
        self._grad_t = grad_t
        self.domain_radius = float(domain_radius)
        self.eps_max = float(eps_max)

    def U(self, t, u, eps):
        return self._U(t, u, eps)

    def grad_u(self, t, u, eps):
        return self._grad_u(t, u, eps)

    def grad_t(self, t, u, eps):
        if self._grad_t is None:
            return super().grad_t(t, u, eps)
        return self._grad_t(t, u, eps)


@dataclass
class PhysState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.t = float(self.t)


@dataclass
class CollisionAsymptote:
    t0: float
    a: np.ndarray
    energy_limit: float
    side: int = -1  # -1: samples before t0, +1: after
    rel_remainder: float = 0.0

    @property
    def direction(self):
        return self.a / np.linalg.norm(self.a)


@dataclass
class GeneralizedOrbitCheck:
    collision_times: list = field(default_factory=list)
    direction_jump: float = 0.0
    energy_jump: float = 0.0
    zset_discrete: bool = True
    tol: float = 1e-6

    @property
    def passed(self):
        return self.zset_discrete and self.direction_jump < self.tol and self.energy_jump < self.tol


def _require_noncollision(u):
    r = float(np.linalg.norm(u))
    if r <= COLLISION_EPS:
        raise AtCollision("state is at collision (|u| = 0)")
    return r


def kepler_rhs(state: PhysState, pert: Optional[PerturbationModel] = None, eps=0.0):
    """Acceleration ``-u/|u|³ + ε ∇_u U(t, u, ε)``."""
    r = _require_noncollision(state.u)
    acc = -state.u / r**3
    if pert is not None:
        pert.check_domain(state.u, eps)
        if eps:
            acc = acc + eps * np.asarray(pert.grad_u(state.t, state.u, eps))
    return acc


def kepler_energy(state: PhysState):
    r = _require_noncollision(state.u)
    return 0.5 * float(state.v @ state.v) - 1.0 / r


def direction(state: PhysState):
    r = _require_noncollision(state.u)
    return state.u / r


def angular_momentum(state: PhysState):
    return np.cross(state.u, state.v)


def _as_arrays(samples):
    t = np.array([s.t for s in samples])
    u = np.array([s.u for s in samples])
    v = np.array([s.v for s in samples])
    return t, u, v


def _series_fit(tau, u, w=None):
    """Least squares of ``u`` on ``x, x², x³`` with ``x = τ^{2/3}``.

    When ``w = (3/2) τ du/dτ`` is given it is fitted jointly on the
    differentiated basis ``x, 2x², 3x³``.
    """
    x = tau ** (2.0 / 3.0)
    scale = np.array([1.0, 2.0, 3.0])
    basis = np.stack([x, x**2, x**3], axis=1)
    A, rhs = basis, u
    if w is not None:
        A = np.vstack([basis, basis * scale])
        rhs = np.vstack([u, w])
    norm = np.abs(A).max(axis=0)
    coef, *_ = np.linalg.lstsq(A / norm, rhs, rcond=None)
    coef = coef / norm[:, None]
    resid = rhs - A @ coef
    return coef, float(np.sum(resid**2))


def _estimate_t0(t, u, v):
    r = np.linalg.norm(u, axis=1)
    order = np.argsort(r)
    # |u|^{3/2} is linear in |t - t0| to leading order
    y = r[order[:2]] ** 1.5
    tt = t[order[:2]]
    slope = (y[1] - y[0]) / (tt[1] - tt[0])
    guess = tt[0] - y[0] / slope
    span = abs(tt[1] - tt[0]) + abs(guess - tt[0])
    side = np.sign(np.mean(t) - guess)

    def cost(shift):
        tau = side * (t - guess - shift)
        if np.any(tau <= 0):
            return np.inf
        w = 1.5 * tau[:, None] * v * side
        return _series_fit(tau, u, w)[1]

    # optimise the offset from the guess: bounded Brent's tolerance is
    # relative to |x|, which would otherwise be limited by |t0|
    lo, hi = (-span, tt[0] - guess) if side > 0 else (tt[0] - guess, span)
    res = minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-16})
    return float(guess + res.x)


def fit_collision_asymptote(samples, t0=None):
    """Fit the one-sided collision expansion ``u ≈ a |t - t0|^{2/3} + ...``.

    Args:
        samples: at least 8 :class:`PhysState` on one side of the collision
            with ``|u|`` decreasing monotonically towards it.
        t0: collision time; estimated by variable projection when omitted.

    Returns:
        CollisionAsymptote with the leading coefficient ``a`` and the energy
        limit from 3-point Richardson extrapolation in ``(t - t0)^{2/3}``.

    Raises:
        BadFit: the remainder beyond the leading term exceeds 10 % of it at
            the sample closest to the collision, or the input is unusable.
    """
    if len(samples) < 8:
        raise BadFit("need at least 8 samples")
    t, u, v = _as_arrays(samples)
    r = np.linalg.norm(u, axis=1)
    order = np.argsort(-r)
    t, u, v, r = t[order], u[order], v[order], r[order]
    if np.any(np.diff(r) >= 0):
        raise BadFit("|u| is not strictly decreasing towards the collision")
    if t0 is None:
        t0 = _estimate_t0(t, u, v)
    side = 1 if np.mean(t) > t0 else -1
    tau = side * (t - t0)
    if np.any(tau <= 0):
        raise BadFit("samples lie on both sides of t0")
    coef, _ = _series_fit(tau, u)
    a = coef[0]
    if not np.linalg.norm(a) > 0:
        raise BadFit("vanishing leading coefficient")
    x = tau ** (2.0 / 3.0)
    lead = a * x[-1]
    remainder = np.linalg.norm(u[-1] - lead) / np.linalg.norm(lead)
    if remainder > 0.1:
        raise BadFit(f"remainder {remainder:.3g} exceeds 10% of the leading term")
    energies = 0.5 * np.sum(v * v, axis=1) - 1.0 / r
    xe, ee = x[-3:], energies[-3:]
    # quadratic through the three closest points, evaluated at x = 0
    energy_limit = float(np.polyval(np.polyfit(xe / xe[0], ee, 2), 0.0))
    return CollisionAsymptote(t0=float(t0), a=a, energy_limit=energy_limit, side=side,
                              rel_remainder=float(remainder))


def collision_samples(state_at, t0, side, tau_max, n=14):
    """States at ``t0 + side·τ`` for a geometric ladder of ``τ`` values."""
    taus = tau_max * 0.5 ** np.arange(n)
    return [state_at(t0 + side * tau) for tau in taus]


def check_generalized(state_at, period, collision_times, tau_max=None, n_samples=10,
                      tol=1e-6, periodic_tol=1e-8):
    """Certify a sampled T-periodic trajectory as a generalized solution.

    Args:
        state_at: callable ``t -> PhysState`` valid away from collisions.
        period: the period ``T``.
        collision_times: collision instants in ``[0, T)``.
        tau_max: largest one-sided offset used for the limit fits
            (default ``1e-4·T``).
        tol: pass threshold on direction and energy jumps.

    Raises:
        NonDiscreteZeroSet: two collisions closer than ``1e-6·T``.
        ValueError: the trajectory is not T-periodic at its endpoints.
    """
    times = sorted(float(c) % period for c in collision_times)
    if len(times) > 1:
        gaps = np.diff(times + [times[0] + period])
        if np.min(gaps) < 1e-6 * period:
            raise NonDiscreteZeroSet("collision times accumulate")
    t_probe = 0.0
    while any(abs(t_probe - c) < 1e-3 * period for c in times):
        t_probe += 0.0123 * period
    a0, a1 = state_at(t_probe), state_at(t_probe + period)
    if np.max(np.abs(a0.u - a1.u)) > periodic_tol:
        raise ValueError("trajectory is not T-periodic")
    tau_max = 1e-4 * period if tau_max is None else tau_max
    dir_jump = 0.0
    en_jump = 0.0
    for c in times:
        before = fit_collision_asymptote(collision_samples(state_at, c, -1, tau_max, n_samples), t0=c)
        after = fit_collision_asymptote(collision_samples(state_at, c, +1, tau_max, n_samples), t0=c)
        dir_jump = max(dir_jump, float(np.linalg.norm(before.direction - after.direction)))
        en_jump = max(en_jump, abs(before.energy_limit - after.energy_limit))
    return GeneralizedOrbitCheck(collision_times=times, direction_jump=dir_jump,
                                 energy_jump=en_jump, zset_discrete=True, tol=tol)
