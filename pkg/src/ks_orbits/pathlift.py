"""Piecewise-smooth sphere paths and their horizontal lifts through the Hopf map.

A lift ``Γ`` of ``γ`` satisfies ``Γ̄ i Γ = γ`` and ``Re(Γ̄ i Γ̇) = 0``.  Away
from the point ``i`` the last two components ``(Γ₂, Γ₃)`` obey the planar
linear system ``(Γ₂, Γ₃)' = B(t) (Γ₂, Γ₃)`` and the first two are recovered
from ``(1 - γ₁)(Γ₁, Γ₀) = M (Γ₂, Γ₃)`` with ``M = [[γ₂, γ₃], [γ₃, -γ₂]]``.
Paths are rotated once so that ``i`` is not in their image.
"""

import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from . import quat
from .errors import PoleSelectionFailed, PoleTooClose, SingularityNotIntegrable
from .flow import IntegratorConfig, propagate

POLE_TOL = 1e-10
POLE_MARGIN = 1e-3
UNIT_TOL = 1e-10
J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


class PPath:
    """Continuous path on a sphere, smooth on each open subinterval.

    Args:
        partition: strictly increasing times ``t_0 < ... < t_N``.
        pieces: ``N`` callables ``t -> (point, velocity)`` valid on the
            corresponding open subinterval; velocities must be analytic.
        sphere_dim: 2 for paths in ``S²`` (3-vectors), 3 for ``S³``.
    """

    def __init__(self, partition, pieces: Sequence[Callable], sphere_dim=2):
        self.partition = np.asarray(partition, dtype=float)
        self.pieces = list(pieces)
        self.sphere_dim = int(sphere_dim)
        if self.partition.ndim != 1 or len(self.partition) < 2:
            raise ValueError("partition needs at least two times")
        if np.any(np.diff(self.partition) <= 0):
            raise ValueError("partition must be strictly increasing")
        if len(self.pieces) != len(self.partition) - 1:
            raise ValueError("need one piece per subinterval")
        if self.sphere_dim not in (2, 3):
            raise ValueError("sphere_dim must be 2 or 3")

    @property
    def t0(self):
        return float(self.partition[0])

    @property
    def t1(self):
        return float(self.partition[-1])

    def piece_index(self, t):
        idx = np.searchsorted(self.partition, t, side="right") - 1
        return int(np.clip(idx, 0, len(self.pieces) - 1))

    def evaluate(self, t):
        """``(point, velocity)`` at ``t``; at a partition point the right piece is used."""
        return _call_piece(self.pieces[self.piece_index(t)], float(t))

    def point(self, t):
        return self.evaluate(t)[0]

    def end_point(self):
        return _call_piece(self.pieces[-1], self.t1)[0]

    def is_closed(self, tol=1e-10):
        return bool(np.linalg.norm(self.point(self.t0) - self.end_point()) <= tol)

    def sample(self, n):
        """Points at ``n`` bin midpoints (never on a partition point)."""
        t = self.t0 + (np.arange(n) + 0.5) * (self.t1 - self.t0) / n
        return t, np.array([self.point(ti) for ti in t])

    def check_unit(self, n=200):
        _, pts = self.sample(n)
        err = float(np.max(np.abs(np.linalg.norm(pts, axis=1) - 1.0)))
        if err > UNIT_TOL:
            raise ValueError(f"path leaves the sphere (| |γ| - 1 | = {err:.3e})")
        return err

    def length(self):
        """Total length, each subinterval by adaptive quadrature of ``|γ̇|``.

        Raises:
            SingularityNotIntegrable: a quadrature does not converge to a
                finite value.
        """
        total = 0.0
        for i, piece in enumerate(self.pieces):
            a, b = self.partition[i], self.partition[i + 1]

            def speed(t, _p=piece):
                return float(np.linalg.norm(_p(t)[1]))

            with warnings.catch_warnings():
                warnings.simplefilter("error", IntegrationWarning)
                try:
                    val, _ = quad(speed, a, b, limit=200)
                except (IntegrationWarning, ZeroDivisionError, FloatingPointError) as exc:
                    raise SingularityNotIntegrable(f"speed not integrable on piece {i}: {exc}") from exc
            if not np.isfinite(val):
                raise SingularityNotIntegrable(f"speed not integrable on piece {i}")
            total += val
        return total

    def reversed(self):
        """Same image traversed backwards over the same time interval."""
        a, b = self.t0, self.t1
        part = a + b - self.partition[::-1]

        def flip(piece):
            def ev(t):
                p, v = _call_piece(piece, a + b - t)
                return p, -v
            return ev

        return PPath(part, [flip(p) for p in self.pieces[::-1]], self.sphere_dim)

    def rotated(self, q):
        """Image under ``γ -> q γ q̄``."""
        R = _rotation_matrix(q)

        def rot(piece):
            def ev(t):
                p, v = _call_piece(piece, t)
                return R @ p, R @ v
            return ev

        return PPath(self.partition, [rot(p) for p in self.pieces], self.sphere_dim)

    @classmethod
    def from_function(cls, fn, partition, sphere_dim=2):
        """Single callable ``t -> (point, velocity)`` reused on every subinterval."""
        partition = np.asarray(partition, dtype=float)
        return cls(partition, [fn] * (len(partition) - 1), sphere_dim)

    @classmethod
    def from_samples(cls, t, points, velocities=None, partition=None):
        """Interpolated path through sampled points, projected back to the sphere.

        Uses cubic Hermite interpolation when ``velocities`` are given and a
        cubic spline otherwise, one interpolant per subinterval.
        """
        t = np.asarray(t, dtype=float)
        points = np.asarray(points, dtype=float)
        partition = np.array([t[0], t[-1]]) if partition is None else np.asarray(partition, dtype=float)
        pieces = []
        for a, b in zip(partition[:-1], partition[1:]):
            mask = (t >= a - 1e-14) & (t <= b + 1e-14)
            if mask.sum() < 2:
                raise ValueError("each subinterval needs at least two samples")
            if velocities is not None:
                interp = CubicHermiteSpline(t[mask], points[mask], np.asarray(velocities)[mask])
            else:
                interp = CubicSpline(t[mask], points[mask])
            pieces.append(_projected(interp))
        return cls(partition, pieces, sphere_dim=2)


def _call_piece(piece, t):
    """Evaluate a piece, tolerating an infinite velocity at a partition point."""
    with np.errstate(divide="ignore", invalid="ignore"):
        try:
            p, v = piece(t)
        except ZeroDivisionError:
            p, v = piece(np.float64(t))
    return np.asarray(p, dtype=float), np.asarray(v, dtype=float)


def _projected(interp):
    deriv = interp.derivative()

    def ev(t):
        p, dp = interp(t), deriv(t)
        r = np.linalg.norm(p)
        g = p / r
        return g, (dp - g * (g @ dp)) / r

    return ev


def _rotation_matrix(q):
    q = np.asarray(q, dtype=float)
    return np.stack([quat.rotate_im(q, e) for e in np.eye(3)], axis=1)


@dataclass
class LiftResult:
    lift: PPath
    holonomy: Optional[complex]
    pole: np.ndarray
    rotation: np.ndarray
    holonomy_defect: float = 0.0


def _check_pole(gamma):
    if gamma[0] >= 1.0 - POLE_TOL:
        raise PoleTooClose(f"γ₁ = {gamma[0]!r} too close to the excluded point i")


def build_B(gamma, gamma_dot):
    """Coefficient matrix of the planar system for ``(Γ₂, Γ₃)``.

    Closed form ``-(γ̇₁ I + c J) / (2(1 - γ₁))`` with ``c = γ₂γ̇₃ - γ₃γ̇₂``.
    """
    g = np.asarray(gamma, dtype=float)
    gd = np.asarray(gamma_dot, dtype=float)
    _check_pole(g)
    c = g[1] * gd[2] - g[2] * gd[1]
    return -(gd[0] * np.eye(2) + c * J2) / (2.0 * (1.0 - g[0]))


def recon_matrix(gamma):
    """``M`` with ``(1 - γ₁)(Γ₁, Γ₀)ᵀ = M (Γ₂, Γ₃)ᵀ``."""
    g = np.asarray(gamma, dtype=float)
    return np.array([[g[1], g[2]], [g[2], -g[1]]])


def build_B_literal(gamma, gamma_dot):
    """Two-step assembly of ``B`` without the ``M² = (1 - γ₁²) I`` simplification.

    ``-(γ̇₁ M (Γ₁, Γ₀)ᵀ + M Ṁ (Γ₂, Γ₃)ᵀ) / (2(1 - γ₁))`` with
    ``(Γ₁, Γ₀)ᵀ = M (Γ₂, Γ₃)ᵀ / (1 - γ₁)`` substituted, as a matrix acting
    on ``(Γ₂, Γ₃)``.
    """
    g = np.asarray(gamma, dtype=float)
    gd = np.asarray(gamma_dot, dtype=float)
    _check_pole(g)
    M = recon_matrix(g)
    Md = np.array([[gd[1], gd[2]], [gd[2], -gd[1]]])
    first = gd[0] * (M @ M) / (1.0 - g[0])
    return -(first + M @ Md) / (2.0 * (1.0 - g[0]))


def reconstruct(gamma, g23):
    """Full unit quaternion ``(Γ₀, Γ₁, Γ₂, Γ₃)`` from ``(Γ₂, Γ₃)``."""
    g = np.asarray(gamma, dtype=float)
    _check_pole(g)
    g10 = recon_matrix(g) @ np.asarray(g23) / (1.0 - g[0])
    return np.array([g10[1], g10[0], g23[0], g23[1]])


def lift_derivative(gamma, gamma_dot, g23):
    """``Γ̇`` from the planar system and the derivative of the reconstruction."""
    g = np.asarray(gamma, dtype=float)
    gd = np.asarray(gamma_dot, dtype=float)
    B = build_B(g, gd)
    d23 = B @ g23
    M = recon_matrix(g)
    Md = np.array([[gd[1], gd[2]], [gd[2], -gd[1]]])
    den = 1.0 - g[0]
    d10 = (Md @ g23 + M @ d23) / den + gd[0] * (M @ g23) / den**2
    return np.array([d10[1], d10[0], d23[0], d23[1]])


class _IntervalLift:
    """Dense solution of the planar system on one subinterval.

    The outer thirds are integrated in ``σ`` with ``t = a + σ³`` and
    ``t = b - σ³``; the middle third directly in ``t``.
    """

    def __init__(self, piece, a, b, start23, config):
        self.piece, self.a, self.b = piece, float(a), float(b)
        h = (self.b - self.a) / 3.0
        self.m1, self.m2 = self.a + h, self.b - h
        self.sig = h ** (1.0 / 3.0)

        def rhs_left(sig, y):
            t = self.a + sig**3
            if t <= self.a:
                return np.zeros(2)
            g, gd = _call_piece(piece, t)
            if not np.all(np.isfinite(gd)):
                # t rounds onto the singular endpoint (e.g. after a time flip)
                return np.zeros(2)
            return 3.0 * sig**2 * (build_B(g, gd) @ y)

        def rhs_mid(t, y):
            g, gd = piece(t)
            return build_B(g, gd) @ y

        def rhs_right(sig, y):
            t = self.b - sig**3
            if t >= self.b:
                return np.zeros(2)
            g, gd = _call_piece(piece, t)
            if not np.all(np.isfinite(gd)):
                return np.zeros(2)
            return -3.0 * sig**2 * (build_B(g, gd) @ y)

        self.left = propagate(rhs_left, start23, (0.0, self.sig), config)
        self.mid = propagate(rhs_mid, self.left.y_final, (self.m1, self.m2), config)
        self.right = propagate(rhs_right, self.mid.y_final, (self.sig, 0.0), config)

    @property
    def end23(self):
        return self.right.y_final

    def g23(self, t):
        if t <= self.m1:
            return self.left(np.cbrt(max(t - self.a, 0.0)))
        if t >= self.m2:
            return self.right(np.cbrt(max(self.b - t, 0.0)))
        return self.mid(t)


def lift_interval(piece, a, b, start23, config=None, margin=POLE_MARGIN):
    """Solve the planar system for ``(Γ₂, Γ₃)`` on ``[a, b]``.

    Args:
        piece: callable ``t -> (γ, γ̇)`` on the open interval.
        a, b: interval ends.
        start23: ``(Γ₂, Γ₃)`` at ``a`` with ``Γ₂² + Γ₃² = (1 - γ₁(a))/2``.
        margin: required distance of ``γ₁`` from 1.

    Returns:
        ``(g23, full)`` callables giving ``(Γ₂, Γ₃)`` and the full quaternion.
    """
    config = config or IntegratorConfig(rel_tol=1e-12, abs_tol=1e-13)
    start23 = np.asarray(start23, dtype=float)
    ga = _call_piece(piece, float(a))[0]
    if ga[0] > 1.0 - margin:
        raise PoleTooClose("interval starts too close to i")
    if abs(start23 @ start23 - 0.5 * (1.0 - ga[0])) > 1e-10:
        raise ValueError("start point does not lie over γ(a)")
    sol = _IntervalLift(piece, a, b, start23, config)

    def full(t):
        g = _call_piece(piece, float(t))[0]
        return reconstruct(g, sol.g23(t))

    return sol.g23, full


def _icosphere(levels=2):
    phi = 0.5 * (1.0 + np.sqrt(5.0))
    verts = [(-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
             (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
             (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(levels):
        cache = {}
        new_faces = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    V = np.array(verts)
    # rotate vertex 0 onto i so that ±i are candidates
    R = _rotation_matrix(quat.rotation_to_i(V[0]))
    return V @ R.T


ICOSPHERE = _icosphere(2)


def pole_select(gamma: PPath, n_samples=256, margin=POLE_MARGIN):
    """Candidate pole farthest (great-circle distance) from sampled points of ``γ``.

    Raises:
        PoleSelectionFailed: the best candidate is closer than ``margin``.
    """
    if n_samples < 64:
        raise ValueError("n_samples must be >= 64")
    _, pts = gamma.sample(n_samples)
    pts = np.vstack([pts, gamma.point(gamma.t0), gamma.end_point()])
    pts = pts / np.linalg.norm(pts, axis=1, keepdims=True)
    cosines = np.clip(ICOSPHERE @ pts.T, -1.0, 1.0)
    dist = np.arccos(np.max(cosines, axis=1))
    best = int(np.argmax(dist))
    if dist[best] < margin:
        raise PoleSelectionFailed(f"best pole distance {dist[best]:.3e} < {margin:g}")
    return ICOSPHERE[best].copy()


class _LiftPiece:
    """Evaluator ``t -> (Γ, Γ̇)`` of a lifted subinterval in original coordinates."""

    def __init__(self, piece_rot, g23, q):
        self.piece_rot, self.g23, self.q = piece_rot, g23, q

    def __call__(self, t):
        g, gd = self.piece_rot(float(t))
        y = self.g23(t)
        G = quat.qmul(reconstruct(g, y), self.q)
        dG = quat.qmul(lift_derivative(g, gd, y), self.q)
        return G, dG


def lift_ppath(gamma: PPath, start, n_pole_samples=256, config=None):
    """Horizontal lift of a ``𝒫``-path in ``S²`` starting at ``start``.

    The path is rotated by ``q`` (with ``q ξ q̄ = i`` for a pole ``ξ`` outside
    its image), lifted piece by piece and rotated back as ``Γ = Γ* q``.  For
    closed paths the holonomy ``g = Γ(t_N) Γ̄(t_0)`` is returned as a complex
    number.
    """
    start = np.asarray(start, dtype=float)
    quat._check_unit(start, "start")
    if np.linalg.norm(quat.ks_map(start) - gamma.point(gamma.t0)) > 1e-8:
        raise ValueError("start is not over γ(t0)")
    pole = pole_select(gamma, n_pole_samples)
    q = quat.rotation_to_i(pole)
    rot = gamma.rotated(q)
    Gs = quat.qmul(start, quat.qconj(q))
    y = Gs[2:4]
    pieces = []
    for i, piece in enumerate(rot.pieces):
        a, b = rot.partition[i], rot.partition[i + 1]
        if i:
            # project back onto the fiber over the one-sided limit point
            ga = _call_piece(piece, a)[0]
            y = y * np.sqrt(0.5 * (1.0 - ga[0]) / (y @ y))
        g23, _ = lift_interval(piece, a, b, y, config)
        y = g23(b)
        pieces.append(_LiftPiece(piece, g23, q))
    lift = PPath(gamma.partition, pieces, sphere_dim=3)
    holonomy, defect = None, 0.0
    if gamma.is_closed():
        end = quat.qmul(reconstruct(rot.end_point(), y), q)
        g = quat.qmul(end, quat.qconj(start))
        holonomy = complex(g[0], g[1])
        defect = float(np.hypot(g[2], g[3]))
    return LiftResult(lift=lift, holonomy=holonomy, pole=pole, rotation=q, holonomy_defect=defect)


def lift_residuals(gamma: PPath, result: LiftResult, n=1000):
    """Max fiber, horizontality and norm residuals at ``n`` interior sample times."""
    t = gamma.t0 + (np.arange(n) + 0.5) * (gamma.t1 - gamma.t0) / n
    fib = hor = nrm = 0.0
    for ti in t:
        G, dG = result.lift.evaluate(ti)
        fib = max(fib, float(np.linalg.norm(quat.ks_map(G) - gamma.point(ti))))
        hor = max(hor, abs(float(quat.qmul(quat.qmul(quat.qconj(G), quat.I), dG)[0])))
        nrm = max(nrm, abs(float(np.linalg.norm(G)) - 1.0))
    return {"fiber": fib, "horizontality": hor, "norm": nrm}


def polygon_holonomy(points):
    """Holonomy of a closed geodesic polygon through unit vectors ``points``.

    Independent of the planar system: each geodesic edge of angle ``α``
    about the unit normal ``n`` multiplies the lift on the right by
    ``exp(-α n / 2)``.
    """
    P = np.asarray(points, dtype=float)
    ax = np.cross(P[:-1], P[1:])
    s = np.linalg.norm(ax, axis=1)
    alpha = np.arctan2(s, np.sum(P[:-1] * P[1:], axis=1))
    n = np.divide(ax, s[:, None], out=np.zeros_like(ax), where=s[:, None] > 0)
    steps = np.column_stack([np.cos(0.5 * alpha), -np.sin(0.5 * alpha)[:, None] * n])
    # ordered product by pairwise reduction
    while len(steps) > 1:
        if len(steps) % 2:
            steps = np.vstack([steps, quat.ONE])
        steps = quat.qmul(steps[0::2], steps[1::2])
    G0 = quat.fiber_point(P[0])
    Gam = quat.qmul(G0, steps[0])
    g = quat.qmul(Gam, quat.qconj(G0))
    return complex(g[0], g[1])


def circle_path(axis, colatitude, period=2.0 * np.pi, turns=1):
    """Closed circle of constant colatitude around ``axis`` with analytic velocity."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    sc, cc = np.sin(colatitude), np.cos(colatitude)
    w = 2.0 * np.pi * turns / period

    def ev(t):
        c, s = np.cos(w * t), np.sin(w * t)
        return cc * axis + sc * (c * e1 + s * e2), sc * w * (-s * e1 + c * e2)

    return PPath([0.0, period], [ev])
