"""Quaternion algebra on plain numpy arrays.

A quaternion is an array whose last axis has length 4 and holds
``(re, i, j, k)``.  Purely imaginary quaternions are stored as 3-vectors
``(i, j, k)``, which is also how physical positions are represented, so
``ks_map`` and ``hopf`` return 3-vectors.  Every function broadcasts over
leading axes.
"""

import dataclasses

import numpy as np

from .errors import NotUnit

UNIT_TOL = 1e-12

ONE = np.array([1.0, 0.0, 0.0, 0.0])
I = np.array([0.0, 1.0, 0.0, 0.0])
J = np.array([0.0, 0.0, 1.0, 0.0])
K = np.array([0.0, 0.0, 0.0, 1.0])


def qmul(a, b):
    """Hamilton product ``a b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a0, a1, a2, a3 = np.moveaxis(a, -1, 0)
    b0, b1, b2, b3 = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ],
        axis=-1,
    )


def qconj(a):
    a = np.asarray(a, dtype=float)
    return a * np.array([1.0, -1.0, -1.0, -1.0])


def qnorm(a):
    return np.linalg.norm(np.asarray(a, dtype=float), axis=-1)


def qinv(a):
    a = np.asarray(a, dtype=float)
    return qconj(a) / np.sum(a * a, axis=-1, keepdims=True)


def pure(v):
    """Embed 3-vectors as purely imaginary quaternions."""
    v = np.asarray(v, dtype=float)
    return np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1)


def quat(re=0.0, i=0.0, j=0.0, k=0.0):
    return np.array([re, i, j, k], dtype=float)


def from_axis_angle(axis, angle):
    """Unit quaternion rotating ``ImH`` by ``angle`` about ``axis`` (via ``q v q̄``)."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return ONE.copy()
    half = 0.5 * angle
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def _check_unit(q, name="quaternion"):
    err = np.max(np.abs(qnorm(q) - 1.0))
    if err > UNIT_TOL:
        raise NotUnit(f"{name} is not unit (| |q| - 1 | = {err:.3e})")


def ks_map(z):
    """The quadratic map ``z -> z̄ i z`` onto the imaginary quaternions.

    Returns the three imaginary components; the real part vanishes
    identically, so it is not stored.
    """
    z = np.asarray(z, dtype=float)
    z0, z1, z2, z3 = np.moveaxis(z, -1, 0)
    return np.stack(
        [
            z0 * z0 + z1 * z1 - z2 * z2 - z3 * z3,
            2.0 * (z1 * z2 - z0 * z3),
            2.0 * (z1 * z3 + z0 * z2),
        ],
        axis=-1,
    )


def hopf(z):
    """Hopf projection S³ -> S²; raises NotUnit off the unit sphere."""
    _check_unit(z, "z")
    return ks_map(z)


def circle_act(theta, X):
    """S¹ action ``(z, w, t, τ) -> (g z, g w, t, τ)`` with ``g = cos θ + i sin θ``.

    ``X`` is any dataclass exposing quaternion fields ``z`` and ``w``
    (normally :class:`ks_orbits.ksreg.KSState`).
    """
    g = np.array([np.cos(theta), np.sin(theta), 0.0, 0.0])
    return dataclasses.replace(X, z=qmul(g, X.z), w=qmul(g, X.w))


def rotate_im(q, v):
    """Rotate an imaginary 3-vector: ``q v q̄``."""
    q = np.asarray(q, dtype=float)
    _check_unit(q, "q")
    return qmul(qmul(q, pure(v)), qconj(q))[..., 1:]


def rotation_to_i(xi):
    """Unit quaternion ``q`` with ``q ξ q̄ = i`` (shortest-arc rotation)."""
    xi = np.asarray(xi, dtype=float)
    _check_unit(xi, "xi")
    e1 = np.array([1.0, 0.0, 0.0])
    axis = np.cross(xi, e1)
    # atan2 keeps full precision near i, where arccos loses half the digits
    angle = np.arctan2(np.linalg.norm(axis), xi @ e1)
    if angle < 1e-8:
        return ONE.copy()
    if np.linalg.norm(axis) < 1e-8:
        # antipode of i: the cross product degenerates, rotate about j
        return from_axis_angle([0.0, 1.0, 0.0], np.pi)
    return from_axis_angle(axis, angle)


def fiber_point(gamma, phase=0.0):
    """A point of ``hopf⁻¹(γ)``, rotated along the fiber by ``phase``.

    The section used is ``z = conj(q)`` where ``q`` is the shortest-arc
    rotation taking ``i`` to ``γ``; for ``γ₁ < -0.5`` the rotation is taken
    relative to ``-i`` instead (base point ``j``), which keeps the section
    away from its singularity.
    """
    gamma = np.asarray(gamma, dtype=float)
    gamma = gamma / np.linalg.norm(gamma)
    if gamma[0] >= -0.5:
        q = _shortest_arc(np.array([1.0, 0.0, 0.0]), gamma)
        z = qconj(q)
    else:
        q = _shortest_arc(np.array([-1.0, 0.0, 0.0]), gamma)
        z = qmul(J, qconj(q))
    g = np.array([np.cos(phase), np.sin(phase), 0.0, 0.0])
    return qmul(g, z)


def _shortest_arc(a, b):
    q = np.concatenate([[1.0 + a @ b], np.cross(a, b)])
    return q / np.linalg.norm(q)


def s1_angle(g):
    """Angle of a unit quaternion lying in span{1, i}."""
    g = np.asarray(g, dtype=float)
    return float(np.arctan2(g[1], g[0]))
