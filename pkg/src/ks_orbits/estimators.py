"""scikit-learn style wrappers around the lift, fit and orbit search routines.

Each estimator keeps its constructor arguments untouched (so ``get_params``
and ``clone`` work) and stores learned state in trailing-underscore
attributes.
"""

import numbers

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import kepler, pathlift, porbit, quat, rtbp
from .errors import TargetNotReached
from ._validation import check_scalar_range, check_times, check_unit_rows, check_vectors


class HopfLift(TransformerMixin, BaseEstimator):
    """Horizontal lift of a sampled closed or open path on the 2-sphere.

    ``fit(X)`` takes rows ``(t, γ₁, γ₂, γ₃, γ̇₁, γ̇₂, γ̇₃)``; the path is
    rebuilt piecewise by cubic Hermite interpolation on ``partition`` (the
    full sample span by default).  ``transform(t)`` returns ``Γ(t)`` as rows
    of 4 quaternion components.

    Attributes:
        path_: the interpolated PPath.
        lift_: LiftResult of the lift.
        holonomy_: complex holonomy (``None`` for open paths).
    """

    def __init__(self, partition=None, fiber_phase=0.0, n_pole_samples=256):
        self.partition = partition
        self.fiber_phase = fiber_phase
        self.n_pole_samples = n_pole_samples

    def fit(self, X, y=None):
        X = check_vectors(X, 7)
        check_scalar_range(self.n_pole_samples, "n_pole_samples", 64, kind=numbers.Integral)
        t = check_times(X[:, 0])
        pts = check_unit_rows(X[:, 1:4], name="gamma")
        self.path_ = pathlift.PPath.from_samples(t, pts, X[:, 4:7], self.partition)
        start = quat.fiber_point(self.path_.point(self.path_.t0), self.fiber_phase)
        self.lift_ = pathlift.lift_ppath(self.path_, start, self.n_pole_samples)
        self.holonomy_ = self.lift_.holonomy
        self.pole_ = self.lift_.pole
        return self

    def transform(self, X):
        check_is_fitted(self, "lift_")
        t = np.asarray(X, dtype=float).ravel()
        if np.any((t < self.path_.t0) | (t > self.path_.t1)):
            raise ValueError("times outside the fitted path")
        return np.array([self.lift_.lift.evaluate(ti)[0] for ti in t])

    def holonomy_angle(self):
        check_is_fitted(self, "lift_")
        return None if self.holonomy_ is None else float(np.angle(self.holonomy_))


class CollisionAsymptoteFit(RegressorMixin, BaseEstimator):
    """Leading-order collision law ``u ≈ a |t - t0|^{2/3}`` from one side.

    ``fit(X, y)``: ``X`` holds times, ``y`` rows ``(u, v)`` (6 columns).
    ``t0`` may be given; otherwise it is estimated.  ``predict`` evaluates
    the fitted leading term.
    """

    def __init__(self, t0=None):
        self.t0 = t0

    def fit(self, X, y):
        t = np.asarray(X, dtype=float).ravel()
        y = check_vectors(y, 6, "y")
        if len(t) != len(y):
            raise ValueError("X and y lengths differ")
        samples = [kepler.PhysState(row[:3], row[3:], ti) for ti, row in zip(t, y)]
        fit = kepler.fit_collision_asymptote(samples, t0=self.t0)
        self.t0_ = fit.t0
        self.a_ = fit.a
        self.side_ = fit.side
        self.energy_limit_ = fit.energy_limit
        self.direction_ = fit.direction
        self.rel_remainder_ = fit.rel_remainder
        return self

    def predict(self, X):
        check_is_fitted(self, "a_")
        t = np.asarray(X, dtype=float).ravel()
        return np.abs(t - self.t0_)[:, None] ** (2.0 / 3.0) * self.a_

    def score(self, X, y, sample_weight=None):
        """R² of the position columns only."""
        y = check_vectors(y, 6, "y")
        return super().score(X, y[:, :3], sample_weight)


class PeriodicOrbitFinder(BaseEstimator):
    """Search for generalized periodic orbits of the restricted problem.

    ``fit()`` builds the primaries family and perturbation from the
    parameters and runs the seed/solve/dedup pipeline.  ``predict(t)``
    returns positions ``u(t)`` of the orbit selected by ``orbit_index``.

    Attributes:
        records_: list of OrbitRecord.
        stats_: per-k search statistics.
        failures_: seeds that did not converge.
    """

    def __init__(self, e0=0.0, T0=2.0 * np.pi, eps=1e-3, eps_star=1e-2, k_list=(9, 10, 11),
                 l_target=3, n_orient=1, n_phase=1, planar_only=True, workers=1, orbit_index=0):
        self.e0 = e0
        self.T0 = T0
        self.eps = eps
        self.eps_star = eps_star
        self.k_list = k_list
        self.l_target = l_target
        self.n_orient = n_orient
        self.n_phase = n_phase
        self.planar_only = planar_only
        self.workers = workers
        self.orbit_index = orbit_index

    def fit(self, X=None, y=None):
        check_scalar_range(self.e0, "e0", 0.0, 1.0, include_high=False)
        check_scalar_range(self.eps, "eps", 0.0, self.eps_star, include_low=False)
        self.family_ = rtbp.PrimariesFamily(e0=self.e0, T0=self.T0)
        self.perturbation_ = rtbp.build_perturbation(self.family_, self.eps_star)
        try:
            report = porbit.find_orbits(self.perturbation_, self.eps, list(self.k_list),
                                        self.l_target, self.n_orient, self.n_phase,
                                        self.planar_only, workers=self.workers)
        except TargetNotReached as exc:
            report = exc.records
        self.records_ = report.records
        self.stats_ = report.stats
        self.failures_ = report.failures
        self.target_reached_ = report.target_reached
        return self

    def predict(self, X):
        check_is_fitted(self, "records_")
        rec = self.records_[self.orbit_index]
        traj = porbit.orbit_trajectory(rec, self.perturbation_)
        _, s_at = porbit._state_at_factory(traj, rec.S, rec.period, rec.X0.t)
        t = np.asarray(X, dtype=float).ravel()
        return np.array([quat.ks_map(traj(s_at(ti))[0:4]) for ti in t])
