"""Twisted-periodic orbits of the regularized flow by multiple-copy shooting.

A solution is a KS state ``X₀`` with ``K_ε(X₀) = 0``, vanishing bilinear
moment and ``Φ_S(X₀) = g X₀`` for some ``S > 0`` and ``g = e^{iθ}``, with the
lifted time advancing by exactly one period ``T``.  Unknowns ``(X₀, S, θ)``
are found by Levenberg-Marquardt from Kepler seeds of the unperturbed
problem, with an ε-continuation ladder as fallback.  For eccentric primaries
the seeds carry the forced eccentricity of the averaged perturbation.
"""

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import PchipInterpolator
from scipy.optimize import root
from scipy.stats import qmc

from . import ksreg, quat
from .errors import (DomainExit, NoConvergence, OutsideDomain, SeedOutsideDomain,
                     StepSizeUnderflow, TargetNotReached)
from .kepler import PhysState, check_generalized

RESIDUAL_TOL = 1e-9
LM_TARGET = 1e-11
MAX_ITER = 100
LADDER_STEPS = 8
FD_STEP = 1e-7
STALL_WINDOW = 12
DEDUP_TOL = 1e-6
COLLISION_RADIUS = 1e-4


@dataclass
class ShootingProblem:
    """Residual map for one perturbation, ε and winding number ``k``.

    ``rel_tol``/``abs_tol`` are the integrator tolerances used along the
    shooting arc.
    """

    pert: object
    eps: float
    k: int
    period: Optional[float] = None
    rel_tol: float = 1e-12
    abs_tol: float = 1e-13
    seed: Optional[ksreg.SeedOrbit] = None

    def __post_init__(self):
        if self.period is None:
            self.period = float(self.pert.period)

    def set_seed(self, seed):
        self.seed = seed
        X = seed.state(0.0).as_array()
        f = ksreg.ks_rhs(X)
        gen = _generator(X)
        self.x_seed = X
        self.flow_dir = f / np.linalg.norm(f)
        self.s1_gen = gen / np.linalg.norm(gen)

    def _pert_or_none(self):
        return self.pert if self.eps else None

    def flow(self, Y0, S):
        """Propagate a batch of flat states ``(n, 10)`` over ``[0, S]`` in lockstep."""
        Y0 = np.atleast_2d(np.asarray(Y0, dtype=float))
        n = len(Y0)
        pert, eps = self.pert, self.eps

        def rhs(s, y):
            return ksreg.ks_rhs(y.reshape(n, 10), pert, eps).ravel()

        try:
            res = solve_ivp(rhs, (0.0, S), Y0.ravel(), method="DOP853",
                            rtol=self.rel_tol, atol=self.abs_tol)
        except OutsideDomain as exc:
            raise DomainExit(str(exc)) from exc
        if res.status != 0:
            raise StepSizeUnderflow(res.message)
        return res.y[:, -1].reshape(n, 10)

    def _assemble(self, X0, Y, theta):
        """Residual rows from initial states ``X0`` and final states ``Y`` (batched)."""
        Yu = _rotate(Y, -theta)
        r = np.empty(X0.shape[:-1] + (14,))
        r[..., 0:8] = Yu[..., 0:8] - X0[..., 0:8]
        r[..., 8] = Yu[..., 9] - X0[..., 9]
        r[..., 9] = Yu[..., 8] - X0[..., 8] - self.period
        r[..., 10] = ksreg.hamiltonian_array(X0, self._pert_or_none(), self.eps)
        r[..., 11] = ksreg.bl_moment_array(X0)
        dX = X0 - self.x_seed
        r[..., 12] = dX @ self.flow_dir
        r[..., 13] = dX @ self.s1_gen
        return r

    def residual(self, x):
        """14-vector residual at unknowns ``x = (X₀, S, θ)``."""
        x = np.asarray(x, dtype=float)
        X0, S, theta = x[:10], x[10], x[11]
        Y = self.flow(X0, S)[0]
        return self._assemble(X0, Y, theta)

    def residual_and_jacobian(self, x):
        """Residual with a forward-difference Jacobian for ``X₀`` and exact ``S``, ``θ`` columns."""
        x = np.asarray(x, dtype=float)
        X0, S, theta = x[:10], x[10], x[11]
        h = FD_STEP * np.maximum(1.0, np.abs(X0))
        batch = np.vstack([X0, X0 + np.diag(h)])
        Y = self.flow(batch, S)
        R = self._assemble(batch, Y, theta)
        r = R[0]
        J = np.empty((14, 12))
        J[:, :10] = ((R[1:] - r) / h[:, None]).T
        # d/dS: vector field at the end point, untwisted
        F = _rotate(ksreg.ks_rhs(Y[0], self.pert, self.eps), -theta)
        J[:, 10] = 0.0
        J[0:8, 10] = F[0:8]
        J[8, 10] = F[9]
        J[9, 10] = F[8]
        # d/dθ of circle_act(-θ, Y)
        G = -_generator(_rotate(Y[0], -theta))
        J[:, 11] = 0.0
        J[0:8, 11] = G[0:8]
        return r, J


def _rotate(Y, theta):
    """S¹ action on flat states (broadcasts over leading axes)."""
    Y = np.asarray(Y, dtype=float)
    g = np.array([np.cos(theta), np.sin(theta), 0.0, 0.0])
    out = Y.copy()
    out[..., 0:4] = quat.qmul(g, Y[..., 0:4])
    out[..., 4:8] = quat.qmul(g, Y[..., 4:8])
    return out


def _generator(X):
    """Infinitesimal generator ``(i z, i w, 0, 0)`` of the S¹ action."""
    out = np.zeros_like(X)
    out[..., 0:4] = ksreg._times_i(X[..., 0:4])
    out[..., 4:8] = ksreg._times_i(X[..., 4:8])
    return out


def _safe_residual(problem, x):
    try:
        return problem.residual(x)
    except (DomainExit, StepSizeUnderflow):
        return np.full(14, np.inf)


def levenberg_marquardt(problem: ShootingProblem, x0, max_iter=MAX_ITER, target=LM_TARGET):
    """Levenberg-Marquardt with geodesic acceleration on the 14 residual rows.

    The second-order correction ``a`` (from a directional second difference
    of the residual along the step) lets the iteration follow the curved
    valley of nearly-periodic unperturbed orbits; steps with
    ``2|a|/|δ| > 0.75`` are rejected.  Trial points leaving the domain count
    as failed steps.

    Returns:
        ``(x, |r|, iterations)`` of the best point found.
    """
    x = np.asarray(x0, dtype=float).copy()
    r, J = problem.residual_and_jacobian(x)
    norm = float(np.linalg.norm(r))
    mu = 1e-6
    it = 0
    scale = np.ones(12)
    zeros = np.zeros(12)
    trace = [norm]
    while it < max_iter and norm > target:
        it += 1
        trace.append(norm)
        # a seed in the wrong basin creeps along the valley: give up early
        if it > STALL_WINDOW and norm > 0.5 * trace[-STALL_WINDOW]:
            break
        scale = np.maximum(scale, np.linalg.norm(J, axis=0))
        A = np.vstack([J, np.sqrt(mu) * np.diag(scale)])
        dx = np.linalg.lstsq(A, np.concatenate([-r, zeros]), rcond=None)[0]
        # directional second derivative along dx
        h = 0.1
        r_h = _safe_residual(problem, x + h * dx)
        step = dx
        if np.all(np.isfinite(r_h)):
            rvv = (2.0 / h) * ((r_h - r) / h - J @ dx)
            acc = -np.linalg.lstsq(A, np.concatenate([rvv, zeros]), rcond=None)[0]
            if 2.0 * np.linalg.norm(scale * acc) > 0.75 * np.linalg.norm(scale * dx):
                mu *= 10.0
                if mu > 1e8:
                    break
                continue
            step = dx + 0.5 * acc
        n_try = float(np.linalg.norm(_safe_residual(problem, x + step)))
        if n_try < norm:
            x = x + step
            mu = max(mu / 10.0, 1e-15)
            if n_try <= target:
                norm = n_try
                break
            r, J = problem.residual_and_jacobian(x)
            norm = float(np.linalg.norm(r))
        else:
            mu *= 10.0
            if mu > 1e8:
                break
    return x, norm, it


def initial_unknowns(seed: ksreg.SeedOrbit):
    return np.concatenate([seed.state(0.0).as_array(), [seed.shooting_span, 0.0]])


def solve(problem: ShootingProblem, seed: ksreg.SeedOrbit, max_iter=MAX_ITER):
    """Shoot for a twisted-periodic orbit near ``seed``.

    Tries a direct solve at the target ε first; if that stalls, walks the
    ladder ``ε/256, ε/128, …, ε`` warm-starting each rung.

    Raises:
        SeedOutsideDomain: the seed circle is not inside the perturbation's ball.
        NoConvergence: a rung failed to reach the residual tolerance.
    """
    if not ksreg.seed_in_domain(seed.k, problem.period, problem.pert.domain_radius):
        raise SeedOutsideDomain(f"k={seed.k}: seed radius {seed.radius:.4g} outside the domain")
    if seed.apocentre >= problem.pert.domain_radius:
        raise SeedOutsideDomain(f"k={seed.k}: seed apocentre {seed.apocentre:.4g} outside the domain")
    problem.set_seed(seed)
    eps_target = problem.eps
    x0 = initial_unknowns(seed)
    history = []
    if eps_target == 0.0:
        norm = float(np.linalg.norm(problem.residual(x0)))
        return _finish(problem, seed, x0, norm, eps_target, [(0.0, norm, 0)])
    try:
        x, norm, it = levenberg_marquardt(problem, x0, max_iter)
        history.append((eps_target, norm, it))
        if norm < RESIDUAL_TOL:
            return _finish(problem, seed, x, norm, eps_target, history)
    except (DomainExit, StepSizeUnderflow):
        pass
    x = x0
    achieved = None
    for j in range(LADDER_STEPS, -1, -1):
        eps = eps_target / 2.0**j
        problem.eps = eps
        try:
            x_new, norm, it = levenberg_marquardt(problem, x, max_iter)
        except (DomainExit, StepSizeUnderflow) as exc:
            norm, it, x_new = np.inf, 0, x
            history.append((eps, norm, it))
            problem.eps = eps_target
            raise NoConvergence(f"k={seed.k}: {exc} at eps={eps:.3g}",
                                best=(achieved, history)) from exc
        history.append((eps, norm, it))
        if norm >= RESIDUAL_TOL:
            problem.eps = eps_target
            raise NoConvergence(f"k={seed.k}: residual {norm:.3e} at eps={eps:.3g}",
                                best=(achieved, history))
        x = x_new
        achieved = _finish(problem, seed, x, norm, eps, list(history))
    problem.eps = eps_target
    return achieved


@dataclass
class OrbitRecord:
    k: int
    eps: float
    period: float
    S: float
    theta: float
    X0: ksreg.KSState
    residual_norm: float
    drift_K: float
    drift_moment: float
    collision_count: int
    collision_times: list
    physical_samples: list
    eta: int
    provenance: dict = field(default_factory=dict)

    def sample_arrays(self):
        arr = np.array([[p[0], *p[1], *p[2]] for p in self.physical_samples], dtype=float)
        return arr[:, 0], arr[:, 1:4], arr[:, 4:7]

    def to_json(self):
        def num(v):
            return format(float(v), ".17g")

        doc = {
            "k": self.k,
            "eps": num(self.eps),
            "period": num(self.period),
            "S": num(self.S),
            "theta": num(self.theta),
            "X0": [num(v) for v in self.X0.as_array()],
            "residual_norm": num(self.residual_norm),
            "drift_K": num(self.drift_K),
            "drift_moment": num(self.drift_moment),
            "collision_count": self.collision_count,
            "collision_times": [num(v) for v in self.collision_times],
            "physical_samples": [[num(p[0]), [num(c) for c in p[1]], [num(c) for c in p[2]]]
                                 for p in self.physical_samples],
            "eta": self.eta,
            "provenance": self.provenance,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(
            k=int(d["k"]), eps=float(d["eps"]), period=float(d["period"]), S=float(d["S"]),
            theta=float(d["theta"]), X0=ksreg.KSState.from_array([float(v) for v in d["X0"]]),
            residual_norm=float(d["residual_norm"]), drift_K=float(d["drift_K"]),
            drift_moment=float(d["drift_moment"]), collision_count=int(d["collision_count"]),
            collision_times=[float(v) for v in d["collision_times"]],
            physical_samples=[(float(p[0]), np.array(p[1], dtype=float), np.array(p[2], dtype=float))
                              for p in d["physical_samples"]],
            eta=int(d["eta"]), provenance=d.get("provenance", {}),
        )


def write_db(path, records):
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def read_db(path):
    with open(path) as fh:
        return [OrbitRecord.from_json(line) for line in fh if line.strip()]


def orbit_trajectory(record: OrbitRecord, pert, turns=1, rel_tol=1e-12, abs_tol=1e-13):
    """Dense KS trajectory of a record over ``turns`` twisted periods."""
    config = ksreg.IntegratorConfig(rel_tol=rel_tol, abs_tol=abs_tol)
    return ksreg.propagate_ks(record.X0, (0.0, turns * record.S),
                              pert if record.eps else None, record.eps, config)


def _collision_times(traj, S, n=4000):
    """Times of local minima of ``|z|`` below the collision radius, refined by bisection."""
    s = np.linspace(0.0, S, n + 1)
    Y = traj(s)
    r = np.linalg.norm(Y[:, 0:4], axis=1)
    dot = np.sum(Y[:, 0:4] * Y[:, 4:8], axis=1)
    out = []
    for j in np.nonzero((dot[:-1] < 0) & (dot[1:] >= 0))[0]:
        lo, hi = s[j], s[j + 1]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            y = traj(mid)
            if y[0:4] @ y[4:8] < 0:
                lo = mid
            else:
                hi = mid
        y = traj(0.5 * (lo + hi))
        if np.linalg.norm(y[0:4]) < COLLISION_RADIUS * max(1.0, r.max()):
            out.append(float(y[8]))
    return out


def _state_at_factory(traj, S, period, t0):
    """Physical state at time ``t`` (any real) via the twisted periodicity."""
    s_grid = np.linspace(0.0, S, 4001)
    t_grid = traj(s_grid)[:, 8]
    s_of_t = PchipInterpolator(t_grid, s_grid)

    def s_at(t):
        shift = np.floor((t - t0) / period)
        tt = t - shift * period
        s = float(s_of_t(tt))
        for _ in range(4):
            y = traj(s)
            r2 = y[0:4] @ y[0:4]
            if r2 == 0.0:
                break
            s -= (y[8] - tt) / r2
        return s

    def state_at(t):
        y = traj(s_at(t))
        X = ksreg.KSState.from_array(y)
        st = ksreg.ks_to_phys(X)
        shift = np.floor((t - t0) / period)
        return PhysState(st.u, st.v, t if shift else st.t)

    return state_at, s_at


def _finish(problem: ShootingProblem, seed, x, norm, eps, history):
    """Reconstruct the physical orbit, check it and package a record."""
    X0 = ksreg.KSState.from_array(x[:10])
    S, theta = float(x[10]), float(np.angle(np.exp(1j * x[11])))
    pert = problem.pert if eps else None
    config = ksreg.IntegratorConfig(rel_tol=problem.rel_tol, abs_tol=problem.abs_tol)
    traj = ksreg.propagate_ks(X0, (0.0, S), pert, eps, config)
    K = ksreg.hamiltonian_array(traj.y, pert, eps)
    BL = ksreg.bl_moment_array(traj.y)
    T = problem.period
    t0 = float(x[8])
    t_adv = traj.y_final[8] - t0
    eta = int(round(t_adv / T))
    coll = _collision_times(traj, S)
    if coll:
        state_at, _ = _state_at_factory(traj, S, T, t0)
        chk = check_generalized(state_at, T, coll)
        gen_ok = {"direction_jump": chk.direction_jump, "energy_jump": chk.energy_jump}
    else:
        gen_ok = {"direction_jump": 0.0, "energy_jump": 0.0}
    s_samp = np.linspace(0.0, S, 401)
    Y = traj(s_samp)
    samples = []
    for si, yi in zip(s_samp, Y):
        if np.linalg.norm(yi[0:4]) <= ksreg.COLLISION_RADIUS:
            continue
        st = ksreg.ks_to_phys(ksreg.KSState.from_array(yi))
        samples.append((float(st.t), st.u, st.v))
    prov = {
        "orientation": [float(c) for c in seed.orientation],
        "t0": float(seed.t0),
        "history": [[float(e), float(n), int(i)] for e, n, i in history],
        **{k: float(v) for k, v in gen_ok.items()},
    }
    return OrbitRecord(k=seed.k, eps=float(eps), period=T, S=S, theta=theta, X0=X0,
                       residual_norm=float(norm), drift_K=float(np.max(np.abs(K - K[0]))),
                       drift_moment=float(np.max(np.abs(BL - BL[0]))),
                       collision_count=len(coll), collision_times=coll, physical_samples=samples,
                       eta=eta, provenance=prov)


def forced_eccentricity(pert, k, eps, period=None, n_s=48, n_m=64):
    """Eccentricity vector at which the averaged perturbation is stationary.

    The perturbation ``U`` is averaged over one period of the primaries and
    over the mean anomaly of a planar Kepler ellipse with the semi-major
    axis of the ``k`` seed.  Its critical point in the ``(e_x, e_y)`` plane
    is where periodic orbits of the full problem bifurcate from the
    degenerate Kepler family; it is ``0`` for circular primaries and
    ``O(1)`` in ``ε`` otherwise.
    """
    period = float(pert.period if period is None else period)
    a = 1.0 / (2.0 * ksreg.tau_k(k, period))
    s = period * (np.arange(n_s) + 0.5) / n_s
    M = 2.0 * np.pi * (np.arange(n_m) + 0.5) / n_m
    S = np.repeat(s, n_m)
    from .rtbp import kepler_eq_solve

    def mean_u(ev):
        e = np.hypot(*ev)
        if e >= 0.9:
            return np.nan
        w = np.arctan2(ev[1], ev[0])
        E = kepler_eq_solve(M, e)
        x, y = a * (np.cos(E) - e), a * np.sqrt(1.0 - e * e) * np.sin(E)
        u = np.stack([x * np.cos(w) - y * np.sin(w), x * np.sin(w) + y * np.cos(w), 0.0 * x], -1)
        return float(np.mean(pert.U(S, np.tile(u, (n_s, 1)), eps)))

    def grad(ev, h=1e-5):
        ev = np.asarray(ev, dtype=float)
        return [(mean_u(ev + h * d) - mean_u(ev - h * d)) / (2.0 * h) for d in np.eye(2)]

    for start in ([0.01, 0.0], [-0.1, 0.0], [0.1, 0.0], [0.0, 0.1], [0.0, -0.1]):
        sol = root(grad, start)
        if sol.success and np.all(np.isfinite(sol.x)):
            return np.where(np.abs(sol.x) < 1e-6, 0.0, sol.x)
    return np.zeros(2)


def seed_grid(k, n_orient=1, n_phase=1, planar_only=False, period=1.0, rng_seed=0,
              ecc_vec=(0.0, 0.0)):
    """Kepler seeds over orientations and time phases.

    Orientations are a scrambled Sobol set mapped to unit quaternions
    (uniform on SO(3)); phases ``t₀`` are uniform in ``[0, T/k)``.  A nonzero
    ``ecc_vec`` makes every seed an ellipse with pericentre along
    ``(e_x, e_y, 0)`` before the orientation is applied.
    """
    if n_orient < 1 or n_phase < 1:
        raise ValueError("n_orient and n_phase must be >= 1")
    ecc = float(np.hypot(*ecc_vec))
    q_ecc = quat.from_axis_angle([0.0, 0.0, 1.0], np.arctan2(ecc_vec[1], ecc_vec[0]))
    orients = [quat.ONE.copy()]
    if not planar_only and n_orient > 1:
        pts = qmc.Sobol(d=3, scramble=True, seed=rng_seed).random(n_orient - 1)
        orients += [_uniform_quat(p) for p in pts]
    seeds = []
    for q in orients:
        for j in range(n_phase):
            seeds.append(ksreg.make_seed(k, period, quat.qmul(q, q_ecc),
                                         t0=j * period / (k * n_phase), ecc=ecc))
    return seeds


def _uniform_quat(p):
    """Shoemake's map from the unit cube to uniformly distributed unit quaternions."""
    u1, u2, u3 = p
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    return np.array([a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2),
                     b * np.sin(2 * np.pi * u3), b * np.cos(2 * np.pi * u3)])


def physical_signature(record: OrbitRecord, pert, n_t=512):
    """``u`` on a uniform grid of ``t`` mod ``T``; invariant under gauge and shifts."""
    traj = orbit_trajectory(record, pert)
    T = record.period
    t0 = record.X0.t
    _, s_at = _state_at_factory(traj, record.S, T, t0)
    t = np.arange(n_t) * T / n_t
    out = np.empty((n_t, 3))
    for j, tj in enumerate(t):
        y = traj(s_at(tj))
        out[j] = quat.ks_map(y[0:4])
    return out


def same_orbit(a: OrbitRecord, b: OrbitRecord, pert, tol=DEDUP_TOL, cache=None):
    if a.k != b.k or abs(a.period - b.period) > 0 or abs(a.eps - b.eps) > 0:
        return False
    cache = {} if cache is None else cache
    sa = cache.setdefault(id(a), physical_signature(a, pert))
    sb = cache.setdefault(id(b), physical_signature(b, pert))
    return float(np.max(np.abs(sa - sb))) < tol


def dedup(records, pert, tol=DEDUP_TOL):
    """Distinct orbits, keeping the lowest-residual representative of each class."""
    cache = {}
    kept = []
    for rec in sorted(records, key=lambda r: r.residual_norm):
        if not any(same_orbit(rec, other, pert, tol, cache) for other in kept):
            kept.append(rec)
    return kept


def _solve_task(args):
    pert, eps, k, period, seed, idx, tols = args
    problem = ShootingProblem(pert, eps, k, period, *tols)
    try:
        return idx, solve(problem, seed), None
    except (NoConvergence, SeedOutsideDomain, DomainExit, StepSizeUnderflow) as exc:
        return idx, None, f"{type(exc).__name__}: {exc}"


def worker_count():
    env = os.environ.get("KS_ORBITS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass
class FindReport:
    records: list
    stats: dict
    failures: list
    target_reached: bool


def find_orbits(pert, eps, k_list, l_target, n_orient=1, n_phase=1, planar_only=True,
                period=None, workers=None, secular_seeds=True, rel_tol=1e-12, abs_tol=1e-13):
    """Solve every seed of every admissible ``k`` until ``l_target`` distinct orbits exist.

    ``k`` values below the domain threshold are rejected upfront and listed in
    the statistics.  With ``secular_seeds`` the seeds carry the forced
    eccentricity of each ``k``.  Seeds are solved in worker processes; results are
    merged in ``(k, seed index)`` order before deduplication.

    Raises:
        TargetNotReached: fewer than ``l_target`` orbits (carries the report).
    """
    period = float(pert.period if period is None else period)
    workers = worker_count() if workers is None else workers
    stats, failures, found = {}, [], []
    for k in k_list:
        if not ksreg.seed_in_domain(k, period, pert.domain_radius):
            stats[k] = {"status": "rejected", "reason": "SeedOutsideDomain"}
            continue
        ev = forced_eccentricity(pert, k, eps, period) if secular_seeds else np.zeros(2)
        seeds = seed_grid(k, n_orient, n_phase, planar_only, period, ecc_vec=ev)
        tasks = [(pert, eps, k, period, s, i, (rel_tol, abs_tol)) for i, s in enumerate(seeds)]
        if workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(_solve_task, tasks))
        else:
            results = [_solve_task(t) for t in tasks]
        results.sort(key=lambda r: r[0])
        ok = [r[1] for r in results if r[1] is not None]
        for idx, _, msg in results:
            if msg:
                failures.append({"k": k, "seed": idx, "error": msg})
        distinct = dedup(ok, pert)
        found.extend(distinct)
        stats[k] = {"status": "ok", "seeds": len(seeds), "ecc_vec": [float(c) for c in ev], "converged": len(ok),
                    "distinct": len(distinct),
                    "eps_achieved": [r.eps for r in distinct]}
        if len(found) >= l_target:
            break
    report = FindReport(found, stats, failures, len(found) >= l_target)
    if not report.target_reached:
        raise TargetNotReached(f"{len(found)} < {l_target} orbits", records=report)
    return report


def verify_record(record: OrbitRecord, pert, tol=RESIDUAL_TOL, gen_tol=1e-6, rel_tol=1e-12, abs_tol=1e-13):
    """Re-propagate a record and recheck every property it claims.

    Returns a dict with the twisted-periodicity residual (state match, time
    advance, energy and moment rows), drifts, η, the generalized-solution
    jumps and an overall ``passed`` flag.
    """
    eps = record.eps
    p = pert if eps else None
    traj = orbit_trajectory(record, pert, rel_tol=rel_tol, abs_tol=abs_tol)
    X0 = record.X0.as_array()
    Yu = _rotate(traj.y_final, -record.theta)
    rows = np.concatenate([Yu[0:8] - X0[0:8], [Yu[9] - X0[9], Yu[8] - X0[8] - record.period,
                                               ksreg.hamiltonian_array(X0, p, eps),
                                               ksreg.bl_moment_array(X0)]])
    resid = float(np.linalg.norm(rows))
    K = ksreg.hamiltonian_array(traj.y, p, eps)
    BL = ksreg.bl_moment_array(traj.y)
    eta = int(round((traj.y_final[8] - X0[8]) / record.period))
    coll = _collision_times(traj, record.S)
    dir_jump = en_jump = 0.0
    gen_error = None
    if coll:
        state_at, _ = _state_at_factory(traj, record.S, record.period, X0[8])
        try:
            chk = check_generalized(state_at, record.period, coll)
            dir_jump, en_jump = chk.direction_jump, chk.energy_jump
        except Exception as exc:  # report, do not crash the validation run
            gen_error = f"{type(exc).__name__}: {exc}"
    r_max = float(np.max(np.sum(traj.y[:, 0:4] ** 2, axis=1)))
    out = {
        "residual": resid,
        "drift_K": float(np.max(np.abs(K - K[0]))),
        "drift_moment": float(np.max(np.abs(BL - BL[0]))),
        "eta": eta,
        "collision_count": len(coll),
        "direction_jump": float(dir_jump),
        "energy_jump": float(en_jump),
        "max_radius": r_max,
        "inside_domain": bool(r_max < pert.domain_radius),
    }
    if gen_error:
        out["generalized_error"] = gen_error
    out["passed"] = bool(resid < tol and eta == 1 and dir_jump < gen_tol and en_jump < gen_tol
                         and out["inside_domain"] and gen_error is None)
    return out
