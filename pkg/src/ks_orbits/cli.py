"""Command line entry point: ``lift``, ``find``, ``validate`` and ``sample``.

Exit codes: 0 success, 2 malformed input or unknown record, 3 no usable
pole for a lift, 4 orbit target not reached, 5 validation failure.
"""

import argparse
import configparser
import csv
import json
import logging
import sys
from dataclasses import dataclass, field

import numpy as np

from . import ksreg, pathlift, porbit, quat, rtbp
from .errors import PoleSelectionFailed, TargetNotReached

log = logging.getLogger("ks_orbits")

EXIT_OK, EXIT_INPUT, EXIT_POLE, EXIT_TARGET, EXIT_INVALID = 0, 2, 3, 4, 5


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    e0: float = 0.0
    T0: float = 2.0 * np.pi
    mass_scale: float = 1.0
    a_rule: str = "kepler"
    rotation_axis: tuple = (0.0, 0.0, 1.0)
    rotation_angle: float = 0.0
    eps: float = 1e-3
    eps_star: float = 1e-2
    k_list: list = field(default_factory=lambda: [9, 10, 11])
    l_target: int = 3
    n_orient: int = 1
    n_phase: int = 1
    planar_only: bool = True
    rel_tol: float = 1e-12
    abs_tol: float = 1e-13
    db: str = "orbits.jsonl"
    report: str = "validation.json"
    workers: int = 0

    def validate(self):
        if not 0.0 <= self.e0 < 1.0:
            raise ConfigError("family.e0 must lie in [0, 1)")
        if not self.T0 > 0:
            raise ConfigError("family.T0 must be positive")
        if not self.mass_scale > 0:
            raise ConfigError("family.mass_scale must be positive")
        if self.a_rule != "kepler":
            raise ConfigError("family.a_rule: only 'kepler' is supported")
        if not 0.0 < self.eps <= self.eps_star:
            raise ConfigError("solver.eps must lie in (0, eps_star]")
        if self.eps_star * self.mass_scale >= 1.0:
            raise ConfigError("solver.eps_star too large: the small mass must stay below 1")
        if self.l_target < 1 or not self.k_list or min(self.k_list) < 1:
            raise ConfigError("solver.l_target and k_list entries must be >= 1")
        if self.n_orient < 1 or self.n_phase < 1:
            raise ConfigError("solver grid sizes must be >= 1")
        for name in ("rel_tol", "abs_tol"):
            if not 1e-15 <= getattr(self, name) <= 1e-3:
                raise ConfigError(f"integrator.{name} outside [1e-15, 1e-3]")
        return self

    def family(self):
        q = quat.from_axis_angle(self.rotation_axis, self.rotation_angle)
        mass_fn = None if self.mass_scale == 1.0 else _LinearMass(self.mass_scale)
        return rtbp.PrimariesFamily(e0=self.e0, T0=self.T0, R0=tuple(q), mass_fn=mass_fn)


@dataclass(frozen=True)
class _LinearMass:
    scale: float

    def __call__(self, eps):
        return self.scale * eps


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def load_config(path):
    """Read an INI-style run configuration into a validated :class:`RunConfig`."""
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise ConfigError(f"cannot read config {path!r}")
    cfg = RunConfig()
    try:
        if cp.has_section("family"):
            f = cp["family"]
            cfg.e0 = f.getfloat("e0", cfg.e0)
            cfg.T0 = f.getfloat("T0", cfg.T0)
            cfg.mass_scale = f.getfloat("mass_scale", cfg.mass_scale)
            cfg.a_rule = f.get("a_rule", cfg.a_rule).strip()
            if "rotation_axis" in f:
                cfg.rotation_axis = _floats(f["rotation_axis"])
            cfg.rotation_angle = f.getfloat("rotation_angle", cfg.rotation_angle)
        if cp.has_section("solver"):
            s = cp["solver"]
            cfg.eps = s.getfloat("eps", cfg.eps)
            cfg.eps_star = s.getfloat("eps_star", cfg.eps_star)
            if "k_list" in s:
                cfg.k_list = [int(v) for v in _floats(s["k_list"])]
            cfg.l_target = s.getint("l_target", cfg.l_target)
            cfg.n_orient = s.getint("n_orient", cfg.n_orient)
            cfg.n_phase = s.getint("n_phase", cfg.n_phase)
            cfg.planar_only = s.getboolean("planar_only", cfg.planar_only)
            cfg.workers = s.getint("workers", cfg.workers)
        if cp.has_section("integrator"):
            i = cp["integrator"]
            cfg.rel_tol = i.getfloat("rel_tol", cfg.rel_tol)
            cfg.abs_tol = i.getfloat("abs_tol", cfg.abs_tol)
        if cp.has_section("output"):
            o = cp["output"]
            cfg.db = o.get("db", cfg.db)
            cfg.report = o.get("report", cfg.report)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()


def _fmt(v):
    return f"{float(v):.17g}"


def cmd_lift(input_path, output_path):
    try:
        with open(input_path) as fh:
            doc = json.load(fh)
        partition = np.asarray(doc["partition"], dtype=float)
        samples = doc["samples"]
        t = np.array([s["t"] for s in samples], dtype=float)
        pts = np.array([s["gamma"] for s in samples], dtype=float)
        vel = np.array([s["gamma_dot"] for s in samples], dtype=float)
        order = np.argsort(t)
        t, pts, vel = t[order], pts[order], vel[order]
        gamma = pathlift.PPath.from_samples(t, pts, vel, partition)
        start = quat.fiber_point(gamma.point(gamma.t0))
    except (OSError, KeyError, TypeError, ValueError) as exc:
        print(f"error: malformed lift input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        res = pathlift.lift_ppath(gamma, start)
    except PoleSelectionFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_POLE
    rows = []
    for ti in t:
        if np.any(np.isclose(ti, partition, rtol=0, atol=1e-14)):
            ti = ti + 1e-9 * (partition[-1] - partition[0]) * (1 if ti < partition[-1] else -1)
        G, dG = res.lift.evaluate(ti)
        fib = np.linalg.norm(quat.ks_map(G) - gamma.point(ti))
        hor = abs(quat.qmul(quat.qmul(quat.qconj(G), quat.I), dG)[0])
        rows.append([ti, *G, fib, hor])
    with open(output_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "G0", "G1", "G2", "G3", "fiber_residual", "horiz_residual"])
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    if res.holonomy is not None:
        print(f"holonomy angle: {np.angle(res.holonomy):.12f} rad")
    else:
        print("path not closed; no holonomy")
    return EXIT_OK


def _workers(cfg, override):
    if override:
        return override
    if cfg.workers:
        return cfg.workers
    return porbit.worker_count()


def cmd_find(config_path, workers=None):
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    fam = cfg.family()
    pert = rtbp.build_perturbation(fam, cfg.eps_star)
    for k in cfg.k_list:
        if not ksreg.seed_in_domain(k, pert.period, pert.domain_radius):
            kmin = ksreg.min_admissible_k(pert.period, pert.domain_radius)
            print(f"warning: SeedOutsideDomain for k={k} (k_min={kmin}); skipped")
    try:
        report = porbit.find_orbits(pert, cfg.eps, cfg.k_list, cfg.l_target, cfg.n_orient,
                                    cfg.n_phase, cfg.planar_only, workers=_workers(cfg, workers),
                                    rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)
        code = EXIT_OK
    except TargetNotReached as exc:
        report = exc.records
        code = EXIT_TARGET
    porbit.write_db(cfg.db, report.records)
    print(f"{'k':>4} {'eps':>10} {'residual':>11} {'collisions':>10} {'theta':>10}")
    for rec in report.records:
        print(f"{rec.k:>4} {rec.eps:>10.3g} {rec.residual_norm:>11.3e} {rec.collision_count:>10d} "
              f"{rec.theta:>10.5f}")
    print(f"{len(report.records)} orbit(s) written to {cfg.db}")
    for f in report.failures:
        print(f"warning: k={f['k']} seed {f['seed']}: {f['error']}")
    if code == EXIT_TARGET:
        print(f"target of {cfg.l_target} orbits not reached")
    return code


def cmd_validate(db_path, config_path, report_path=None):
    try:
        cfg = load_config(config_path)
        records = porbit.read_db(db_path)
    except (ConfigError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    fam = cfg.family()
    pert = rtbp.build_perturbation(fam, cfg.eps_star)
    if not records:
        print("warning: empty orbit database")
    results = []
    for idx, rec in enumerate(records):
        try:
            res = porbit.verify_record(rec, pert, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)
            res["energy_identity"] = rtbp.energy_identity_check(rec, fam)
        except Exception as exc:  # a broken record is a failure, not a crash
            res = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        res["id"] = idx
        results.append(res)
        print(f"record {idx}: {'pass' if res['passed'] else 'FAIL'} "
              f"(residual {res.get('residual', float('nan')):.3e})")
    report_path = report_path or cfg.report
    with open(report_path, "w") as fh:
        json.dump({"records": results, "n": len(results),
                   "failures": sum(not r["passed"] for r in results)}, fh, indent=2)
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_INVALID


SAMPLE_COLUMNS = ["t", "u1", "u2", "u3", "v1", "v2", "v3", "r", "E", "d1", "d2", "d3"]


def cmd_sample(db_path, orbit_id, dt, out_path, config_path):
    try:
        cfg = load_config(config_path)
        records = porbit.read_db(db_path)
        rec = records[int(orbit_id)]
    except (IndexError, ValueError, OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not dt > 0:
        print("error: dt must be positive", file=sys.stderr)
        return EXIT_INPUT
    pert = rtbp.build_perturbation(cfg.family(), cfg.eps_star)
    traj = porbit.orbit_trajectory(rec, pert, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol)
    _, s_at = porbit._state_at_factory(traj, rec.S, rec.period, rec.X0.t)
    n = int(round(rec.period / dt))
    t = rec.X0.t + np.arange(n + 1) * dt
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_COLUMNS)
        for ti in t:
            y = traj(s_at(ti))
            X = ksreg.KSState.from_array(y)
            u = quat.ks_map(X.z)
            r = float(np.linalg.norm(u))
            if r > ksreg.COLLISION_RADIUS**2:
                st = ksreg.ks_to_phys(X)
                v, E = st.v, 0.5 * st.v @ st.v - 1.0 / r
            else:
                v, E = np.full(3, np.nan), np.nan
            d = pert.d(np.atleast_1d(ti), rec.eps)[0]
            w.writerow([_fmt(c) for c in (ti, *u, *v, r, E, *d)])
    print(f"{n + 1} rows written to {out_path}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="ksorbits", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    a = sub.add_parser("lift", help="horizontal lift of a sampled sphere path")
    a.add_argument("input")
    a.add_argument("output")
    f = sub.add_parser("find", help="search for periodic orbits")
    f.add_argument("--config", required=True)
    f.add_argument("--workers", type=int, default=None)
    v = sub.add_parser("validate", help="re-verify an orbit database")
    v.add_argument("db")
    v.add_argument("--config", required=True)
    v.add_argument("--report", default=None)
    s = sub.add_parser("sample", help="export a found orbit on a uniform time grid")
    s.add_argument("db")
    s.add_argument("orbit_id", type=int)
    s.add_argument("--dt", type=float, required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--config", required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "lift":
        return cmd_lift(args.input, args.output)
    if args.command == "find":
        return cmd_find(args.config, args.workers)
    if args.command == "validate":
        return cmd_validate(args.db, args.config, args.report)
    return cmd_sample(args.db, args.orbit_id, args.dt, args.out, args.config)


if __name__ == "__main__":
    sys.exit(main())
