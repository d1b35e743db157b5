"""Adaptive ODE propagation with dense output and event location.

All flows in the package go through :func:`propagate`, which always uses
the explicit Runge-Kutta pair of order 8(5,3) of Dormand and Prince
(scipy's ``DOP853``).  No invariant projection is applied.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DomainExit, OutsideDomain, StepSizeUnderflow

METHOD = "DOP853"


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-12
    max_step: float = np.inf
    dense_output: bool = True

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            value = getattr(self, name)
            if not 1e-15 <= value <= 1e-3:
                raise ValueError(f"{name}={value!r} outside [1e-15, 1e-3]")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")


@dataclass(frozen=True)
class EventSpec:
    """Root of ``event_fn(s, y)`` marks an event.

    ``direction`` filters crossings (+1 rising, -1 falling, 0 both);
    a ``terminal`` event stops the propagation at its first occurrence.
    """

    event_fn: Callable[[float, np.ndarray], float]
    direction: int = 0
    terminal: bool = False


@dataclass
class EventHit:
    index: int
    s: float
    y: np.ndarray


@dataclass
class Trajectory:
    s: np.ndarray
    y: np.ndarray  # shape (len(s), dim)
    sol: Optional[Callable] = None
    events: list = field(default_factory=list)
    terminated: bool = False
    nfev: int = 0

    def __call__(self, s):
        if self.sol is None:
            raise ValueError("trajectory was propagated without dense output")
        out = self.sol(s)
        return out.T if np.ndim(s) else out

    @property
    def y_final(self):
        return self.y[-1]

    @property
    def s_final(self):
        return float(self.s[-1])


def propagate(
    rhs,
    y0,
    s_span,
    config: Optional[IntegratorConfig] = None,
    events: Sequence[EventSpec] = (),
):
    """Integrate ``y' = rhs(s, y)`` over ``s_span``.

    Args:
        rhs: callable ``(s, y) -> dy/ds``; may raise ``OutsideDomain``.
        y0: initial state (1-D).
        s_span: ``(s0, s1)``; ``s1 < s0`` integrates backwards.
        config: tolerances and dense-output switch.
        events: event specifications, located on the dense interpolant.

    Returns:
        Trajectory with accepted steps, dense output (if requested) and
        every located event in order of occurrence.

    Raises:
        DomainExit: the right-hand side left its domain.
        StepSizeUnderflow: the step size collapsed.
    """
    config = config or IntegratorConfig()
    y0 = np.asarray(y0, dtype=float)
    last_s = [float(s_span[0])]

    def wrapped(s, y):
        last_s[0] = s
        try:
            return rhs(s, y)
        except OutsideDomain as exc:
            raise DomainExit(str(exc), s=s) from exc

    scipy_events = []
    for spec in events:
        def fn(s, y, _f=spec.event_fn):
            return _f(s, y)

        fn.terminal = bool(spec.terminal)
        fn.direction = float(spec.direction)
        scipy_events.append(fn)

    needs_dense = config.dense_output
    res = solve_ivp(
        wrapped,
        (float(s_span[0]), float(s_span[1])),
        y0,
        method=METHOD,
        rtol=config.rel_tol,
        atol=config.abs_tol,
        max_step=config.max_step,
        dense_output=needs_dense,
        events=scipy_events or None,
    )
    if res.status == -1:
        raise StepSizeUnderflow(f"integration failed near s={last_s[0]!r}: {res.message}")

    hits = []
    if scipy_events:
        for idx, (ts, ys) in enumerate(zip(res.t_events, res.y_events)):
            for s_ev, y_ev in zip(ts, ys):
                hits.append(EventHit(idx, float(s_ev), np.array(y_ev)))
        hits.sort(key=lambda h: h.s if s_span[1] >= s_span[0] else -h.s)

    return Trajectory(
        s=res.t,
        y=res.y.T,
        sol=res.sol,
        events=hits,
        terminated=res.status == 1,
        nfev=res.nfev,
    )


def sample(traj: Trajectory, s_values):
    """Dense-output values at ``s_values`` as an array of shape (n, dim)."""
    return np.atleast_2d(traj(np.asarray(s_values, dtype=float)))
