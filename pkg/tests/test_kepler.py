import numpy as np
import pytest
from scipy.optimize import brentq

from ks_orbits import kepler
from ks_orbits.errors import AtCollision, BadFit, NonDiscreteZeroSet, OutsideDomain
from ks_orbits.kepler import PhysState

# rectilinear orbit from rest at r0 = 1: r = A(1 + cos η), t = B(η + sin η)
A = 0.5
B = np.sqrt(1.0 / 8.0)
T_COLL = np.pi * B
A_LIMIT = 4.5 ** (1.0 / 3.0)


def radial(t):
    eta = brentq(lambda e: B * (e + np.sin(e)) - t, 0.0, np.pi)
    r = A * (1.0 + np.cos(eta))
    drdt = -A * np.sin(eta) / (B * (1.0 + np.cos(eta)))
    return r, drdt


def bounce(t, axis=np.array([1.0, 0.0, 0.0])):
    """Generalized periodic bounce orbit of period 2 T_COLL, colliding at T_COLL."""
    P = 2.0 * T_COLL
    tt = t % P
    if tt <= T_COLL:
        r, dr = radial(tt)
    else:
        r, dr = radial(P - tt)
        dr = -dr
    return PhysState(r * axis, dr * axis, t)


def pass_through(t):
    """Same radial motion but continuing through the centre (not generalized)."""
    P = 2.0 * T_COLL
    tt = t % P
    s = bounce(t)
    return PhysState(s.u if tt <= T_COLL else -s.u, s.v if tt <= T_COLL else -s.v, t)


def test_energy_and_rhs():
    st = PhysState([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    assert kepler.kepler_energy(st) == pytest.approx(-0.5)
    assert np.allclose(kepler.kepler_rhs(st), [-1.0, 0.0, 0.0])
    assert np.allclose(kepler.angular_momentum(st), [0.0, 0.0, 1.0])


def test_rhs_at_collision_raises():
    with pytest.raises(AtCollision):
        kepler.kepler_rhs(PhysState([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]))


def test_rhs_with_perturbation():
    pert = kepler.CallablePerturbation(1.0, lambda t, u, e: 0.5 * np.sum(np.asarray(u) ** 2, -1),
                                       lambda t, u, e: np.asarray(u, dtype=float))
    st = PhysState([2.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    assert np.allclose(kepler.kepler_rhs(st, pert, 0.1), [-0.25 + 0.2, 0.0, 0.0])


@pytest.mark.parametrize("t0", [T_COLL, None])
def test_rectilinear_asymptote(t0):
    samples = [bounce(T_COLL - x) for x in 1e-3 * 0.5 ** np.arange(14)]
    fit = kepler.fit_collision_asymptote(samples, t0=t0)
    assert abs(np.linalg.norm(fit.a) - A_LIMIT) < 1e-4
    assert np.allclose(fit.direction, [1.0, 0.0, 0.0])
    assert fit.energy_limit == pytest.approx(-1.0, abs=1e-6)
    assert fit.side == -1
    if t0 is None:
        assert abs(fit.t0 - T_COLL) < 1e-9


def test_asymptote_rejects_few_or_bad_samples():
    s = [bounce(0.1 * i) for i in range(5)]
    with pytest.raises(BadFit):
        kepler.fit_collision_asymptote(s)
    circular = [PhysState([np.cos(x), np.sin(x), 0.0], [-np.sin(x), np.cos(x), 0.0], x)
                for x in np.linspace(0.0, 1.0, 10)]
    with pytest.raises(BadFit):
        kepler.fit_collision_asymptote(circular, t0=2.0)


def test_bounce_is_generalized():
    chk = kepler.check_generalized(bounce, 2.0 * T_COLL, [T_COLL])
    assert chk.passed
    assert chk.direction_jump < 1e-6
    assert chk.energy_jump < 1e-6


def test_pass_through_is_not_generalized():
    chk = kepler.check_generalized(pass_through, 4.0 * T_COLL, [T_COLL, 3.0 * T_COLL])
    assert not chk.passed
    assert chk.direction_jump == pytest.approx(2.0, abs=1e-6)


def test_accumulating_collisions_rejected():
    with pytest.raises(NonDiscreteZeroSet):
        kepler.check_generalized(bounce, 2.0 * T_COLL, [T_COLL, T_COLL + 1e-9])


def test_non_periodic_rejected():
    with pytest.raises(ValueError):
        kepler.check_generalized(bounce, 1.7 * T_COLL, [T_COLL])


def test_perturbation_defects():
    rng = np.random.default_rng(3)
    pert = kepler.CallablePerturbation(
        2.0, lambda t, u, e: np.cos(np.pi * np.asarray(t)) * np.sum(np.asarray(u) ** 2, -1),
        lambda t, u, e: 2.0 * np.cos(np.pi * np.asarray(t))[..., None] * np.asarray(u),
        domain_radius=0.5)
    assert pert.periodicity_defect(rng) < 1e-12
    assert pert.gradient_defect(rng) < 1.0
    with pytest.raises(OutsideDomain):
        pert.check_domain([0.6, 0.0, 0.0])
    zero = kepler.ZeroPerturbation()
    U, g, ut = zero.terms(0.0, np.ones((4, 3)), 0.1)
    assert U.shape == (4,) and g.shape == (4, 3) and ut.shape == (4,)
