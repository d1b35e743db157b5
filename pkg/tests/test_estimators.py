import numpy as np
import pytest
from sklearn.base import clone

from ks_orbits import CollisionAsymptoteFit, HopfLift, PeriodicOrbitFinder, pathlift
from ks_orbits.kepler import PhysState
from test_kepler import A_LIMIT, T_COLL, bounce


def circle_rows(colat=0.8, n=300):
    path = pathlift.circle_path([0.0, 0.0, 1.0], colat)
    t = np.linspace(0.0, 2 * np.pi, n)
    rows = [[ti, *path.evaluate(ti)[0], *path.evaluate(ti)[1]] for ti in t]
    return np.array(rows)


def test_hopf_lift_fit_transform():
    X = circle_rows()
    est = HopfLift(fiber_phase=0.2).fit(X)
    assert est.holonomy_angle() == pytest.approx(-np.pi * (1 - np.cos(0.8)), abs=1e-6)
    G = est.transform([0.5, 1.0, 2.0])
    assert G.shape == (3, 4)
    assert np.allclose(np.linalg.norm(G, axis=1), 1.0)
    with pytest.raises(ValueError):
        est.transform([10.0])


def test_hopf_lift_params_and_clone():
    est = HopfLift(n_pole_samples=128)
    assert est.get_params() == {"partition": None, "fiber_phase": 0.0, "n_pole_samples": 128}
    twin = clone(est.set_params(fiber_phase=0.5))
    assert twin.fiber_phase == 0.5 and not hasattr(twin, "lift_")


def test_hopf_lift_validation():
    X = circle_rows()
    with pytest.raises(ValueError):
        HopfLift().fit(X[:, :5])
    bad = X.copy()
    bad[3, 1] += 0.1
    with pytest.raises(ValueError):
        HopfLift().fit(bad)
    with pytest.raises(ValueError):
        HopfLift(n_pole_samples=10).fit(X)


def test_collision_fit():
    taus = 1e-3 * 0.5 ** np.arange(14)
    states = [bounce(T_COLL - x) for x in taus]
    t = np.array([s.t for s in states])
    y = np.array([[*s.u, *s.v] for s in states])
    est = CollisionAsymptoteFit(t0=T_COLL).fit(t, y)
    assert np.linalg.norm(est.a_) == pytest.approx(A_LIMIT, abs=1e-4)
    assert est.energy_limit_ == pytest.approx(-1.0, abs=1e-6)
    assert est.predict(t).shape == (14, 3)
    assert est.score(t, y) > 0.999
    assert clone(est).get_params() == {"t0": T_COLL}


def test_collision_fit_length_mismatch():
    with pytest.raises(ValueError):
        CollisionAsymptoteFit().fit(np.arange(3.0), np.zeros((4, 6)))


def test_orbit_finder_small_run():
    est = PeriodicOrbitFinder(k_list=(2,), l_target=1, workers=1)
    assert clone(est).get_params()["k_list"] == (2,)
    est.fit()
    assert est.target_reached_ and len(est.records_) == 1
    rec = est.records_[0]
    u = est.predict([rec.X0.t, rec.X0.t + 1.0])
    assert np.allclose(u[0], u[1], atol=1e-9)


def test_orbit_finder_validates():
    with pytest.raises(ValueError):
        PeriodicOrbitFinder(e0=1.2).fit()
    with pytest.raises(ValueError):
        PeriodicOrbitFinder(eps=0.5).fit()
    assert PhysState([1, 0, 0], [0, 1, 0]).t == 0.0
