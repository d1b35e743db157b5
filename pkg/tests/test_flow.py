import numpy as np
import pytest

from ks_orbits import flow
from ks_orbits.errors import DomainExit, OutsideDomain, StepSizeUnderflow


def oscillator(s, y):
    return np.array([y[1], -y[0]])


def test_harmonic_oscillator_dense_output():
    tr = flow.propagate(oscillator, [1.0, 0.0], (0.0, 10.0))
    s = np.linspace(0.0, 10.0, 57)
    assert np.allclose(flow.sample(tr, s), np.column_stack([np.cos(s), -np.sin(s)]), atol=1e-10)
    assert tr.s_final == 10.0


def test_backward_integration():
    tr = flow.propagate(oscillator, [1.0, 0.0], (0.0, -3.0))
    assert np.allclose(tr.y_final, [np.cos(3.0), np.sin(3.0)], atol=1e-11)


def test_events_located_in_order():
    ev = flow.EventSpec(lambda s, y: y[0], direction=0)
    tr = flow.propagate(oscillator, [1.0, 0.0], (0.0, 10.0), events=[ev])
    hits = [h.s for h in tr.events]
    assert np.allclose(hits, [np.pi / 2, 3 * np.pi / 2, 5 * np.pi / 2], atol=1e-10)


def test_terminal_event_stops():
    ev = flow.EventSpec(lambda s, y: y[0], direction=-1, terminal=True)
    tr = flow.propagate(oscillator, [1.0, 0.0], (0.0, 10.0), events=[ev])
    assert tr.terminated
    assert np.isclose(tr.s_final, np.pi / 2)


def test_domain_exit_carries_s():
    def rhs(s, y):
        if y[0] > 2.0:
            raise OutsideDomain("left")
        return np.array([1.0])

    with pytest.raises(DomainExit) as info:
        flow.propagate(rhs, [0.0], (0.0, 5.0))
    assert 1.5 < info.value.s < 2.5


def test_step_underflow():
    with pytest.raises(StepSizeUnderflow):
        flow.propagate(lambda s, y: np.array([1.0 / (1.0 - s) ** 3]), [0.0], (0.0, 2.0))


@pytest.mark.parametrize("tol", [0.0, 1e-16, 1e-2])
def test_config_rejects_bad_tolerance(tol):
    with pytest.raises(ValueError):
        flow.IntegratorConfig(rel_tol=tol)


def test_no_dense_output():
    tr = flow.propagate(oscillator, [1.0, 0.0], (0.0, 1.0), flow.IntegratorConfig(dense_output=False))
    with pytest.raises(ValueError):
        tr(0.5)
