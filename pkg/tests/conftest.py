import numpy as np
import pytest

from ks_orbits import pathlift


def _trig_curve(rng, scale=0.5):
    """Closed smooth curve on S² from a random offset trigonometric polynomial."""
    c = rng.normal(size=(3, 3)) * scale
    off = rng.normal(size=3)
    off *= 1.5 / np.linalg.norm(off)

    def f(x):
        p = off + c[0] * np.cos(2 * np.pi * x) + c[1] * np.sin(2 * np.pi * x) + c[2] * np.sin(4 * np.pi * x)
        dp = 2 * np.pi * (-c[0] * np.sin(2 * np.pi * x) + c[1] * np.cos(2 * np.pi * x)) \
            + 4 * np.pi * c[2] * np.cos(4 * np.pi * x)
        r = np.linalg.norm(p)
        g = p / r
        return g, (dp - g * (g @ dp)) / r

    return f


def random_closed_path(rng, blowup=False):
    """Random closed path on [0, 1]; with ``blowup`` the speed diverges like |t - t1|^{-1/3}."""
    f = _trig_curve(rng)
    if not blowup:
        return pathlift.PPath([0.0, 1.0], [f]), f
    t1 = float(rng.uniform(0.3, 0.7))

    def left(t):
        h = t1 - t1 ** (1 / 3) * (t1 - t) ** (2 / 3)
        hd = (2 / 3) * t1 ** (1 / 3) * (t1 - t) ** (-1 / 3)
        g, dg = f(h)
        return g, dg * hd

    def right(t):
        h = t1 + (1 - t1) ** (1 / 3) * (t - t1) ** (2 / 3)
        hd = (2 / 3) * (1 - t1) ** (1 / 3) * (t - t1) ** (-1 / 3)
        g, dg = f(h)
        return g, dg * hd

    return pathlift.PPath([0.0, t1, 1.0], [left, right]), f


def curve_points(f, n=20001):
    return np.array([f(x)[0] for x in np.linspace(0.0, 1.0, n)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
