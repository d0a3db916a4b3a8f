import math

import numpy as np
import pytest

from probtopo.grid import AxisSpec, GridSpec, ProbabilitySurface, normalize

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def make_spec(shape, periodic=None, lo=0.0, hi=1.0):
    periodic = periodic or (False,) * len(shape)
    return GridSpec(tuple(AxisSpec(f"a{i}", lo, hi, b, p)
                          for i, (b, p) in enumerate(zip(shape, periodic))))


def surface_from(values, periodic=None, normalized=True):
    values = np.asarray(values, dtype=float)
    spec = make_spec(values.shape, periodic)
    s = ProbabilitySurface(spec, values)
    return normalize(s) if normalized else s


def two_gaussian_1d(n=64, h1=0.6, h2=0.3, saddle=0.1):
    """1-d two-bump curve with exact heights h1, h2 and exact minimum ``saddle``
    between them, sampled at bin centres.  Returns (values, argmax1, argmax2)."""
    x = (np.arange(n) + 0.5) / n
    c1, c2, w = 0.3, 0.7, 0.08
    g1 = np.exp(-((x - c1) ** 2) / (2 * w * w))
    g2 = np.exp(-((x - c2) ** 2) / (2 * w * w))
    # mix so that the peaks have heights h1, h2 (the overlap between them is tiny)
    v = h1 * g1 + h2 * g2
    # lift the valley floor to the requested saddle height between the peaks
    i1, i2 = int(np.argmax(v[: n // 2])), n // 2 + int(np.argmax(v[n // 2:]))
    mid = slice(i1, i2 + 1)
    v[mid] = np.maximum(v[mid], saddle)
    return v, i1, i2


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def close(a, b, tol):
    return math.isclose(a, b, rel_tol=0, abs_tol=tol)
