import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from probtopo.errors import GridSizeError, InputError, NormalizationError
from probtopo.grid import (AxisSpec, GridSpec, HistogramAccumulator, ProbabilitySurface,
                           bin_points, build_histogram, cell_center, marginalize, normalize)

from conftest import make_spec


def test_direct_binning():
    spec = GridSpec((AxisSpec("x", 0.0, 1.0, 2),))
    s = build_histogram(spec, np.array([0.1, 0.6, 0.7]).reshape(-1, 1))
    assert s.mass.tolist() == [1, 2]
    assert not s.normalized


def test_periodic_wrap_lands_in_wrapped_bin():
    spec = GridSpec((AxisSpec("phi", -math.pi, math.pi, 4, periodic=True),))
    s = build_histogram(spec, [[3 * math.pi / 2]])
    # 3pi/2 wraps to -pi/2, the lower edge of the half-open bin [-pi/2, 0)
    assert s.mass.tolist() == [0, 1, 0, 0]
    s = build_histogram(spec, [[3 * math.pi / 2 - 1e-9]])
    assert s.mass.tolist() == [1, 0, 0, 0]


def test_iterable_of_tuples_is_accepted():
    spec = make_spec((2, 2))
    s = build_histogram(spec, iter([(0.1, 0.1), (0.9, 0.1), (0.9, 0.1)]))
    assert s.mass.tolist() == [[1, 0], [2, 0]]


def test_dimension_mismatch():
    spec = make_spec((3, 3))
    with pytest.raises(InputError):
        build_histogram(spec, np.zeros((4, 3)))


def test_empty_stream_gives_flagged_zero_surface():
    s = build_histogram(make_spec((3,)), np.empty((0, 1)))
    assert s.is_empty and s.total_samples == 0
    with pytest.raises(NormalizationError):
        normalize(s)


def test_out_of_range_discarded_not_clamped():
    spec = GridSpec((AxisSpec("x", 0.0, 1.0, 2), AxisSpec("t", 0.0, 1.0, 2, periodic=True)))
    s = build_histogram(spec, [[-0.1, 0.2], [1.0, 0.2], [0.2, 1.2], [0.99999, -0.3]])
    assert s.discarded == 2
    assert s.total_samples == 2
    assert s.mass.tolist() == [[1, 0], [0, 1]]


def test_axis_validation():
    with pytest.raises(InputError):
        AxisSpec("x", 1.0, 1.0, 3)
    with pytest.raises(InputError):
        AxisSpec("x", 0.0, 1.0, 0)
    with pytest.raises(InputError):
        GridSpec((AxisSpec("x", 0, 1, 2), AxisSpec("x", 0, 1, 2)))
    with pytest.raises(GridSizeError):
        GridSpec(tuple(AxisSpec(f"a{i}", 0, 1, 10**6) for i in range(4)))


def test_uniform_counts_follow_poisson():
    # 10^6 points over 15^5 cells: count frequencies must match Poisson(mean)
    spec = make_spec((15,) * 5)
    rng = np.random.default_rng(7)
    n = 10**6
    s = build_histogram(spec, rng.random((n, 5)))
    counts = s.flat
    assert counts.sum() == n
    mean = n / spec.size
    kmax = 8
    observed = np.bincount(np.minimum(counts, kmax), minlength=kmax + 1)
    pmf = stats.poisson.pmf(np.arange(kmax), mean)
    expected = np.append(pmf, 1 - pmf.sum()) * spec.size
    chi2 = np.sum((observed - expected) ** 2 / expected)
    assert stats.chi2.sf(chi2, df=kmax) > 1e-3
    # cells beyond 5 sigma: as many as Poisson tails predict, no more
    sigma = math.sqrt(mean)
    tail = stats.poisson.sf(math.floor(mean + 5 * sigma), mean) * spec.size
    beyond = int(np.sum(np.abs(counts - mean) > 5 * sigma))
    assert beyond <= tail + 6 * math.sqrt(tail) + 3


def test_normalize_examples():
    s = normalize(ProbabilitySurface(make_spec((2,)), np.array([1, 3])))
    assert s.mass.tolist() == [0.25, 0.75]
    s = normalize(ProbabilitySurface(make_spec((4,)), np.array([2, 2, 0, 0])))
    assert s.mass.tolist() == [0.5, 0.5, 0.0, 0.0]


def test_normalize_sum(rng):
    counts = rng.integers(0, 1000, size=(8, 8, 8))
    s = normalize(ProbabilitySurface(make_spec(counts.shape), counts))
    assert abs(math.fsum(s.flat) - 1.0) <= 1e-12


def test_marginalize_examples():
    s = ProbabilitySurface(make_spec((2, 2)), np.array([[0.1, 0.2], [0.3, 0.4]]))
    m = marginalize(s, ["a0"])
    np.testing.assert_allclose(m.mass, [0.3, 0.7], rtol=0, atol=1e-15)
    same = marginalize(s, ["a0", "a1"])
    assert np.array_equal(same.mass, s.mass)
    swapped = marginalize(s, ["a1", "a0"])
    assert np.array_equal(swapped.mass, s.mass.T)
    assert swapped.spec.names == ("a1", "a0")


def test_marginalize_unknown_axis():
    s = ProbabilitySurface(make_spec((2, 2)), np.ones((2, 2)))
    with pytest.raises(InputError):
        marginalize(s, ["nope"])
    with pytest.raises(InputError):
        marginalize(s, [])


def test_marginalize_two_ways(rng):
    s = normalize(ProbabilitySurface(make_spec((6,) * 4), rng.random((6,) * 4)))
    direct = marginalize(s, ["a1", "a3"])
    stepwise = marginalize(marginalize(s, ["a1", "a2", "a3"]), ["a1", "a3"])
    np.testing.assert_allclose(direct.mass, stepwise.mass, rtol=0, atol=1e-12)
    assert abs(math.fsum(direct.flat) - math.fsum(s.flat)) <= 1e-10


def test_cell_center_examples():
    spec = GridSpec((AxisSpec("x", 0.0, 1.0, 2),))
    assert cell_center(spec, (0,)) == (0.25,)
    spec = GridSpec((AxisSpec("phi", -math.pi, math.pi, 15, periodic=True),))
    # 15 bins: bin 7 is the middle one, centred on zero
    assert abs(cell_center(spec, (7,))[0]) < 1e-15
    with pytest.raises(InputError):
        cell_center(spec, (15,))


def test_cell_lookup_roundtrip():
    spec = make_spec((3, 4, 5), (True, False, True))
    for lin in range(spec.size):
        c = spec.cell_from_linear(lin)
        assert spec.cell(c.coords).linear == lin
        assert spec.locate(cell_center(spec, c)) == c
    assert spec.cell((1, 2, 3)).linear == np.ravel_multi_index((1, 2, 3), (3, 4, 5))


def test_accumulator_merge_matches_single_pass(rng):
    spec = make_spec((5, 7), (True, False))
    pts = rng.uniform(-0.5, 1.5, size=(5000, 2))
    whole = build_histogram(spec, pts)
    parts = [HistogramAccumulator(spec).add(chunk) for chunk in np.array_split(pts, 7)]
    acc = parts[0]
    for p in parts[1:]:
        acc.merge(p)
    merged = acc.surface()
    assert np.array_equal(merged.mass, whole.mass)
    assert merged.discarded == whole.discarded


def test_surface_is_read_only():
    s = ProbabilitySurface(make_spec((2,)), np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        s.mass[0] = 5.0
    with pytest.raises(InputError):
        ProbabilitySurface(make_spec((2,)), np.array([1.0, -2.0]))


# -- properties ---------------------------------------------------------------

coords = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coords, coords), min_size=1, max_size=60), st.randoms(use_true_random=False))
def test_binning_is_order_independent(points, rnd):
    spec = GridSpec((AxisSpec("a", -3, 3, 7, True), AxisSpec("b", -2, 5, 4)))
    shuffled = list(points)
    rnd.shuffle(shuffled)
    s1, s2 = build_histogram(spec, points), build_histogram(spec, shuffled)
    assert np.array_equal(s1.mass, s2.mass) and s1.discarded == s2.discarded
    assert s1.total_samples + s1.discarded == len(points)


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50, allow_nan=False), st.integers(-20, 20))
def test_periodic_shift_same_cell(x, k):
    axis = AxisSpec("t", -math.pi, math.pi, 15, True)
    shifted = x + k * axis.length
    i1, ok1 = axis.bin_index(np.array([x]))
    i2, ok2 = axis.bin_index(np.array([shifted]))
    if ok1[0] and ok2[0]:
        # shifting by a multiple of the period can only cross a bin edge
        # through rounding, i.e. when x sits within a few ulps of one
        wrapped = float(axis.wrap(x))
        frac = (wrapped - axis.lo) / axis.width
        near_edge = abs(frac - round(frac)) < 1e-9 * (1 + abs(k))
        assert i1[0] == i2[0] or near_edge


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=3, unique=True),
       st.lists(st.integers(0, 3), min_size=1, max_size=3, unique=True),
       st.integers(0, 2**32 - 1))
def test_marginalization_commutes(a, b, seed):
    rng = np.random.default_rng(seed)
    names = ["a0", "a1", "a2", "a3"]
    s = normalize(ProbabilitySurface(make_spec((3, 4, 2, 3)), rng.random((3, 4, 2, 3))))
    keep_a = [names[i] for i in sorted(a)]
    common = [n for n in keep_a if n in {names[i] for i in b}]
    if not common:
        return
    two_step = marginalize(marginalize(s, keep_a), common)
    one_step = marginalize(s, common)
    np.testing.assert_allclose(two_step.mass, one_step.mass, rtol=0, atol=1e-12)
    assert abs(math.fsum(one_step.flat) - 1.0) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 10**6), min_size=1, max_size=50).filter(lambda v: sum(v) > 0))
def test_normalize_idempotent(counts):
    s = ProbabilitySurface(make_spec((len(counts),)), np.array(counts))
    once = normalize(s)
    twice = normalize(once)
    assert np.all(np.abs(twice.flat - once.flat) <= np.spacing(np.maximum(once.flat, 1e-300)))
    assert abs(math.fsum(once.flat) - 1.0) <= 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-1, 2, allow_nan=False), st.floats(-1, 2, allow_nan=False)),
                min_size=1, max_size=30))
def test_every_in_range_point_hits_one_cell(points):
    spec = GridSpec((AxisSpec("a", 0, 1, 3, True), AxisSpec("b", 0, 1, 5)))
    lin, valid = bin_points(spec, np.array(points))
    for (x, y), l, v in zip(points, lin, valid):
        assert v == (0 <= y < 1)
        if v:
            c = spec.cell_from_linear(l)
            cx, cy = cell_center(spec, c)
            assert abs(cy - y) <= spec.axes[1].width / 2 + 1e-12
