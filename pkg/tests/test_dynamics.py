import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from probtopo.dynamics import (REACHED_PRODUCT, REACHED_REACTANT, TIMEOUT, BasinSpec, Basins,
                               ModelPotential, Trajectory, TrajectoryParams, builtin_potentials,
                               classify, harvest_reactive, integrate)
from probtopo.errors import InputError, IntegrationError
from probtopo.grid import AxisSpec, GridSpec, build_histogram, cell_center, normalize
from probtopo.persistence import persistence0
from probtopo.rng import HARVEST, keyed_stream

X_BASINS = Basins(BasinSpec("reactant", {"x": (-1.3, -0.7)}), BasinSpec("product", {"x": (0.7, 1.3)}))


def all_potentials():
    yield ModelPotential.builtin("double_well_1d")
    yield ModelPotential.builtin("double_well_gated")
    yield ModelPotential.builtin("double_well_gated", {"kq": 20.0})
    yield ModelPotential.builtin("harmonic", {"k": 2.5, "dim": 4})


def test_builtins_listed():
    assert set(builtin_potentials()) == {"double_well_1d", "double_well_gated", "harmonic"}
    assert ModelPotential.builtin("double_well_gated", {"kq": 1}).names == ("x", "y", "z", "q")
    assert ModelPotential.builtin("harmonic", {"dim": 3}).names == ("x0", "x1", "x2")


def test_potential_validation():
    with pytest.raises(InputError):
        ModelPotential.builtin("morse")
    with pytest.raises(InputError):
        ModelPotential.builtin("double_well_1d", {"height": 1})
    with pytest.raises(InputError):
        ModelPotential.builtin("double_well_gated", {"w": 0})
    with pytest.raises(InputError):
        ModelPotential.builtin("harmonic", {"dim": 2.5})
    with pytest.raises(InputError):
        ModelPotential.builtin("double_well_1d", {"h": float("nan")})


def test_gated_energy_values():
    v = ModelPotential.builtin("double_well_gated")
    # at the saddle the gate term vanishes and only the x barrier remains
    assert v.energy([0.0, 0.0, 0.0]) == pytest.approx(3.0)
    # away from y = 0 the crossing costs about h + g
    assert v.energy([0.0, 1.5, 0.0]) == pytest.approx(3.0 + 6.0 * (1 - math.exp(-25)) + 1.125)
    assert v.energy([1.0, 0.0, 0.0]) == 0.0


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    eps = 1e-5
    for pot in all_potentials():
        pts = rng.uniform(-2, 2, size=(100, pot.dim))
        g = pot.gradient(pts)
        fd = np.empty_like(g)
        for j in range(pot.dim):
            e = np.zeros(pot.dim)
            e[j] = eps
            fd[:, j] = (pot.energy(pts + e) - pot.energy(pts - e)) / (2 * eps)
        err = np.linalg.norm(g - fd, axis=1)
        scale = np.maximum(np.linalg.norm(g, axis=1), 1.0)
        assert np.all(err <= 1e-6 * scale), pot.name


def test_zero_temperature_descent():
    pot = ModelPotential.builtin("double_well_1d")
    traj = integrate(pot, [0.5], steps=4000, dt=1e-3, temperature=0.0)
    x = traj.points[:, 0]
    assert np.all(np.diff(x) >= 0)
    assert abs(x[-1] - 1.0) < 1e-3


def test_unstable_equilibrium_stays_put():
    pot = ModelPotential.builtin("double_well_1d")
    traj = integrate(pot, [0.0], steps=500, dt=1e-3, temperature=0.0)
    assert np.all(traj.points == 0.0)


def test_equipartition():
    pot = ModelPotential.builtin("harmonic", {"k": 2.0, "dim": 50})
    traj = integrate(pot, np.zeros(50), steps=40000, dt=0.01, temperature=1.5, seed=3, stride=10)
    x = traj.points[200:]
    # kT / k = 0.75
    assert abs(x.var() / 0.75 - 1) < 0.05


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_energy_non_increasing_at_zero_temperature(seed):
    rng = np.random.default_rng(seed)
    dt = 1e-4
    for pot in all_potentials():
        x0 = rng.uniform(-1.5, 1.5, pot.dim)
        traj = integrate(pot, x0, steps=300, dt=dt, temperature=0.0)
        e = pot.energy(traj.points)
        g2 = np.sum(pot.gradient(traj.points[:-1]) ** 2, axis=1)
        assert np.all(np.diff(e) <= dt * g2 * 1e-2 + 1e-12), pot.name


def test_integrate_is_bit_reproducible():
    pot = ModelPotential.builtin("double_well_gated", {"kq": 5})
    a = integrate(pot, [-1, 0, 0, 0], steps=3000, dt=1e-3, seed=9, stride=7)
    b = integrate(pot, [-1, 0, 0, 0], steps=3000, dt=1e-3, seed=9, stride=7)
    c = integrate(pot, [-1, 0, 0, 0], steps=3000, dt=1e-3, seed=10, stride=7)
    assert a.points.tobytes() == b.points.tobytes()
    assert a.points.tobytes() != c.points.tobytes()
    assert len(a) == 3000 // 7 + 1


def test_integration_error_reports_step():
    pot = ModelPotential.builtin("double_well_1d", {"h": 50})
    with pytest.raises(IntegrationError) as info, np.errstate(over="ignore", invalid="ignore"):
        integrate(pot, [3.0], steps=100, dt=0.1, temperature=0.0)
    assert info.value.step >= 1


def test_trajectory_params_validation():
    with pytest.raises(InputError):
        TrajectoryParams(0.0, 10)
    with pytest.raises(InputError):
        TrajectoryParams(0.1, 0)
    with pytest.raises(InputError):
        TrajectoryParams(0.1, 10, temperature=-1)
    with pytest.raises(InputError):
        TrajectoryParams(0.1, 10, friction=0)


def test_basins_must_be_disjoint():
    with pytest.raises(InputError):
        Basins(BasinSpec("reactant", {"x": (-1, 0.1)}), BasinSpec("product", {"x": (0, 1)}))
    # disjoint along one shared axis is enough
    Basins(BasinSpec("reactant", {"x": (-1, 0.1), "y": (0, 1)}),
           BasinSpec("product", {"x": (0.2, 1), "y": (0, 1)}))


def test_classify_examples():
    names = ("x",)
    inside = np.full((5, 1), 1.0)
    assert classify(inside, X_BASINS, names) == (REACHED_PRODUCT, 0)
    path = np.concatenate([np.linspace(0, -0.6, 7), [-0.8], np.linspace(-0.5, 1.0, 10)])[:, None]
    assert classify(path, X_BASINS, names) == (REACHED_REACTANT, 7)
    assert classify(np.zeros((4, 1)), X_BASINS, names) == (TIMEOUT, None)
    traj = Trajectory(path, dt=0.1, seed=0, stride=5)
    assert classify(traj, X_BASINS, names) == (REACHED_REACTANT, 35)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=2, max_size=40))
def test_reversal_flips_outcome_of_crossing_paths(xs):
    pts = np.array(xs + [-1.0, 1.0])[:, None]
    out, _ = classify(pts, X_BASINS, ("x",))
    back, _ = classify(pts[::-1], X_BASINS, ("x",))
    hits = [x for x in pts[:, 0] if -1.3 <= x <= -0.7 or 0.7 <= x <= 1.3]
    first_hit_p = 0.7 <= hits[0] <= 1.3
    last_hit_p = 0.7 <= hits[-1] <= 1.3
    assert out == (REACHED_PRODUCT if first_hit_p else REACHED_REACTANT)
    assert back == (REACHED_PRODUCT if last_hit_p else REACHED_REACTANT)
    if first_hit_p != last_hit_p:
        assert out != back


def test_low_temperature_walkers_stay_in_their_basin():
    pot = ModelPotential.builtin("double_well_1d")
    kept = 0
    for seed in range(100):
        traj = integrate(pot, [-1.0], steps=2000, dt=1e-3, temperature=0.1, seed=seed, stride=50)
        out, _ = classify(traj.points[-1:], X_BASINS, pot.names)
        kept += out == REACHED_REACTANT
    assert kept >= 98


def _siegmund_first_passage(dist, t_total, sigma, dt):
    # P(max of Brownian motion with diffusion sigma^2 exceeds dist by time t),
    # corrected for monitoring only at step ends
    shift = 0.5826 * sigma * math.sqrt(dt)
    return 2 * stats.norm.sf((dist + shift) / (sigma * math.sqrt(t_total)))


def test_flat_potential_acceptance_matches_first_passage():
    pot = ModelPotential.builtin("double_well_1d", {"h": 0.0})
    dt, steps, n = 1e-3, 1000, 6000
    tp = TrajectoryParams(dt, steps)
    store = harvest_reactive(pot, X_BASINS, n, tp, stride=100, seed=5)
    # starts are uniform on [-1.15, -0.85]
    x0 = np.linspace(-1.15, -0.85, 301)
    expected = np.mean([_siegmund_first_passage(0.7 - x, steps * dt, math.sqrt(2), dt) for x in x0])
    se = math.sqrt(expected * (1 - expected) / n)
    assert store.n_launched == n
    assert abs(store.acceptance - expected) < 4 * se


def _reference_reactive(pot, basins, tp, seed, ids):
    """Plain per-trajectory replay of the harvest stream layout."""
    reactive = []
    for i in ids:
        gen = keyed_stream(seed, HARVEST, i)
        u = gen.random(pot.dim)
        lo, hi = basins.reactant.box["x"]
        x = np.array([0.5 * (lo + hi) + 0.25 * (hi - lo) * (2 * u[0] - 1)])
        noise = gen.standard_normal((tp.steps, pot.dim))
        hit = False
        for k in range(tp.steps):
            x = x - tp.drift * pot.gradient(x) + tp.amplitude * noise[k]
            hit |= bool(basins.product.contains(x, pot.names)[0])
        if hit:
            reactive.append(i)
    return reactive


def test_swapped_basins_match_replay():
    pot = ModelPotential.builtin("double_well_1d", {"h": 1.0})
    tp = TrajectoryParams(2e-3, 600)
    n = 60
    forward = harvest_reactive(pot, X_BASINS, n, tp, seed=4, batch_size=16)
    backward = harvest_reactive(pot, X_BASINS.swapped(), n, tp, seed=4, batch_size=16)
    ref_f = _reference_reactive(pot, X_BASINS, tp, 4, range(n))
    ref_b = _reference_reactive(pot, X_BASINS.swapped(), tp, 4, range(n))
    assert np.unique(forward.traj_id).tolist() == ref_f
    assert np.unique(backward.traj_id).tolist() == ref_b
    assert forward.n_reactive == len(ref_f) and backward.n_reactive == len(ref_b)
    assert len(ref_f) > 0 and len(ref_b) > 0


def test_gated_harvest_is_bimodal_in_x():
    pot = ModelPotential.builtin("double_well_gated")
    store = harvest_reactive(pot, X_BASINS, 10_000, TrajectoryParams(0.0015, 1700), stride=10, seed=1)
    assert store.n_reactive > 0 and 0 < store.acceptance < 1
    spec = GridSpec((AxisSpec("x", -2, 2, 31),))
    d = persistence0(normalize(build_histogram(spec, store.columns(["x"]))))
    assert len(d) >= 2
    centres = sorted(cell_center(spec, f.birth_cell)[0] for f in d.features[:2])
    assert centres[0] < -0.5 and centres[1] > 0.5
    # the second mode is a real peak, not noise
    assert d[1].persistence > 0.2 * d[1].birth_value


def test_store_layout_and_target():
    pot = ModelPotential.builtin("double_well_1d", {"h": 1.0})
    tp = TrajectoryParams(2e-3, 600)
    full = harvest_reactive(pot, X_BASINS, 200, tp, stride=50, seed=2, batch_size=32)
    n_rec = 600 // 50 + 1
    assert len(full) == full.n_reactive * n_rec
    assert np.all(np.diff(full.traj_id) >= 0)
    assert full.step[:n_rec].tolist() == list(range(0, 601, 50))
    cut = harvest_reactive(pot, X_BASINS, 200, tp, stride=50, seed=2, batch_size=32, target_reactive=5)
    assert cut.n_reactive == 5
    ids = np.unique(full.traj_id)
    assert np.unique(cut.traj_id).tolist() == ids[:5].tolist()
    assert cut.n_launched == ids[4] + 1
    assert np.array_equal(cut.points, full.points[: 5 * n_rec])


def test_threads_do_not_change_the_store():
    pot = ModelPotential.builtin("double_well_gated")
    tp = TrajectoryParams(0.0015, 400)
    a = harvest_reactive(pot, X_BASINS, 300, tp, stride=20, seed=8, batch_size=64, threads=1)
    b = harvest_reactive(pot, X_BASINS, 300, tp, stride=20, seed=8, batch_size=64, threads=3)
    c = harvest_reactive(pot, X_BASINS, 300, tp, stride=20, seed=8, batch_size=300, threads=1)
    for other in (b, c):
        assert a.points.tobytes() == other.points.tobytes()
        assert np.array_equal(a.traj_id, other.traj_id)


def test_empty_harvest_warns():
    pot = ModelPotential.builtin("double_well_1d", {"h": 20.0})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        store = harvest_reactive(pot, X_BASINS, 10, TrajectoryParams(1e-3, 50), seed=0)
    assert len(store) == 0 and store.acceptance == 0
    assert any(issubclass(w.category, RuntimeWarning) for w in caught)


def test_harvest_input_errors():
    pot = ModelPotential.builtin("double_well_1d")
    tp = TrajectoryParams(1e-3, 10)
    with pytest.raises(InputError):
        harvest_reactive(pot, X_BASINS, 10, tp, stride=0)
    with pytest.raises(InputError):
        harvest_reactive(pot, X_BASINS, 0, tp)
    with pytest.raises(InputError):
        harvest_reactive(pot, X_BASINS, 10, tp, start={"nope": 1.0})
