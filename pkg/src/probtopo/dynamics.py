"""Overdamped Langevin dynamics on analytic model potentials.

The integrator is Euler-Maruyama,

    x <- x - (dt / gamma) grad V(x) + sqrt(2 kT dt / gamma) xi,

with ``k_B = 1`` so that ``temperature`` is in energy units.  Every trajectory
owns a Philox stream keyed by ``(seed, purpose, id)``; batches are fixed in
size and the streams are independent, so results do not depend on the
number of worker threads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import InputError, IntegrationError
from .rng import HARVEST, StreamBank, keyed_stream

__all__ = [
    "ModelPotential",
    "BasinSpec",
    "Basins",
    "Trajectory",
    "TrajectoryParams",
    "ConformationStore",
    "REACHED_PRODUCT",
    "REACHED_REACTANT",
    "TIMEOUT",
    "builtin_potentials",
    "integrate",
    "classify",
    "run_to_basins",
    "harvest_reactive",
]

REACHED_PRODUCT = "reached-product"
REACHED_REACTANT = "reached-reactant"
TIMEOUT = "timeout"

_INTEGRATE = 3


# -- potentials ---------------------------------------------------------------

def _dw1d(p):
    h = p["h"]

    def energy(x):
        return h * (x[:, 0] ** 2 - 1.0) ** 2

    def gradient(x):
        return (4.0 * h * x[:, 0] * (x[:, 0] ** 2 - 1.0))[:, None]

    return energy, gradient


def _gated(p):
    h, g, w, s, c, ky, kq = (p[k] for k in ("h", "g", "w", "s", "c", "ky", "kq"))

    def energy(x):
        gate = np.exp(-x[:, 1] ** 2 / w**2)
        env = np.exp(-x[:, 0] ** 2 / s**2)
        v = (h * (x[:, 0] ** 2 - 1.0) ** 2 + g * (1.0 - gate) * env
             + 0.5 * ky * x[:, 1] ** 2 + c * x[:, 2] ** 2)
        if kq:
            v = v + 0.5 * kq * (x[:, 3] - x[:, 1]) ** 2
        return v

    def gradient(x):
        xx, yy = x[:, 0], x[:, 1]
        gate = np.exp(-yy * yy / w**2)
        env = np.exp(-xx * xx / s**2)
        out = np.empty_like(x)
        out[:, 0] = 4.0 * h * xx * (xx * xx - 1.0) - 2.0 * g * (1.0 - gate) * env * xx / s**2
        out[:, 1] = 2.0 * g * gate * env * yy / w**2 + ky * yy
        out[:, 2] = 2.0 * c * x[:, 2]
        if kq:
            pull = kq * (x[:, 3] - yy)
            out[:, 1] -= pull
            out[:, 3] = pull
        return out

    return energy, gradient


def _harmonic(p):
    k = p["k"]

    def energy(x):
        return 0.5 * k * np.sum(x * x, axis=1)

    def gradient(x):
        return k * x

    return energy, gradient


# name -> (factory, default params, axis names given the params)
_BUILTINS = {
    "double_well_1d": (_dw1d, {"h": 3.0}, lambda p: ("x",)),
    "double_well_gated": (
        _gated,
        {"h": 3.0, "g": 6.0, "w": 0.3, "s": 0.35, "c": 2.0, "ky": 1.0, "kq": 0.0},
        lambda p: ("x", "y", "z", "q") if p["kq"] else ("x", "y", "z"),
    ),
    "harmonic": (
        _harmonic,
        {"k": 1.0, "dim": 1},
        lambda p: ("x",) if int(p["dim"]) == 1 else tuple(f"x{i}" for i in range(int(p["dim"]))),
    ),
}


def builtin_potentials() -> tuple:
    return tuple(_BUILTINS)


@dataclass(frozen=True, eq=False)
class ModelPotential:
    """A built-in analytic potential.

    ``double_well_gated`` reads

        V = h (x^2 - 1)^2 + g (1 - exp(-y^2/w^2)) exp(-x^2/s^2)
            + ky/2 y^2 + c z^2 + kq/2 (q - y)^2

    The ``ky`` term keeps the gating coordinate bounded; ``kq > 0`` adds a
    fourth coordinate ``q`` that is elastically tied to ``y`` and serves as a
    decoy.  Integrating out ``q`` leaves the ``(x, y, z)`` distribution
    unchanged.
    """

    name: str
    params: Mapping[str, float]
    dim: int
    names: tuple
    _energy: object = field(repr=False)
    _gradient: object = field(repr=False)

    @classmethod
    def builtin(cls, name: str, params: Optional[Mapping[str, float]] = None) -> "ModelPotential":
        if name not in _BUILTINS:
            raise InputError(f"unknown potential {name!r}; built-ins are {list(_BUILTINS)}")
        factory, defaults, axis_names = _BUILTINS[name]
        merged = dict(defaults)
        for k, v in (params or {}).items():
            if k not in defaults:
                raise InputError(f"potential {name!r} has no parameter {k!r}")
            try:
                merged[k] = float(v)
            except (TypeError, ValueError):
                raise InputError(f"parameter {k!r} must be a number, got {v!r}") from None
            if not math.isfinite(merged[k]):
                raise InputError(f"parameter {k!r} must be finite")
        if name == "double_well_gated" and (merged["w"] <= 0 or merged["s"] <= 0):
            raise InputError("gate widths w and s must be positive")
        if name == "harmonic" and (merged["dim"] < 1 or merged["dim"] != int(merged["dim"])):
            raise InputError("harmonic dim must be a positive integer")
        names = axis_names(merged)
        energy, gradient = factory(merged)
        return cls(name, merged, len(names), names, energy, gradient)

    def _as_batch(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(1, -1)
        if x.shape[1] != self.dim:
            raise InputError(f"{self.name} expects {self.dim} coordinates, got {x.shape[1]}")
        return x

    def energy(self, x):
        x = np.asarray(x, dtype=float)
        e = self._energy(self._as_batch(x))
        return e[0] if x.ndim == 1 else e

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        g = self._gradient(self._as_batch(x))
        return g[0] if x.ndim == 1 else g

    def to_dict(self) -> dict:
        return {"name": self.name, "params": dict(self.params)}


# -- basins -------------------------------------------------------------------

@dataclass(frozen=True)
class BasinSpec:
    """Axis-aligned box; axes not listed in ``box`` are wildcards."""

    name: str
    box: Mapping[str, tuple]

    def __post_init__(self):
        clean = {}
        for axis, iv in dict(self.box).items():
            if iv is None:
                continue
            lo, hi = (float(v) for v in iv)
            if not lo <= hi:
                raise InputError(f"basin {self.name!r}: empty interval on {axis!r}")
            clean[axis] = (lo, hi)
        object.__setattr__(self, "box", clean)

    def contains(self, points, names: Sequence[str]) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.ones(len(pts), dtype=bool)
        for axis, (lo, hi) in self.box.items():
            try:
                j = list(names).index(axis)
            except ValueError:
                raise InputError(f"basin {self.name!r} refers to unknown axis {axis!r}") from None
            inside &= (pts[:, j] >= lo) & (pts[:, j] <= hi)
        return inside

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in self.box.items()}


@dataclass(frozen=True)
class Basins:
    reactant: BasinSpec
    product: BasinSpec

    def __post_init__(self):
        shared = set(self.reactant.box) & set(self.product.box)
        disjoint = any(self.reactant.box[a][1] < self.product.box[a][0]
                       or self.product.box[a][1] < self.reactant.box[a][0] for a in shared)
        if not disjoint:
            raise InputError("reactant and product boxes overlap")

    @classmethod
    def from_dict(cls, d: Mapping) -> "Basins":
        try:
            return cls(BasinSpec("reactant", d["reactant"]), BasinSpec("product", d["product"]))
        except KeyError as exc:
            raise InputError(f"basins need {exc} entry") from None

    def swapped(self) -> "Basins":
        return Basins(BasinSpec("reactant", self.product.box), BasinSpec("product", self.reactant.box))

    def to_dict(self) -> dict:
        return {"reactant": self.reactant.to_dict(), "product": self.product.to_dict()}


# -- trajectories -------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryParams:
    dt: float
    steps: int
    temperature: float = 1.0
    friction: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InputError(f"dt must be positive, got {self.dt}")
        if int(self.steps) != self.steps or self.steps < 1:
            raise InputError(f"steps must be a positive integer, got {self.steps}")
        if not (math.isfinite(self.friction) and self.friction > 0):
            raise InputError(f"friction must be positive, got {self.friction}")
        if not (math.isfinite(self.temperature) and self.temperature >= 0):
            raise InputError(f"temperature must be non-negative, got {self.temperature}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def drift(self) -> float:
        return self.dt / self.friction

    @property
    def amplitude(self) -> float:
        return math.sqrt(2.0 * self.temperature * self.dt / self.friction)


@dataclass(frozen=True, eq=False)
class Trajectory:
    points: np.ndarray
    dt: float
    seed: int
    stride: int = 1
    outcome: Optional[str] = None

    def __post_init__(self):
        if len(self.points) == 0:
            raise InputError("trajectory has no points")

    def __len__(self):
        return len(self.points)


def _check_finite(x, step):
    if not np.all(np.isfinite(x)):
        raise IntegrationError(f"non-finite configuration at step {step}; reduce dt", step=step)


def _euler(potential, x, tp, noise):
    """Yield the batch ``x`` after each of ``len(noise)`` steps.

    ``noise`` has shape ``(steps, n, d)``; at zero temperature it may have a
    zero-size last axis since it is never read.
    """
    a, b = tp.drift, tp.amplitude
    grad = potential._gradient
    for k in range(len(noise)):
        x = x - a * grad(x)
        if b:
            x = x + b * noise[k]
        yield x


def integrate(potential: ModelPotential, x0, steps: int, dt: float, temperature: float = 1.0,
              friction: float = 1.0, seed: int = 0, stride: int = 1) -> Trajectory:
    """Single trajectory of ``steps`` Euler-Maruyama steps.

    The returned points include ``x0`` and every ``stride``-th step after it.
    The same arguments always produce the same bits.
    """
    tp = TrajectoryParams(dt, steps, temperature, friction)
    if int(stride) != stride or stride < 1:
        raise InputError(f"stride must be a positive integer, got {stride}")
    x = potential._as_batch(x0).copy()
    _check_finite(x, 0)
    gen = keyed_stream(seed, _INTEGRATE)
    out = [x[0].copy()]
    done = 0
    chunk = 1024
    while done < tp.steps:
        n = min(chunk, tp.steps - done)
        noise = gen.standard_normal((n, 1, potential.dim)) if tp.amplitude else np.zeros((n, 1, 0))
        for k, x in enumerate(_euler(potential, x, tp, noise), start=done + 1):
            _check_finite(x, k)
            if k % stride == 0:
                out.append(x[0].copy())
        done += n
    return Trajectory(np.array(out), dt, seed, stride)


def classify(trajectory, basins: Basins, names: Sequence[str]) -> tuple:
    """First basin entered, scanning points in order.

    Returns ``(outcome, step)`` where ``step`` counts integration steps (point
    index times stride), or ``(TIMEOUT, None)``.
    """
    pts = trajectory.points if isinstance(trajectory, Trajectory) else np.asarray(trajectory)
    stride = trajectory.stride if isinstance(trajectory, Trajectory) else 1
    in_r = basins.reactant.contains(pts, names)
    in_p = basins.product.contains(pts, names)
    hit = np.flatnonzero(in_r | in_p)
    if hit.size == 0:
        return TIMEOUT, None
    i = int(hit[0])
    return (REACHED_PRODUCT if in_p[i] else REACHED_REACTANT), i * stride


def run_to_basins(potential: ModelPotential, basins: Basins, x0, tp: TrajectoryParams,
                  bank: StreamBank, chunk: int = 256) -> tuple:
    """Propagate each start until it first enters a basin or ``tp.steps`` run out.

    Returns ``(outcome, step)`` arrays: outcome is 1 for product, 0 for
    reactant and -1 for timeout.
    """
    x = potential._as_batch(x0).copy()
    n = len(x)
    if len(bank) != n:
        raise InputError("need one noise stream per start")
    names = potential.names
    outcome = np.full(n, -1, dtype=np.int8)
    when = np.full(n, -1, dtype=np.int64)
    _check_finite(x, 0)
    outcome[basins.reactant.contains(x, names)] = 0
    outcome[basins.product.contains(x, names)] = 1
    when[outcome >= 0] = 0
    active = np.flatnonzero(outcome < 0)
    done = 0
    while active.size and done < tp.steps:
        m = min(chunk, tp.steps - done)
        noise = bank.normal(m, potential.dim, active) if tp.amplitude else np.zeros((m, 0, 0))
        y = x[active]
        live = np.ones(active.size, dtype=bool)
        for k, y in enumerate(_euler(potential, y, tp, noise), start=done + 1):
            _check_finite(y, k)
            in_p = live & basins.product.contains(y, names)
            in_r = live & basins.reactant.contains(y, names)
            if in_p.any() or in_r.any():
                outcome[active[in_p]] = 1
                outcome[active[in_r]] = 0
                when[active[in_p | in_r]] = k
                live &= ~(in_p | in_r)
        x[active] = y
        active = active[live]
        done += m
    return outcome, when


# -- harvesting ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConformationStore:
    """Stored points of reactive trajectories, ordered by trajectory id then step."""

    points: np.ndarray
    traj_id: np.ndarray
    step: np.ndarray
    names: tuple
    n_launched: int = 0
    n_reactive: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, len(self.names))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "traj_id", np.asarray(self.traj_id, dtype=np.int64))
        object.__setattr__(self, "step", np.asarray(self.step, dtype=np.int64))
        if not len(pts) == len(self.traj_id) == len(self.step):
            raise InputError("store columns have different lengths")

    def __len__(self):
        return len(self.points)

    @property
    def acceptance(self) -> float:
        return self.n_reactive / self.n_launched if self.n_launched else 0.0

    def columns(self, names: Sequence[str]) -> np.ndarray:
        idx = []
        for n in names:
            if n not in self.names:
                raise InputError(f"store has no coordinate {n!r}; available: {list(self.names)}")
            idx.append(self.names.index(n))
        return self.points[:, idx]


def _start_points(potential, basin, start, u):
    """Jittered starts: basin centre (or ``start``) plus uniform noise spanning
    half the box width on every boxed axis."""
    names = potential.names
    base = np.zeros(potential.dim)
    half = np.zeros(potential.dim)
    for j, n in enumerate(names):
        if n in basin.box:
            lo, hi = basin.box[n]
            base[j] = 0.5 * (lo + hi) if not (math.isinf(lo) or math.isinf(hi)) else 0.0
            half[j] = 0.25 * (hi - lo) if math.isfinite(hi - lo) else 0.0
    for n, v in (start or {}).items():
        if n not in names:
            raise InputError(f"start refers to unknown axis {n!r}")
        base[names.index(n)] = float(v)
    return base + half * (2.0 * u - 1.0)


def _harvest_batch(potential, basins, tp, stride, seed, ids, start):
    bank = StreamBank(seed, HARVEST, ids)
    x = _start_points(potential, basins.reactant, start, bank.uniform(potential.dim))
    names = potential.names
    n_rec = tp.steps // stride + 1
    rec = np.empty((n_rec, len(ids), potential.dim))
    rec[0] = x
    hit = np.zeros(len(ids), dtype=bool)
    done = 0
    while done < tp.steps:
        m = min(256, tp.steps - done)
        noise = bank.normal(m, potential.dim) if tp.amplitude else np.zeros((m, 0, 0))
        for k, x in enumerate(_euler(potential, x, tp, noise), start=done + 1):
            _check_finite(x, k)
            hit |= basins.product.contains(x, names)
            if k % stride == 0:
                rec[k // stride] = x
        done += m
    keep = np.flatnonzero(hit)
    return ids[keep], rec[:, keep, :]


def harvest_reactive(potential: ModelPotential, basins: Basins, n_trajectories: int,
                     params: TrajectoryParams, stride: int = 1, seed: int = 0,
                     target_reactive: Optional[int] = None, start: Optional[Mapping] = None,
                     batch_size: int = 1024, threads: int = 1) -> ConformationStore:
    """Launch trajectories from jittered reactant starts and keep the reactive ones.

    A trajectory is reactive if it enters the product box at any step.  All
    its points at multiples of ``stride`` (including the start) are stored.
    If ``target_reactive`` is given the harvest stops, in trajectory-id order,
    at the trajectory that completes the target; ``n_trajectories`` is then a
    budget.

    Returns
    -------
    ConformationStore
        Possibly empty, in which case a warning is issued.
    """
    if int(stride) != stride or stride < 1:
        raise InputError(f"stride must be a positive integer, got {stride}")
    if int(n_trajectories) != n_trajectories or n_trajectories < 1:
        raise InputError(f"n_trajectories must be a positive integer, got {n_trajectories}")
    if target_reactive is not None and target_reactive < 1:
        raise InputError("target_reactive must be positive")
    stride, n_trajectories = int(stride), int(n_trajectories)
    threads = max(int(threads), 1)
    batches = [np.arange(i, min(i + batch_size, n_trajectories), dtype=np.int64)
               for i in range(0, n_trajectories, batch_size)]

    kept_ids, kept_rec = [], []
    total = 0
    launched = n_trajectories

    def run(ids):
        return _harvest_batch(potential, basins, params, stride, seed, ids, start)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        for w in range(0, len(batches), threads):
            wave = batches[w:w + threads]
            results = pool.map(run, wave) if threads > 1 else map(run, wave)
            for ids, rec in results:
                kept_ids.append(ids)
                kept_rec.append(rec)
                total += len(ids)
            if target_reactive is not None and total >= target_reactive:
                break

    ids = np.concatenate(kept_ids) if kept_ids else np.empty(0, np.int64)
    n_rec = params.steps // stride + 1
    rec = (np.concatenate(kept_rec, axis=1) if kept_rec
           else np.empty((n_rec, 0, potential.dim)))
    if target_reactive is not None and len(ids) >= target_reactive:
        ids, rec = ids[:target_reactive], rec[:, :target_reactive]
        launched = int(ids[-1]) + 1

    n = len(ids)
    if n == 0:
        warnings.warn(f"no reactive trajectories among {launched} launched", RuntimeWarning,
                      stacklevel=2)
    points = np.transpose(rec, (1, 0, 2)).reshape(-1, potential.dim)
    traj = np.repeat(ids, n_rec)
    step = np.tile(np.arange(n_rec, dtype=np.int64) * stride, n)
    return ConformationStore(points, traj, step, potential.names, launched, n)
