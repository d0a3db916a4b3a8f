"""Binning of sample points onto d-dimensional grids with periodic axes.

Values live on the top-dimensional cells of the grid.  Cells are addressed
either by their coordinate tuple or by the row-major (C order) linear index;
that encoding is fixed so that indices written to disk are portable.

Bins are half-open, ``[lo + k*width, lo + (k+1)*width)``.  Periodic axes are
circles of circumference ``hi - lo``: points are wrapped into ``[lo, hi)``
before binning and bin ``0`` is adjacent to bin ``bins - 1``.  Points outside
``[lo, hi)`` on a non-periodic axis are discarded and counted, never clamped.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import GridSizeError, InputError, NormalizationError

__all__ = [
    "AxisSpec",
    "GridSpec",
    "CellIndex",
    "ProbabilitySurface",
    "HistogramAccumulator",
    "bin_points",
    "build_histogram",
    "normalize",
    "marginalize",
    "cell_center",
]


@dataclass(frozen=True)
class AxisSpec:
    name: str
    lo: float
    hi: float
    bins: int
    periodic: bool = False

    def __post_init__(self):
        if not self.name:
            raise InputError("axis name must be non-empty")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or not self.lo < self.hi:
            raise InputError(f"axis {self.name!r}: need finite lo < hi, got [{self.lo}, {self.hi})")
        if int(self.bins) != self.bins or self.bins < 1:
            raise InputError(f"axis {self.name!r}: bins must be a positive integer, got {self.bins}")
        object.__setattr__(self, "bins", int(self.bins))
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "periodic", bool(self.periodic))

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins

    def wrap(self, x):
        """Map ``x`` into ``[lo, hi)`` if the axis is periodic; identity otherwise."""
        if not self.periodic:
            return x
        return self.lo + np.mod(np.asarray(x, dtype=float) - self.lo, self.length)

    def bin_index(self, x):
        """Bin index of each value, and a mask of values that fell inside the axis."""
        x = self.wrap(np.asarray(x, dtype=float))
        scaled = (x - self.lo) / self.length * self.bins
        with np.errstate(invalid="ignore"):
            idx = np.floor(scaled)
        if self.periodic:
            # np.mod can round up to exactly `length`; that point is lo again.
            idx = np.where(idx >= self.bins, 0, idx)
            valid = np.isfinite(x)
        else:
            valid = (x >= self.lo) & (x < self.hi)
        # x just below hi can round up to `bins`
        idx = np.clip(np.where(valid, idx, 0), 0, self.bins - 1).astype(np.int64)
        return idx, valid

    def to_dict(self) -> dict:
        return {"name": self.name, "lo": self.lo, "hi": self.hi, "bins": self.bins,
                "periodic": self.periodic}

    @classmethod
    def from_dict(cls, d: dict) -> "AxisSpec":
        try:
            return cls(d["name"], float(d["lo"]), float(d["hi"]), d["bins"], bool(d.get("periodic", False)))
        except KeyError as exc:
            raise InputError(f"axis entry missing field {exc}") from None


class CellIndex(NamedTuple):
    coords: tuple
    linear: int


@dataclass(frozen=True)
class GridSpec:
    axes: tuple

    def __post_init__(self):
        axes = tuple(self.axes)
        if not axes:
            raise InputError("grid needs at least one axis")
        for a in axes:
            if not isinstance(a, AxisSpec):
                raise InputError(f"expected AxisSpec, got {type(a).__name__}")
        names = [a.name for a in axes]
        if len(set(names)) != len(names):
            raise InputError(f"axis names must be unique: {names}")
        size = math.prod(a.bins for a in axes)
        if size > np.iinfo(np.intp).max // 8:
            raise GridSizeError(f"grid of {size} cells exceeds the addressable range")
        object.__setattr__(self, "axes", axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(a.bins for a in self.axes)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    @property
    def names(self) -> tuple:
        return tuple(a.name for a in self.axes)

    @property
    def periodic(self) -> tuple:
        return tuple(a.periodic for a in self.axes)

    def axis(self, name: str) -> AxisSpec:
        return self.axes[self.index_of(name)]

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise InputError(f"unknown axis {name!r}; grid has {list(self.names)}") from None

    def cell(self, coords: Sequence[int]) -> CellIndex:
        coords = tuple(int(c) for c in coords)
        if len(coords) != self.ndim:
            raise InputError(f"cell needs {self.ndim} coordinates, got {len(coords)}")
        for c, a in zip(coords, self.axes):
            if not 0 <= c < a.bins:
                raise InputError(f"coordinate {c} out of range for axis {a.name!r} ({a.bins} bins)")
        return CellIndex(coords, int(np.ravel_multi_index(coords, self.shape)))

    def cell_from_linear(self, linear: int) -> CellIndex:
        linear = int(linear)
        if not 0 <= linear < self.size:
            raise InputError(f"linear index {linear} out of range [0, {self.size})")
        coords = tuple(int(c) for c in np.unravel_index(linear, self.shape))
        return CellIndex(coords, linear)

    def locate(self, point: Sequence[float]) -> CellIndex:
        """Cell containing ``point``; raises if it lies outside the grid."""
        lin, valid = bin_points(self, np.asarray(point, dtype=float).reshape(1, -1))
        if not valid[0]:
            raise InputError(f"point {tuple(point)} lies outside the grid")
        return self.cell_from_linear(lin[0])

    def to_dict(self) -> dict:
        return {"axes": [a.to_dict() for a in self.axes]}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        if "axes" not in d:
            raise InputError("grid spec needs an 'axes' list")
        return cls(tuple(AxisSpec.from_dict(a) for a in d["axes"]))


@dataclass(frozen=True, eq=False)
class ProbabilitySurface:
    """Histogram mass on the cells of a grid.

    ``mass`` is an integer count array until :func:`normalize` turns it into
    float64 probabilities.  ``discarded`` counts samples that fell outside a
    non-periodic axis.
    """

    spec: GridSpec
    mass: np.ndarray
    total_samples: int = 0
    discarded: int = 0
    normalized: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mass = np.asarray(self.mass)
        if mass.shape != self.spec.shape:
            raise InputError(f"mass shape {mass.shape} does not match grid {self.spec.shape}")
        if np.any(mass < 0) or not np.all(np.isfinite(mass)):
            raise InputError("surface mass must be finite and non-negative")
        mass = mass.copy()
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    @property
    def is_empty(self) -> bool:
        return not np.any(self.mass)

    @property
    def flat(self) -> np.ndarray:
        return self.mass.reshape(-1)

    def value(self, cell: CellIndex) -> float:
        return float(self.flat[cell.linear])


def bin_points(spec: GridSpec, points) -> tuple:
    """Row-major cell index of each point, plus an in-range mask."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if spec.ndim == 1 else pts.reshape(1, -1)
    if pts.ndim != 2 or pts.shape[1] != spec.ndim:
        raise InputError(f"samples must have {spec.ndim} components, got shape {pts.shape}")
    linear = np.zeros(len(pts), dtype=np.int64)
    valid = np.ones(len(pts), dtype=bool)
    for k, axis in enumerate(spec.axes):
        idx, ok = axis.bin_index(pts[:, k])
        linear = linear * axis.bins + idx
        valid &= ok
    return linear, valid


class HistogramAccumulator:
    """Integer count accumulator; partial accumulators merge by addition."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.counts = np.zeros(spec.size, dtype=np.int64)
        self.total = 0
        self.discarded = 0

    def add(self, points) -> "HistogramAccumulator":
        linear, valid = bin_points(self.spec, points)
        self.counts += np.bincount(linear[valid], minlength=self.spec.size)
        self.total += int(valid.sum())
        self.discarded += int((~valid).sum())
        return self

    def merge(self, other: "HistogramAccumulator") -> "HistogramAccumulator":
        if other.spec != self.spec:
            raise InputError("cannot merge histograms over different grids")
        self.counts += other.counts
        self.total += other.total
        self.discarded += other.discarded
        return self

    def surface(self) -> ProbabilitySurface:
        return ProbabilitySurface(self.spec, self.counts.reshape(self.spec.shape),
                                  total_samples=self.total, discarded=self.discarded)


def _chunks(samples, chunk_size):
    if isinstance(samples, np.ndarray):
        for i in range(0, max(len(samples), 1), chunk_size):
            yield samples[i:i + chunk_size]
        return
    it = iter(samples)
    while True:
        block = list(itertools.islice(it, chunk_size))
        if not block:
            return
        yield block


def build_histogram(spec: GridSpec, samples: Iterable, chunk_size: int = 1 << 16) -> ProbabilitySurface:
    """Raw-count histogram of ``samples`` over ``spec``.

    ``samples`` may be an ``(n, d)`` array or any iterable of d-tuples.  The
    result is unnormalized; an empty stream gives an all-zero surface with
    ``is_empty`` set.
    """
    acc = HistogramAccumulator(spec)
    for block in _chunks(samples, chunk_size):
        arr = np.asarray(block, dtype=float)
        if arr.size == 0:
            continue
        if arr.ndim == 1 and spec.ndim > 1:
            raise InputError(f"samples must have {spec.ndim} components")
        acc.add(arr.reshape(len(arr), -1))
    return acc.surface()


def normalize(surface: ProbabilitySurface) -> ProbabilitySurface:
    mass = np.asarray(surface.mass, dtype=np.float64)
    total = math.fsum(mass.ravel())
    if not total > 0:
        raise NormalizationError("cannot normalize an all-zero surface")
    out = mass / total
    return ProbabilitySurface(surface.spec, out, surface.total_samples, surface.discarded,
                              normalized=True, meta=dict(surface.meta))


def marginalize(surface: ProbabilitySurface, keep: Sequence[str]) -> ProbabilitySurface:
    """Sum out every axis not in ``keep``; output axes follow ``keep``'s order."""
    keep = list(keep)
    if not keep:
        raise InputError("keep must name at least one axis")
    if len(set(keep)) != len(keep):
        raise InputError(f"duplicate axis names in {keep}")
    spec = surface.spec
    kept = [spec.index_of(n) for n in keep]
    dropped = tuple(i for i in range(spec.ndim) if i not in kept)
    mass = surface.mass.sum(axis=dropped) if dropped else surface.mass
    remaining = sorted(kept)
    mass = np.transpose(mass, [remaining.index(i) for i in kept])
    out_spec = GridSpec(tuple(spec.axes[i] for i in kept))
    return ProbabilitySurface(out_spec, mass, surface.total_samples, surface.discarded,
                              normalized=surface.normalized, meta=dict(surface.meta))


def cell_center(spec: GridSpec, idx) -> tuple:
    if isinstance(idx, CellIndex):
        idx = spec.cell(idx.coords)
    elif isinstance(idx, (int, np.integer)):
        idx = spec.cell_from_linear(idx)
    else:
        idx = spec.cell(idx)
    return tuple(a.lo + (c + 0.5) * a.width for a, c in zip(spec.axes, idx.coords))
