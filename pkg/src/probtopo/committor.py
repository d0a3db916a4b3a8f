"""Committor estimates for conformations drawn from one grid cell."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Basins, ConformationStore, ModelPotential, TrajectoryParams, run_to_basins
from .errors import EmptySelectionError, EstimationError, InputError
from .grid import CellIndex, GridSpec, bin_points
from .rng import COMMITTOR, SELECTION, StreamBank, keyed_stream

__all__ = [
    "CommittorReport",
    "HIST_BINS",
    "TSE",
    "REACTANT_COMMITTED",
    "PRODUCT_COMMITTED",
    "MIXED",
    "p_histogram",
    "select_conformations",
    "estimate",
    "verdict",
    "max_band_fraction",
]

TSE = "TSE"
REACTANT_COMMITTED = "reactant-committed"
PRODUCT_COMMITTED = "product-committed"
MIXED = "mixed"

HIST_BINS = 21
# centres 0, 0.05, ..., 1 so that 0, 0.5 and 1 each sit in the middle of a bin
_EDGES = np.linspace(-0.025, 1.025, HIST_BINS + 1)


def p_histogram(p) -> np.ndarray:
    idx = np.clip(np.searchsorted(_EDGES, np.asarray(p, dtype=float), side="right") - 1,
                  0, HIST_BINS - 1)
    return np.bincount(idx, minlength=HIST_BINS).astype(np.int64)


@dataclass(frozen=True, eq=False)
class CommittorReport:
    start_cell: CellIndex
    n_conformations: int
    trials_per_conformation: int
    p_values: np.ndarray
    histogram: np.ndarray
    mean_p: float
    timeout_fraction: float
    n_unresolved: int = 0
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "start_cell": list(self.start_cell.coords),
            "start_linear": self.start_cell.linear,
            "n_conformations": self.n_conformations,
            "trials_per_conformation": self.trials_per_conformation,
            "p_values": [float(p) for p in self.p_values],
            "histogram": [int(c) for c in self.histogram],
            "mean_p": float(self.mean_p),
            "timeout_fraction": float(self.timeout_fraction),
            "n_unresolved": self.n_unresolved,
            **self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CommittorReport":
        p = np.asarray(d["p_values"], dtype=float)
        core = {"start_cell", "start_linear", "n_conformations", "trials_per_conformation",
                "p_values", "histogram", "mean_p", "timeout_fraction", "n_unresolved"}
        return cls(CellIndex(tuple(d["start_cell"]), int(d["start_linear"])),
                   int(d["n_conformations"]), int(d["trials_per_conformation"]), p,
                   np.asarray(d["histogram"], dtype=np.int64), float(d["mean_p"]),
                   float(d["timeout_fraction"]), int(d.get("n_unresolved", 0)),
                   {k: v for k, v in d.items() if k not in core})


def select_conformations(store: ConformationStore, spec: GridSpec, cell: CellIndex,
                         max_n: int, seed: int = 0) -> np.ndarray:
    """Up to ``max_n`` stored points binned into ``cell``, drawn without replacement.

    The grid axes are looked up in the store by name; the full configuration
    of each chosen point is returned.
    """
    if len(store) == 0:
        raise InputError("conformation store is empty")
    if max_n < 1:
        raise InputError("max_n must be positive")
    linear, valid = bin_points(spec, store.columns(spec.names))
    matches = np.flatnonzero(valid & (linear == cell.linear))
    if matches.size == 0:
        raise EmptySelectionError(f"no stored conformations in cell {tuple(cell.coords)}")
    if matches.size > max_n:
        gen = keyed_stream(seed, SELECTION, cell.linear)
        matches = np.sort(gen.choice(matches, size=int(max_n), replace=False))
    return store.points[matches]


def estimate(potential: ModelPotential, basins: Basins, conformations, trials: int,
             params: TrajectoryParams, seed: int = 0, start_cell: CellIndex | None = None,
             chunk: int = 256) -> CommittorReport:
    """Fraction of trials from each conformation that reach product first.

    Trial ``t`` of conformation ``i`` uses the noise stream keyed by
    ``(seed, i, t)``.  ``params.steps`` is the per-trial step limit; trials
    that hit it are timeouts, excluded from ``p`` and counted in
    ``timeout_fraction``.  A conformation with no resolved trial is dropped.
    """
    conf = potential._as_batch(conformations)
    if int(trials) != trials or trials < 1:
        raise InputError(f"trials must be a positive integer, got {trials}")
    if len(conf) == 0:
        raise InputError("no conformations given")
    trials = int(trials)
    n = len(conf)
    starts = np.repeat(conf, trials, axis=0)
    keys = [(i, t) for i in range(n) for t in range(trials)]
    bank = StreamBank(seed, COMMITTOR, keys)
    outcome, _ = run_to_basins(potential, basins, starts, params, bank, chunk=chunk)
    outcome = outcome.reshape(n, trials)
    resolved = (outcome >= 0).sum(axis=1)
    if not resolved.any():
        raise EstimationError(f"all {n * trials} trials timed out after {params.steps} steps; "
                              "raise the step limit")
    reached = (outcome == 1).sum(axis=1)
    ok = resolved > 0
    p = reached[ok] / resolved[ok]
    cell = start_cell if start_cell is not None else CellIndex((), -1)
    return CommittorReport(cell, int(ok.sum()), trials, p, p_histogram(p),
                           math.fsum(p) / len(p), float((outcome < 0).mean()),
                           int((~ok).sum()))


def verdict(report, band=(0.4, 0.6)) -> str:
    """Classify a committor distribution.

    TSE when at least half of the ``p`` values lie in ``band``; committed to
    one side when at least 90 % lie at or below 0.1 (or at or above 0.9);
    mixed otherwise.
    """
    p = np.asarray(report.p_values if isinstance(report, CommittorReport) else report, dtype=float)
    lo, hi = band
    if not 0 < lo < hi < 1:
        raise InputError(f"band must satisfy 0 < lo < hi < 1, got {band}")
    if p.size == 0:
        raise InputError("committor report has no p values")
    if np.mean((p >= lo) & (p <= hi)) >= 0.5:
        return TSE
    if np.mean(p <= 0.1) >= 0.9:
        return REACTANT_COMMITTED
    if np.mean(p >= 0.9) >= 0.9:
        return PRODUCT_COMMITTED
    return MIXED


def max_band_fraction(p, width: float = 0.2) -> float:
    """Largest share of ``p`` values inside any closed window ``[t, t + width]``."""
    ps = np.sort(np.asarray(p, dtype=float))
    if ps.size == 0:
        raise InputError("no p values")
    # an optimal window can always be slid to start at a data point
    hi = np.searchsorted(ps, ps + width * (1 + 1e-12), side="right")
    return float(np.max(hi - np.arange(ps.size)) / ps.size)
