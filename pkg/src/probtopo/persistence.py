"""0-dimensional persistent homology of superlevel-set filtrations.

The surface is treated as a cubical complex whose top-dimensional cells
carry the probability values.  Lowering the threshold from the global maximum
to zero adds cells one at a time in *filtration order* (decreasing value,
ties broken by ascending row-major index).  Two cells are adjacent when they
share a face, i.e. they differ by one step along a single axis, with
wraparound on periodic axes.

A new connected component is born at every cell none of whose neighbours
has been added yet (a peak).  When a cell joins two or more components the
elder rule applies: the component whose birth came first in filtration order
survives, every other one dies at the joining cell (its ridge).  The last
surviving component is given death value 0 and no death cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components, maximum_bipartite_matching

from .errors import DomainError, EmptyDiagramError, InputError
from .grid import CellIndex, GridSpec, ProbabilitySurface, cell_center
from .reduction import symmetric_eigen

__all__ = [
    "TIE_RULE",
    "Feature",
    "PersistenceDiagram",
    "face_neighbors",
    "filtration_order",
    "persistence0",
    "persistence0_bruteforce",
    "betti0_at",
    "hessian_signature",
    "bottleneck_distance",
]

TIE_RULE = "value-desc/linear-index-asc"


@dataclass(frozen=True)
class Feature:
    birth_cell: CellIndex
    birth_value: float
    death_cell: Optional[CellIndex]
    death_value: float

    @property
    def persistence(self) -> float:
        return self.birth_value - self.death_value

    @property
    def immortal(self) -> bool:
        return self.death_cell is None

    def key(self) -> tuple:
        """Hashable summary used when comparing diagrams."""
        death = None if self.death_cell is None else self.death_cell.linear
        return (self.birth_cell.linear, self.birth_value, death, self.death_value)


def _sort_features(features):
    return sorted(features, key=lambda f: (-f.persistence, f.birth_cell.linear))


@dataclass(frozen=True)
class PersistenceDiagram:
    features: tuple
    spec: GridSpec
    tie_rule: str = TIE_RULE

    def __len__(self):
        return len(self.features)

    def __iter__(self):
        return iter(self.features)

    def __getitem__(self, i) -> Feature:
        return self.features[i]

    def pairs(self) -> np.ndarray:
        """``(n, 2)`` array of (birth, death) values."""
        if not self.features:
            return np.empty((0, 2))
        return np.array([(f.birth_value, f.death_value) for f in self.features])

    def alive_at(self, a: float) -> int:
        """Number of features with ``birth >= a > death``."""
        return sum(1 for f in self.features if f.birth_value >= a > f.death_value)

    def labels(self) -> list:
        """Table rows ``(label, kind, feature)``: each peak ``b_i`` is followed by its ridge ``d_i``."""
        rows = []
        for i, f in enumerate(self.features, start=1):
            rows.append((f"b{i}", "peak", f))
            if f.death_cell is not None:
                rows.append((f"d{i}", "ridge", f))
        return rows

    def resolve(self, label: str) -> CellIndex:
        """Cell of a ``b<i>`` (peak) or ``d<i>`` (ridge) label."""
        for name, kind, f in self.labels():
            if name == label:
                return f.birth_cell if kind == "peak" else f.death_cell
        available = [name for name, _, _ in self.labels()]
        shown = ", ".join(available[:20]) + (f", ... ({len(available)} in all)" if len(available) > 20 else "")
        raise InputError(f"unknown feature label {label!r}; available: {shown}")

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            feats.append({
                "birth_cell": list(f.birth_cell.coords),
                "birth_linear": f.birth_cell.linear,
                "birth_center": list(cell_center(self.spec, f.birth_cell)),
                "birth_value": f.birth_value,
                "death_cell": None if f.death_cell is None else list(f.death_cell.coords),
                "death_linear": None if f.death_cell is None else f.death_cell.linear,
                "death_center": None if f.death_cell is None else list(cell_center(self.spec, f.death_cell)),
                "death_value": f.death_value,
                "persistence": f.persistence,
            })
        return {"tie_rule": self.tie_rule, "spec": self.spec.to_dict(), "features": feats}

    @classmethod
    def from_dict(cls, d: dict) -> "PersistenceDiagram":
        spec = GridSpec.from_dict(d["spec"])
        feats = []
        for e in d["features"]:
            death = None if e["death_cell"] is None else spec.cell(e["death_cell"])
            feats.append(Feature(spec.cell(e["birth_cell"]), float(e["birth_value"]),
                                 death, float(e["death_value"])))
        return cls(tuple(feats), spec, d.get("tie_rule", TIE_RULE))


def face_neighbors(spec: GridSpec) -> np.ndarray:
    """``(size, 2*ndim)`` table of face-adjacent cells; ``-1`` marks a missing neighbour.

    On a periodic axis with fewer than three bins the same cell may appear
    twice (or be the cell itself); callers deduplicate.
    """
    shape = spec.shape
    lin = np.arange(spec.size).reshape(shape)
    cols = []
    for k, axis in enumerate(spec.axes):
        for step in (-1, 1):
            if axis.periodic:
                nb = np.roll(lin, -step, axis=k)
            else:
                nb = np.full(shape, -1, dtype=np.int64)
                src = [slice(None)] * len(shape)
                dst = [slice(None)] * len(shape)
                if step == 1:
                    dst[k], src[k] = slice(0, -1), slice(1, None)
                else:
                    dst[k], src[k] = slice(1, None), slice(0, -1)
                nb[tuple(dst)] = lin[tuple(src)]
            cols.append(nb.reshape(-1))
    return np.stack(cols, axis=1).astype(np.int64)


def _edges(spec: GridSpec) -> np.ndarray:
    """Each undirected face adjacency once, as ``(m, 2)`` linear pairs."""
    nb = face_neighbors(spec)
    src = np.repeat(np.arange(spec.size), nb.shape[1])
    dst = nb.reshape(-1)
    keep = (dst >= 0) & (src < dst)
    return np.stack([src[keep], dst[keep]], axis=1)


def _values(surface: ProbabilitySurface) -> np.ndarray:
    values = np.asarray(surface.mass, dtype=np.float64).reshape(-1)
    if values.size == 0 or np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InputError("malformed surface")
    return values


def filtration_order(surface: ProbabilitySurface) -> np.ndarray:
    """Linear cell indices by decreasing value, ties by ascending index."""
    values = _values(surface)
    return np.lexsort((np.arange(values.size), -values))


def persistence0(surface: ProbabilitySurface) -> PersistenceDiagram:
    """Union-find sweep over the filtration; see the module docstring."""
    values = _values(surface)
    if not np.any(values > 0):
        raise EmptyDiagramError("surface has no positive cell; persistence diagram is empty")
    spec = surface.spec
    order = filtration_order(surface).tolist()
    rank = np.empty(len(order), dtype=np.int64)
    rank[order] = np.arange(len(order))
    rank = rank.tolist()
    nbrs = face_neighbors(spec).tolist()
    vals = values.tolist()
    parent = [-1] * len(order)

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    deaths = []
    births = []
    for c in order:
        roots = set()
        for nb in nbrs[c]:
            if nb >= 0 and parent[nb] != -1:
                roots.add(find(nb))
        if not roots:
            parent[c] = c
            births.append(c)
            continue
        if len(roots) == 1:
            parent[c] = roots.pop()
            continue
        # roots are birth cells, so the elder is the one earliest in the order
        elder = min(roots, key=rank.__getitem__)
        for r in roots:
            if r != elder:
                deaths.append((r, c))
                parent[r] = elder
        parent[c] = elder

    features = [Feature(spec.cell_from_linear(b), vals[b], spec.cell_from_linear(d), vals[d])
                for b, d in deaths]
    dead = {b for b, _ in deaths}
    survivors = [b for b in births if b not in dead]
    assert len(survivors) == 1
    features.append(Feature(spec.cell_from_linear(survivors[0]), vals[survivors[0]], None, 0.0))
    return PersistenceDiagram(tuple(_sort_features(features)), spec)


def _label_components(spec: GridSpec, mask: np.ndarray) -> tuple:
    """Connected components of ``mask`` by flood fill, then glued across periodic faces."""
    structure = ndimage.generate_binary_structure(spec.ndim, 1)
    labels, n = ndimage.label(mask, structure=structure)
    if n == 0 or not any(spec.periodic):
        return labels, n
    a, b = [], []
    for k, axis in enumerate(spec.axes):
        if not axis.periodic:
            continue
        first = np.take(labels, 0, axis=k)
        last = np.take(labels, axis.bins - 1, axis=k)
        both = (first > 0) & (last > 0)
        a.append(first[both])
        b.append(last[both])
    a = np.concatenate(a)
    b = np.concatenate(b)
    graph = coo_matrix((np.ones(len(a)), (a, b)), shape=(n + 1, n + 1))
    _, relabel = connected_components(graph, directed=False)
    # label 0 is background; keep it distinct
    relabel = relabel - relabel[0]
    relabel[relabel < 0] = relabel.max() + 1
    relabel[0] = 0
    _, dense = np.unique(relabel, return_inverse=True)
    dense = dense.reshape(-1)
    return dense[labels], int(dense.max())


def persistence0_bruteforce(surface: ProbabilitySurface) -> PersistenceDiagram:
    """Reference implementation by repeated component labelling.

    Walks the filtration one cell at a time, keeping a component label per
    entered cell.  When the entering cell touches two or more labels, the
    whole superlevel set is relabelled from scratch by flood fill and each
    component is represented by its earliest cell in filtration order; all
    but the earliest representative die at the entering cell.  Intended only
    for checking :func:`persistence0`.
    """
    values = _values(surface)
    if not np.any(values > 0):
        raise EmptyDiagramError("surface has no positive cell; persistence diagram is empty")
    spec = surface.spec
    order = filtration_order(surface)
    rank = np.empty(order.size, dtype=np.int64)
    rank[order] = np.arange(order.size)
    nbrs = face_neighbors(spec)
    present = np.zeros(spec.size, dtype=bool)
    labels = np.zeros(spec.size, dtype=np.int64)
    next_label = 1
    features = []
    for c in order:
        nb = nbrs[c]
        nb = nb[nb >= 0]
        seen = np.unique(labels[nb[present[nb]]])
        if seen.size == 0:
            labels[c] = next_label
            next_label += 1
        elif seen.size == 1:
            labels[c] = seen[0]
        else:
            lab, n = _label_components(spec, present.reshape(spec.shape))
            lab = lab.reshape(-1)
            rep_rank = np.full(n + 1, rank.size, dtype=np.int64)
            np.minimum.at(rep_rank, lab[present], rank[present])
            reps = sorted({int(rep_rank[k]) for k in np.unique(lab[nb[present[nb]]])})
            for r in reps[1:]:
                cell = int(order[r])
                features.append(Feature(spec.cell_from_linear(cell), float(values[cell]),
                                        spec.cell_from_linear(int(c)), float(values[c])))
            labels[present] = lab[present] + next_label
            next_label += n + 1
            labels[c] = labels[nb[present[nb]][0]]
        present[c] = True
    _, n = _label_components(spec, present.reshape(spec.shape))
    assert n == 1
    first = int(order[0])
    features.append(Feature(spec.cell_from_linear(first), float(values[first]), None, 0.0))
    return PersistenceDiagram(tuple(_sort_features(features)), spec, "bruteforce/" + TIE_RULE)


def betti0_at(surface: ProbabilitySurface, a: float) -> int:
    """Number of connected components of the cells with value ``>= a``."""
    if not 0 < a <= 1:
        raise InputError(f"threshold must lie in (0, 1], got {a}")
    values = _values(surface)
    mask = values >= a
    n = int(mask.sum())
    if n == 0:
        return 0
    edges = _edges(surface.spec)
    edges = edges[mask[edges[:, 0]] & mask[edges[:, 1]]]
    graph = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])),
                       shape=(values.size, values.size))
    ncomp, labels = connected_components(graph, directed=False)
    return len(np.unique(labels[mask]))


def hessian_signature(surface: ProbabilitySurface, cell, smoothing_sigma: float = 1.0,
                      rel_zero: float = 1e-10) -> tuple:
    """Counts of (negative, positive, zero) eigenvalues of the discrete Hessian at ``cell``.

    The surface is optionally Gaussian-smoothed (``smoothing_sigma`` in units
    of cells, periodic axes wrapped) before central second differences with a
    step of one bin.  This is a diagnostic of the local shape only.
    """
    spec = surface.spec
    if smoothing_sigma < 0:
        raise InputError("smoothing_sigma must be non-negative")
    if not isinstance(cell, CellIndex):
        cell = spec.cell(cell)
    for c, axis in zip(cell.coords, spec.axes):
        if not axis.periodic and not 0 < c < axis.bins - 1:
            raise DomainError(f"cell {cell.coords} touches the boundary of non-periodic axis {axis.name!r}")
    f = np.asarray(surface.mass, dtype=np.float64)
    if smoothing_sigma > 0:
        modes = ["wrap" if a.periodic else "nearest" for a in spec.axes]
        f = ndimage.gaussian_filter(f, sigma=smoothing_sigma, mode=modes)

    def at(offset):
        idx = []
        for c, o, axis in zip(cell.coords, offset, spec.axes):
            j = c + o
            idx.append(j % axis.bins if axis.periodic else j)
        return f[tuple(idx)]

    d = spec.ndim
    H = np.zeros((d, d))
    zero = [0] * d
    f0 = at(zero)
    for i in range(d):
        e = list(zero)
        e[i] = 1
        em = list(zero)
        em[i] = -1
        H[i, i] = at(e) - 2.0 * f0 + at(em)
        for j in range(i + 1, d):
            pp, pm, mp, mm = (list(zero) for _ in range(4))
            pp[i], pp[j] = 1, 1
            pm[i], pm[j] = 1, -1
            mp[i], mp[j] = -1, 1
            mm[i], mm[j] = -1, -1
            H[i, j] = H[j, i] = (at(pp) - at(pm) - at(mp) + at(mm)) / 4.0
    H = 0.5 * (H + H.T)
    eigvals, _ = symmetric_eigen(H)
    scale = np.max(np.abs(eigvals)) if eigvals.size else 0.0
    band = rel_zero * scale
    zero_mask = np.abs(eigvals) <= band if scale > 0 else np.ones_like(eigvals, dtype=bool)
    neg = int(np.sum((eigvals < 0) & ~zero_mask))
    pos = int(np.sum((eigvals > 0) & ~zero_mask))
    return neg, pos, int(zero_mask.sum())


def _as_pairs(diagram) -> np.ndarray:
    if isinstance(diagram, PersistenceDiagram):
        return diagram.pairs()
    arr = np.asarray(diagram, dtype=float)
    return arr.reshape(-1, 2)


def bottleneck_distance(d1, d2) -> float:
    """Exact bottleneck distance between two finite (birth, death) diagrams.

    Each diagram is padded with the diagonal projections of the other's points;
    matching two diagonal points is free.  The smallest candidate cost that
    admits a perfect matching is found by bisection over the sorted distinct
    costs, testing each with a maximum bipartite matching.
    """
    A, B = _as_pairs(d1), _as_pairs(d2)
    n, m = len(A), len(B)
    if n == 0 and m == 0:
        return 0.0
    # rows: points of A, then diagonal copies of B; columns: points of B, then diagonal copies of A
    cost = np.full((n + m, m + n), np.inf)
    if n and m:
        cost[:n, :m] = np.max(np.abs(A[:, None, :] - B[None, :, :]), axis=2)
    cost[np.arange(n), m + np.arange(n)] = np.abs(A[:, 0] - A[:, 1]) / 2.0
    cost[n + np.arange(m), np.arange(m)] = np.abs(B[:, 0] - B[:, 1]) / 2.0
    cost[n:, m:] = 0.0

    candidates = np.unique(cost[np.isfinite(cost)])
    lo, hi = 0, len(candidates) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _perfect(cost <= candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(candidates[lo])


def _perfect(adjacency: np.ndarray) -> bool:
    match = maximum_bipartite_matching(csr_matrix(adjacency.astype(np.int8)), perm_type="column")
    return bool(np.all(match >= 0))
