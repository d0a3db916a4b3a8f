"""Principal component analysis of sample sets, with a (cos, sin) embedding
for periodic coordinates and a small cyclic Jacobi eigensolver."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

__all__ = [
    "PcaModel",
    "dihedral_embed",
    "symmetric_eigen",
    "fit_pca",
    "project",
]

_SYM_TOL = 1e-9
_MAX_SWEEPS = 100


def dihedral_embed(samples, periodic_flags) -> np.ndarray:
    """Replace every periodic column ``x`` by the pair ``(cos x, sin x)``.

    Columns keep their order; a periodic column expands in place.  Output
    width is ``d + #periodic``.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    flags = [bool(f) for f in periodic_flags]
    if len(flags) != x.shape[1]:
        raise InputError(f"{len(flags)} periodic flags for {x.shape[1]}-dimensional samples")
    cols = []
    for j, periodic in enumerate(flags):
        if periodic:
            cols.append(np.cos(x[:, j]))
            cols.append(np.sin(x[:, j]))
        else:
            cols.append(x[:, j])
    return np.stack(cols, axis=1) if cols else np.empty((len(x), 0))


def _off_norm(a: np.ndarray) -> float:
    upper = np.triu(a, 1)
    return math.sqrt(2.0 * float(np.sum(upper * upper)))


def symmetric_eigen(matrix) -> tuple:
    """Eigen-decomposition of a real symmetric matrix by cyclic Jacobi sweeps.

    Parameters
    ----------
    matrix : array_like, shape (n, n)
        Symmetric within ``1e-9`` relative to its largest entry.

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
        Sorted in descending order.
    eigenvectors : ndarray, shape (n, n)
        Column ``k`` is the unit eigenvector of ``eigenvalues[k]``.
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InputError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError("matrix has non-finite entries")
    n = a.shape[0]
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > _SYM_TOL * max(scale, 1.0):
        raise InputError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    v = np.eye(n)

    for _ in range(_MAX_SWEEPS):
        if _off_norm(a) == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                big = 100.0 * abs(apq)
                if abs(a[p, p]) + big == abs(a[p, p]) and abs(a[q, q]) + big == abs(a[q, q]):
                    # below the resolution of both diagonal entries
                    a[p, q] = a[q, p] = 0.0
                    continue
                # rotation angle that zeroes a[p, q] (Golub & Van Loan 8.5.2)
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    # tau would overflow; the small-angle limit is exact here
                    t = apq / diff
                else:
                    tau = diff / (2.0 * apq)
                    t = math.copysign(1.0, tau) / (abs(tau) + math.hypot(1.0, tau))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def _fix_signs(rows: np.ndarray) -> np.ndarray:
    out = rows.copy()
    for r in out:
        nz = np.flatnonzero(np.abs(r) > 1e-12)
        if nz.size and r[nz[0]] < 0:
            r *= -1.0
    return out


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # rows are unit eigenvectors
    eigenvalues: np.ndarray
    variance_fraction: float
    embedding: str = "direct"
    periodic: tuple = ()

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def to_dict(self) -> dict:
        d = {
            "mean": [float(v) for v in self.mean],
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "components": [[float(v) for v in row] for row in self.components],
            "variance_fraction": float(self.variance_fraction),
            "embedding": self.embedding,
        }
        if self.embedding == "dihedral":
            d["periodic"] = [bool(f) for f in self.periodic]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PcaModel":
        try:
            return cls(np.asarray(d["mean"], dtype=float),
                       np.asarray(d["components"], dtype=float).reshape(len(d["eigenvalues"]), -1),
                       np.asarray(d["eigenvalues"], dtype=float),
                       float(d["variance_fraction"]),
                       d.get("embedding", "direct"),
                       tuple(d.get("periodic", ())))
        except KeyError as exc:
            raise InputError(f"model file missing field {exc}") from None


def fit_pca(samples, k: int, periodic_flags=None) -> PcaModel:
    """Top-``k`` principal components of ``samples``.

    If ``periodic_flags`` is given, the samples go through
    :func:`dihedral_embed` first and the model remembers the flags so that
    :func:`project` can embed new samples the same way.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    embedding = "direct"
    flags = ()
    if periodic_flags is not None:
        flags = tuple(bool(f) for f in periodic_flags)
        x = dihedral_embed(x, flags)
        embedding = "dihedral"
    n, d = x.shape
    if n < 2:
        raise InputError(f"need at least 2 samples, got {n}")
    if int(k) != k or not 1 <= k <= d:
        raise InputError(f"k must be in [1, {d}], got {k}")
    if not np.all(np.isfinite(x)):
        raise InputError("samples contain non-finite values")
    k = int(k)
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    w, v = symmetric_eigen(cov)
    trace = float(np.trace(cov))
    comps = _fix_signs(v[:, :k].T)
    frac = float(np.sum(w[:k]) / trace) if trace > 0 else 1.0
    return PcaModel(mean, comps, w[:k], min(max(frac, 0.0), 1.0), embedding, flags)


def project(model: PcaModel, samples) -> np.ndarray:
    """Coordinates of ``samples`` along the model's components."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if model.embedding == "dihedral":
        x = dihedral_embed(x, model.periodic)
    if x.shape[1] != len(model.mean):
        raise InputError(f"samples have dimension {x.shape[1]}, model expects {len(model.mean)}")
    return (x - model.mean) @ model.components.T
