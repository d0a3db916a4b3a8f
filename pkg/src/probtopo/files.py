"""On-disk formats.

JSON files are written with a fixed key order and ``repr`` floats so that
identical content gives identical bytes.  Every file carries a ``digest``
(sha256 of the canonical run config) and the tool ``version``.  CSV files put
the same two fields on a leading ``#`` comment line.

Binary sample files are raw little-endian float64, row-major, with a JSON
sidecar of the same stem describing the columns.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import io
import json
import os
from pathlib import Path

import numpy as np

from . import __version__
from .committor import CommittorReport
from .dynamics import ConformationStore
from .errors import InputError
from .grid import GridSpec, ProbabilitySurface, cell_center
from .persistence import PersistenceDiagram
from .reduction import PcaModel

__all__ = [
    "write_json",
    "read_json",
    "write_samples",
    "read_samples",
    "write_store",
    "read_store",
    "write_grid",
    "read_grid",
    "write_surface",
    "read_surface",
    "write_diagram",
    "read_diagram",
    "write_diagram_csv",
    "write_report",
    "read_report",
    "write_report_csv",
    "write_model",
    "read_model",
    "write_surface_csv",
    "file_digest",
]


def _stamp(payload: dict, digest) -> dict:
    out = {"version": __version__}
    if digest is not None:
        out["digest"] = digest
    out.update(payload)
    return out


def write_json(path, payload: dict, digest=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_stamp(payload, digest), indent=1, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _comment(digest) -> str:
    fields = [f"version={__version__}"]
    if digest is not None:
        fields.append(f"digest={digest}")
    return "# " + " ".join(fields) + "\n"


# -- samples and stores -------------------------------------------------------

def _write_table(path, names, columns, digest, int_cols=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".csv":
        buf = io.StringIO()
        buf.write(_comment(digest))
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(names) + list(int_cols))
        n = len(columns[0]) if columns else 0
        for i in range(n):
            w.writerow([repr(float(c[i])) for c in columns[:len(names)]]
                       + [int(c[i]) for c in columns[len(names):]])
        path.write_text(buf.getvalue(), encoding="utf-8")
    else:
        data = np.stack([np.asarray(c, dtype="<f8") for c in columns], axis=1) if columns else np.empty((0, 0))
        path.write_bytes(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return path


def _sidecar(path) -> Path:
    return Path(path).with_suffix(".json")


def write_samples(path, names, samples, digest=None) -> Path:
    """CSV (``.csv``) or raw float64 with a JSON sidecar (any other suffix)."""
    samples = np.asarray(samples, dtype=float).reshape(-1, len(names))
    cols = [samples[:, j] for j in range(len(names))]
    out = _write_table(path, names, cols, digest)
    if Path(path).suffix != ".csv":
        write_json(_sidecar(path), {"columns": list(names), "rows": len(samples)}, digest)
    return out


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise InputError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    try:
        data = np.array(body, dtype=float).reshape(len(body), len(header))
    except ValueError:
        raise InputError(f"{path}: rows must have {len(header)} numeric fields") from None
    return header, data


def _read_bin(path):
    meta = read_json(_sidecar(path))
    cols = meta.get("columns")
    if not cols:
        raise InputError(f"{_sidecar(path)}: missing 'columns'")
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    if raw.size % len(cols):
        raise InputError(f"{path}: size is not a multiple of {len(cols)} columns")
    return list(cols), raw.reshape(-1, len(cols)).astype(float), meta


def read_samples(path) -> tuple:
    """Return ``(names, samples)``; metadata columns of a store are dropped."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    if path.suffix == ".csv":
        names, data = _read_csv(path)
    else:
        names, data, _ = _read_bin(path)
    keep = [j for j, n in enumerate(names) if n not in ("traj_id", "step")]
    return tuple(names[j] for j in keep), data[:, keep]


def write_store(path, store: ConformationStore, digest=None) -> Path:
    cols = [store.points[:, j] for j in range(len(store.names))] + [store.traj_id, store.step]
    out = _write_table(path, store.names, cols, digest, int_cols=("traj_id", "step"))
    meta = {"columns": list(store.names) + ["traj_id", "step"], "rows": len(store),
            "n_launched": store.n_launched, "n_reactive": store.n_reactive,
            "acceptance": store.acceptance}
    write_json(_sidecar(path) if Path(path).suffix != ".csv" else Path(path).with_suffix(".meta.json"),
               meta, digest)
    return out


def read_store(path) -> ConformationStore:
    path = Path(path)
    if not path.exists():
        raise InputError(f"no such file: {path}")
    if path.suffix == ".csv":
        names, data = _read_csv(path)
        meta_path = path.with_suffix(".meta.json")
        meta = read_json(meta_path) if meta_path.exists() else {}
    else:
        names, data, meta = _read_bin(path)
    if "traj_id" not in names or "step" not in names:
        raise InputError(f"{path}: a store needs traj_id and step columns")
    coords = [n for n in names if n not in ("traj_id", "step")]
    idx = [names.index(n) for n in coords]
    return ConformationStore(data[:, idx], data[:, names.index("traj_id")].astype(np.int64),
                             data[:, names.index("step")].astype(np.int64), tuple(coords),
                             int(meta.get("n_launched", 0)), int(meta.get("n_reactive", 0)))


# -- grids and surfaces -------------------------------------------------------

def write_grid(path, spec: GridSpec, digest=None) -> Path:
    return write_json(path, spec.to_dict(), digest)


def read_grid(path) -> GridSpec:
    return GridSpec.from_dict(read_json(path))


def _encode(arr) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii")


def write_surface(path, surface: ProbabilitySurface, digest=None) -> Path:
    return write_json(path, {
        "spec": surface.spec.to_dict(),
        "total_samples": int(surface.total_samples),
        "discarded": int(surface.discarded),
        "normalized": bool(surface.normalized),
        "dtype": "<f8",
        "order": "C",
        "mass": _encode(surface.mass),
    }, digest)


def read_surface(path) -> ProbabilitySurface:
    d = read_json(path)
    try:
        spec = GridSpec.from_dict(d["spec"])
        raw = base64.b64decode(d["mass"], validate=True)
    except KeyError as exc:
        raise InputError(f"{path}: surface file missing {exc}") from None
    except ValueError:
        raise InputError(f"{path}: mass is not valid base64") from None
    mass = np.frombuffer(raw, dtype="<f8")
    if mass.size != spec.size:
        raise InputError(f"{path}: {mass.size} values for a grid of {spec.size} cells")
    return ProbabilitySurface(spec, mass.reshape(spec.shape).astype(float),
                              int(d.get("total_samples", 0)), int(d.get("discarded", 0)),
                              normalized=bool(d.get("normalized", False)))


def write_surface_csv(path, surface: ProbabilitySurface, digest=None) -> Path:
    """One row per cell: cell centre coordinates then the value."""
    spec = surface.spec
    buf = io.StringIO()
    buf.write(_comment(digest))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(spec.names) + ["value"])
    for lin, v in enumerate(surface.flat):
        w.writerow([repr(c) for c in cell_center(spec, lin)] + [repr(float(v))])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


# -- diagrams, reports, models ------------------------------------------------

def write_diagram(path, diagram: PersistenceDiagram, digest=None) -> Path:
    return write_json(path, diagram.to_dict(), digest)


def read_diagram(path) -> PersistenceDiagram:
    return PersistenceDiagram.from_dict(read_json(path))


def write_diagram_csv(path, diagram: PersistenceDiagram, digest=None) -> Path:
    buf = io.StringIO()
    buf.write(_comment(digest))
    w = csv.writer(buf, lineterminator="\n")
    names = diagram.spec.names
    w.writerow(["rank", "birth", "death", "persistence", "birth_linear", "death_linear"]
               + [f"birth_{n}" for n in names] + [f"death_{n}" for n in names])
    for i, f in enumerate(diagram.features, start=1):
        bc = cell_center(diagram.spec, f.birth_cell)
        dc = cell_center(diagram.spec, f.death_cell) if f.death_cell is not None else [""] * len(names)
        w.writerow([i, repr(f.birth_value), repr(f.death_value), repr(f.persistence),
                    f.birth_cell.linear, "" if f.death_cell is None else f.death_cell.linear]
                   + [repr(c) for c in bc] + [repr(c) if c != "" else "" for c in dc])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_report(path, report: CommittorReport, digest=None) -> Path:
    return write_json(path, report.to_dict(), digest)


def read_report(path) -> CommittorReport:
    d = read_json(path)
    d.pop("version", None)
    d.pop("digest", None)
    try:
        return CommittorReport.from_dict(d)
    except KeyError as exc:
        raise InputError(f"{path}: report missing {exc}") from None


def write_report_csv(path, report: CommittorReport, digest=None) -> Path:
    buf = io.StringIO()
    buf.write(_comment(digest))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["conformation", "p"])
    for i, p in enumerate(report.p_values):
        w.writerow([i, repr(float(p))])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def write_model(path, model: PcaModel, digest=None) -> Path:
    return write_json(path, model.to_dict(), digest)


def read_model(path) -> PcaModel:
    return PcaModel.from_dict(read_json(path))


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
