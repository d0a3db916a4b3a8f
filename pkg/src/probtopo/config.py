"""Run configuration: one JSON document validated up front and hashed.

The digest is the sha256 of the canonical JSON form (sorted keys, no
whitespace) of the validated config with the output directory removed, so
moving a run does not change it.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

from .dynamics import Basins, ModelPotential, TrajectoryParams
from .errors import InputError
from .grid import GridSpec

__all__ = ["RunConfig", "DEFAULTS", "load_config"]

DEFAULTS = {
    "potential": {"name": "double_well_gated", "params": {}},
    "basins": {"reactant": {"x": [-1.3, -0.7]}, "product": {"x": [0.7, 1.3]}},
    "trajectory": {"dt": 0.0015, "steps": 1700, "temperature": 1.0, "friction": 1.0, "stride": 10},
    "harvest": {"n_trajectories": 400000, "target_reactive": 10000, "batch_size": 1024, "start": {}},
    "grid": {"axes": [
        {"name": "x", "lo": -2.0, "hi": 2.0, "bins": 31, "periodic": False},
        {"name": "y", "lo": -3.0, "hi": 3.0, "bins": 31, "periodic": False},
        {"name": "z", "lo": -3.0, "hi": 3.0, "bins": 31, "periodic": False},
    ]},
    "committor": {"n_conformations": 200, "trials": 50, "max_steps": 20000, "band": [0.4, 0.6]},
    "seed": 1,
    "out": "run",
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("params", "start", "basins"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _int(section, key, value, lo=1):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value or value < lo:
        raise InputError(f"{section}.{key} must be an integer >= {lo}, got {value!r}")
    return int(value)


@dataclass(frozen=True, eq=False)
class RunConfig:
    raw: dict
    potential: ModelPotential
    basins: Basins
    trajectory: TrajectoryParams
    stride: int
    grid: GridSpec
    seed: int

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(DEFAULTS)
        if unknown:
            raise InputError(f"unknown config sections: {sorted(unknown)}")
        raw = _merge(DEFAULTS, d)
        pot = raw["potential"]
        if not isinstance(pot, dict) or "name" not in pot:
            raise InputError("potential needs a name")
        potential = ModelPotential.builtin(pot["name"], pot.get("params") or {})
        basins = Basins.from_dict(raw["basins"])
        for b in (basins.reactant, basins.product):
            for axis in b.box:
                if axis not in potential.names:
                    raise InputError(f"basin {b.name!r} uses axis {axis!r} unknown to {potential.name}")
        t = raw["trajectory"]
        steps = _int("trajectory", "steps", t["steps"])
        try:
            tp = TrajectoryParams(float(t["dt"]), steps, float(t["temperature"]), float(t["friction"]))
        except (TypeError, ValueError):
            raise InputError("trajectory dt, temperature and friction must be numbers") from None
        stride = _int("trajectory", "stride", t["stride"])
        grid = GridSpec.from_dict(raw["grid"])
        h = raw["harvest"]
        _int("harvest", "n_trajectories", h["n_trajectories"])
        _int("harvest", "batch_size", h["batch_size"])
        if h.get("target_reactive") is not None:
            _int("harvest", "target_reactive", h["target_reactive"])
        for axis in h.get("start") or {}:
            if axis not in potential.names:
                raise InputError(f"harvest.start uses unknown axis {axis!r}")
        c = raw["committor"]
        _int("committor", "n_conformations", c["n_conformations"])
        _int("committor", "trials", c["trials"])
        _int("committor", "max_steps", c["max_steps"])
        lo, hi = c["band"]
        if not 0 < lo < hi < 1:
            raise InputError(f"committor.band must satisfy 0 < lo < hi < 1, got {c['band']}")
        seed = _int("", "seed", raw["seed"], lo=0)
        if seed >= 2**64:
            raise InputError("seed must fit in 64 bits")
        raw["potential"] = potential.to_dict()
        return cls(raw, potential, basins, tp, stride, grid, seed)

    def with_overrides(self, seed=None, out=None) -> "RunConfig":
        d = copy.deepcopy(self.raw)
        if seed is not None:
            d["seed"] = seed
        if out is not None:
            d["out"] = str(out)
        return RunConfig.from_dict(d)

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])

    @property
    def harvest(self) -> dict:
        return self.raw["harvest"]

    @property
    def committor(self) -> dict:
        return self.raw["committor"]

    def canonical(self) -> str:
        d = {k: v for k, v in self.raw.items() if k != "out"}
        return json.dumps(d, sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig.from_dict({})
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"no such config file: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise InputError(f"{path}: config must be a JSON object")
    return RunConfig.from_dict(d)
