"""Command-line pipeline: simulate, hist, persist, project, dpca, committor, betti.

Exit codes: 0 success, 1 bad input, 2 numerical failure, 3 empty result.
Diagnostics go to stderr; stdout carries output paths and summary tables.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from . import __version__
from . import files
from .committor import estimate, max_band_fraction, select_conformations, verdict
from .config import load_config
from .dynamics import TrajectoryParams, harvest_reactive
from .errors import InputError, ProbTopoError
from .grid import GridSpec, build_histogram, cell_center, marginalize, normalize
from .persistence import betti0_at, persistence0
from .reduction import fit_pca, project


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _global_flags(p, default):
    p.add_argument("--config", default=default, help="run config (JSON)")
    p.add_argument("--seed", type=int, default=default, help="override the config seed")
    p.add_argument("--out", default=default, help="output directory")
    p.add_argument("--threads", type=int, default=default, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="probtopo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, None)
    common = _Parser(add_help=False)
    _global_flags(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", parents=[common], help="harvest reactive trajectories")
    p.add_argument("-o", "--output", help="store path (.bin or .csv)")

    p = sub.add_parser("hist", parents=[common], help="histogram samples onto the grid")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--store", help="conformation store (default: <out>/store.bin)")
    src.add_argument("--samples", help="sample file (.csv or .bin)")
    p.add_argument("--axes", help="comma-separated subset of the grid axes")
    p.add_argument("--grid", help="grid spec JSON (default: from the config)")
    p.add_argument("-o", "--output")

    p = sub.add_parser("persist", parents=[common], help="0-dim persistence of a surface")
    p.add_argument("surface")
    p.add_argument("-o", "--output")
    p.add_argument("--top", type=int, default=None, help="print only the first N features")

    p = sub.add_parser("project", parents=[common], help="marginalize a surface")
    p.add_argument("surface")
    p.add_argument("--axes", required=True)
    p.add_argument("-o", "--output")

    p = sub.add_parser("dpca", parents=[common], help="PCA of a sample set")
    p.add_argument("samples")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--mode", choices=("dihedral", "direct"), default="dihedral")
    p.add_argument("--periodic", help="comma-separated periodic columns (default: from the grid)")
    p.add_argument("-o", "--output")

    p = sub.add_parser("committor", parents=[common], help="committor test of one cell")
    p.add_argument("--store", help="conformation store (default: <out>/store.bin)")
    where = p.add_mutually_exclusive_group(required=True)
    where.add_argument("--cell", help="comma-separated bin coordinates")
    where.add_argument("--label", help="feature label such as b3 or d2")
    p.add_argument("--diagram", help="diagram file to resolve --label against")
    p.add_argument("--surface", help="surface whose grid defines --cell")
    p.add_argument("--axes", help="grid axes for --cell when no surface is given")
    p.add_argument("-o", "--output")

    p = sub.add_parser("betti", parents=[common], help="count components of {f >= a}")
    p.add_argument("surface")
    p.add_argument("--a", type=float, required=True)
    return parser


def _config(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, out=args.out)


def _grid_subset(spec: GridSpec, axes) -> GridSpec:
    if not axes:
        return spec
    names = [a.strip() for a in axes.split(",") if a.strip()]
    return GridSpec(tuple(spec.axis(n) for n in names))


def _default(path, cfg, name) -> Path:
    return Path(path) if path else cfg.out / name


def _emit(*lines):
    for ln in lines:
        print(ln)


def cmd_simulate(args, cfg):
    h = cfg.harvest
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        store = harvest_reactive(cfg.potential, cfg.basins, h["n_trajectories"], cfg.trajectory,
                                 stride=cfg.stride, seed=cfg.seed,
                                 target_reactive=h.get("target_reactive"), start=h.get("start"),
                                 batch_size=h["batch_size"], threads=args.threads or 1)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    path = files.write_store(_default(args.output, cfg, "store.bin"), store, cfg.digest)
    _emit(f"acceptance {store.acceptance:.6g} ({store.n_reactive}/{store.n_launched})", str(path))
    return 0


def cmd_hist(args, cfg):
    spec = files.read_grid(args.grid) if args.grid else cfg.grid
    spec = _grid_subset(spec, args.axes)
    if args.samples:
        names, data = files.read_samples(args.samples)
        missing = [n for n in spec.names if n not in names]
        if missing:
            raise InputError(f"samples have no columns {missing}")
        data = data[:, [names.index(n) for n in spec.names]]
    else:
        store = files.read_store(args.store or cfg.out / "store.bin")
        data = store.columns(spec.names)
    raw = build_histogram(spec, data)
    surface = normalize(raw)
    tag = "_".join(spec.names)
    path = files.write_surface(_default(args.output, cfg, f"surface_{tag}.json"), surface, cfg.digest)
    print(f"samples {raw.total_samples} discarded {raw.discarded}", file=sys.stderr)
    _emit(str(path))
    return 0


def peak_table(diagram, top=None) -> list:
    """Rows of (label, kind, centre, value): peaks by descending persistence,
    each followed by its ridge."""
    rows = []
    for label, kind, f in diagram.labels():
        rank = int(label[1:])
        if top is not None and rank > top:
            break
        cell = f.birth_cell if kind == "peak" else f.death_cell
        value = f.birth_value if kind == "peak" else f.death_value
        rows.append((label, kind, cell_center(diagram.spec, cell), value))
    return rows


def format_table(diagram, top=None) -> str:
    names = diagram.spec.names
    lines = ["\t".join(["label", "kind"] + list(names) + ["probability"])]
    for label, kind, centre, value in peak_table(diagram, top):
        lines.append("\t".join([label, kind] + [f"{c:.4f}" for c in centre] + [f"{value:.6e}"]))
    return "\n".join(lines)


def _load_normalized(path):
    surface = files.read_surface(path)
    # an all-zero surface is passed through so that it surfaces as an empty result
    if surface.normalized or surface.is_empty:
        return surface
    return normalize(surface)


def cmd_persist(args, cfg):
    surface = _load_normalized(args.surface)
    diagram = persistence0(surface)
    stem = Path(args.surface).stem
    name = stem.replace("surface", "diagram") if "surface" in stem else f"diagram_{stem}"
    out = _default(args.output, cfg, name + ".json")
    files.write_diagram(out, diagram, cfg.digest)
    csv_path = files.write_diagram_csv(out.with_suffix(".csv"), diagram, cfg.digest)
    _emit(format_table(diagram, args.top), str(out), str(csv_path))
    return 0


def cmd_project(args, cfg):
    surface = files.read_surface(args.surface)
    keep = [a.strip() for a in args.axes.split(",") if a.strip()]
    proj = marginalize(surface, keep)
    out = _default(args.output, cfg, f"surface_{'_'.join(keep)}.json")
    files.write_surface(out, proj, cfg.digest)
    csv_path = files.write_surface_csv(out.with_suffix(".csv"), proj, cfg.digest)
    _emit(str(out), str(csv_path))
    return 0


def cmd_dpca(args, cfg):
    names, data = files.read_samples(args.samples)
    flags = None
    if args.mode == "dihedral":
        if args.periodic is not None:
            periodic = {a.strip() for a in args.periodic.split(",") if a.strip()}
            unknown = periodic - set(names)
            if unknown:
                raise InputError(f"unknown periodic columns {sorted(unknown)}")
        else:
            periodic = {a.name for a in cfg.grid.axes if a.periodic}
        flags = [n in periodic for n in names]
    model = fit_pca(data, args.k, flags)
    out = _default(args.output, cfg, "pca_model.json")
    files.write_model(out, model, cfg.digest)
    reduced = project(model, data)
    samples_path = files.write_samples(out.with_name(out.stem + "_samples.csv"),
                                       [f"pc{i + 1}" for i in range(model.k)], reduced, cfg.digest)
    _emit(f"variance_fraction {model.variance_fraction:.10f}",
          "eigenvalues " + " ".join(f"{v:.6g}" for v in model.eigenvalues),
          str(out), str(samples_path))
    return 0


def _parse_cell(spec, text):
    try:
        coords = [int(c) for c in text.split(",")]
    except ValueError:
        raise InputError(f"--cell must be comma-separated integers, got {text!r}") from None
    return spec.cell(coords)


def cmd_committor(args, cfg):
    if args.label:
        if not args.diagram:
            raise InputError("--label needs --diagram")
        diagram = files.read_diagram(args.diagram)
        spec = diagram.spec
        cell = diagram.resolve(args.label)
    else:
        if args.surface:
            spec = files.read_surface(args.surface).spec
        else:
            spec = _grid_subset(cfg.grid, args.axes)
        cell = _parse_cell(spec, args.cell)
    store = files.read_store(args.store or cfg.out / "store.bin")
    c = cfg.committor
    conf = select_conformations(store, spec, cell, c["n_conformations"], seed=cfg.seed)
    tp = TrajectoryParams(cfg.trajectory.dt, c["max_steps"], cfg.trajectory.temperature,
                          cfg.trajectory.friction)
    report = estimate(cfg.potential, cfg.basins, conf, c["trials"], tp, seed=cfg.seed, start_cell=cell)
    v = verdict(report, tuple(c["band"]))
    report.meta.update({"axes": list(spec.names), "label": args.label,
                        "cell_center": list(cell_center(spec, cell)), "verdict": v,
                        "band": list(c["band"]),
                        "max_band_fraction": max_band_fraction(report.p_values,
                                                               c["band"][1] - c["band"][0])})
    tag = args.label or "cell_" + "_".join(str(i) for i in cell.coords)
    out = _default(args.output, cfg, f"committor_{tag}.json")
    files.write_report(out, report, cfg.digest)
    csv_path = files.write_report_csv(out.with_suffix(".csv"), report, cfg.digest)
    _emit(f"mean_p {report.mean_p:.4f}  n {report.n_conformations}  "
          f"timeouts {report.timeout_fraction:.4f}  verdict {v}",
          "histogram " + " ".join(str(int(h)) for h in report.histogram),
          str(out), str(csv_path))
    return 0


def cmd_betti(args, cfg):
    surface = _load_normalized(args.surface)
    _emit(str(betti0_at(surface, args.a)))
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "hist": cmd_hist,
    "persist": cmd_persist,
    "project": cmd_project,
    "dpca": cmd_dpca,
    "committor": cmd_committor,
    "betti": cmd_betti,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.threads is not None and args.threads < 1:
            raise InputError("--threads must be positive")
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except ProbTopoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
