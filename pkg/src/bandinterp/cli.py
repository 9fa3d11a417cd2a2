"""Command-line entry point: ``bandinterp <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .cache import EigenCache
from .config import RunConfig, parse_config
from .errors import BandInterpError, SchemaError, ValidationError
from .mesh import check_mesh, dof_count, write_mesh
from .nodes import NodeKind, lebesgue_estimate, node_set, write_nodes
from .output import (write_band_path, write_band_table, write_convergence, write_error_report,
                     write_extrema, write_meta)
from .reconstruct import (BandSolver, band_path, convergence_study, find_extrema, reconstruct,
                          reconstruct_and_score, reference_grid)

SUBCOMMANDS = ("mesh", "nodes", "solve", "reconstruct", "extrema", "lebesgue", "converge")
LATTICE_FREE = ("nodes", "lebesgue")


def _pair(text):
    try:
        k1, k2 = (float(t) for t in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected k1,k2 got {text!r}") from exc
    return [k1, k2]


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML/JSON config file")
    common.add_argument("--lattice", choices=["square", "hexagonal"])
    common.add_argument("--mode", choices=["tm", "te"], type=str.lower)
    common.add_argument("--nodes", "--kind", dest="kind", help="node family: " + "|".join(k.value for k in NodeKind))
    common.add_argument("--degree", type=int)
    common.add_argument("--bands", type=int)
    common.add_argument("--h", type=float)
    common.add_argument("--jobs", type=int)
    common.add_argument("--cache", help="eigenvalue cache file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)

    p = argparse.ArgumentParser(prog="bandinterp", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("mesh", parents=[common], help="generate the fitted unit-cell mesh")
    sub.add_parser("nodes", parents=[common], help="write an interpolation node set")
    s = sub.add_parser("solve", parents=[common], help="solve the band problem at given k-points")
    s.add_argument("--k", type=_pair, action="append", help="k-point k1,k2 in 1/a (repeatable)")
    sub.add_parser("reconstruct", parents=[common], help="interpolate bands and score against the reference grid")
    e = sub.add_parser("extrema", parents=[common], help="locate a band maximum over the IBZ")
    e.add_argument("--band", type=int, help="1-based band index")
    e.add_argument("--density", type=int)
    le = sub.add_parser("lebesgue", parents=[common], help="estimate the Lebesgue constant of a node set")
    le.add_argument("--density", type=int)
    c = sub.add_parser("converge", parents=[common], help="convergence study over degrees and node kinds")
    c.add_argument("--degrees", type=_int_list)
    c.add_argument("--kinds", type=lambda t: [x for x in t.split(",") if x])
    return p


def _overrides(args):
    tree = {}

    def put(path, val):
        if val is None:
            return
        node = tree
        *head, last = path.split(".")
        for h in head:
            node = node.setdefault(h, {})
        node[last] = val

    put("lattice", args.lattice)
    if args.lattice is None and args.config is None and args.command in LATTICE_FREE:
        put("lattice", "square")  # placeholder; these subcommands never touch k-space
    put("mode", args.mode)
    put("nodes.kind", args.kind)
    put("nodes.degree", args.degree)
    put("bands", args.bands)
    put("mesh.h", args.h)
    put("mesh.seed", args.seed)
    put("run.seed", args.seed)
    put("run.jobs", args.jobs)
    put("run.cache", args.cache)
    put("run.out", args.out)
    if args.command == "solve":
        put("solve.k", args.k)
    if args.command == "extrema":
        put("extrema.band", args.band)
        put("extrema.density", args.density)
    if args.command == "lebesgue":
        put("lebesgue.density", args.density)
    if args.command == "converge":
        put("converge.degrees", args.degrees)
        put("converge.kinds", args.kinds)
    return tree


def _solver(cfg: RunConfig):
    cache = EigenCache(cfg.cache) if cfg.cache else None
    return BandSolver.from_config(cfg.recon, cache=cache)


def _lattice_name(cfg):
    return cfg.recon.geometry.lattice.kind.value


def run_subcommand(name: str, cfg: RunConfig) -> dict:
    """Run one subcommand and return a summary; raises on failure."""
    if name not in SUBCOMMANDS:
        raise SchemaError(f"unknown subcommand; allowed values: {', '.join(SUBCOMMANDS)}", "command")
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    rc = cfg.recon
    t0 = time.perf_counter()
    summary = {"command": name}

    if name == "mesh":
        solver_mesh = _solver(cfg).mesh
        path = out / "mesh.txt"
        write_mesh(solver_mesh, path)
        checks = check_mesh(solver_mesh, rc.geometry)
        summary.update(path=str(path), dofs=dof_count(solver_mesh), triangles=len(solver_mesh.triangles),
                       min_angle=solver_mesh.min_angle(), checks=checks)

    elif name == "nodes":
        ns = node_set(rc.kind, rc.degree)
        path = out / f"nodes-{rc.kind.value}-{rc.degree}.txt"
        write_nodes(ns, path)
        summary.update(path=str(path), count=len(ns))

    elif name == "solve":
        solver = _solver(cfg)
        ks = cfg.section("solve").get("k")
        ks = np.array(ks, dtype=float) if ks else rc.zone.vertices
        path = out / "bands.csv"
        write_band_table(path, ks, solver.freqs(ks))
        summary.update(path=str(path), points=len(ks), solves=solver.n_solves)

    elif name == "reconstruct":
        solver = _solver(cfg)
        rep = reconstruct_and_score(rc, solver)
        rec = reconstruct(rc, solver)
        write_error_report(out / "error_report.txt", rep)
        kref = reference_grid(rc.zone, rc.reference_degree)
        write_band_table(out / "reference.csv", kref, solver.freqs(kref))
        write_band_table(out / "interpolated.csv", kref, rec.values(kref))
        (out / "interpolant.json").write_text(rec.interpolant.dumps() + "\n")
        pk, s, _ = band_path(rc.zone)
        write_band_path(out / "band_path.csv", s, pk, rec.values(pk))
        summary.update(path=str(out / "error_report.txt"), error_inf=rep.error_inf, error_avg=rep.error_avg,
                       solves=solver.n_solves)

    elif name == "extrema":
        ex_cfg = cfg.section("extrema")
        solver = _solver(cfg)
        rec = reconstruct(rc, solver)
        res = find_extrema(rec, ex_cfg["band"] - 1, density=ex_cfg["density"])
        path = out / f"extrema-band{ex_cfg['band']}.txt"
        write_extrema(path, res)
        summary.update(path=str(path), value=res.value, interior=res.interior)

    elif name == "lebesgue":
        ns = node_set(rc.kind, rc.degree)
        val = lebesgue_estimate(ns, cfg.section("lebesgue")["density"])
        path = out / f"lebesgue-{rc.kind.value}-{rc.degree}.txt"
        path.write_text(f"kind {rc.kind.value}\ndegree {rc.degree}\nlebesgue {val:.17g}\n")
        summary.update(path=str(path), lebesgue=val)

    elif name == "converge":
        conv = cfg.section("converge")
        kinds = conv.get("kinds") or [k.value for k in NodeKind]
        rows = convergence_study(rc, conv["degrees"], kinds, _solver(cfg))
        path = out / "convergence.csv"
        write_convergence(path, rows)
        summary.update(path=str(path), rows=len(rows))

    summary["runtime_s"] = time.perf_counter() - t0
    write_meta(out / f"{name}.meta.json", lattice=_lattice_name(cfg), mode=rc.mode.value, **summary)
    return summary


def _error_record(exc):
    rec = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, SchemaError):
        rec["path"] = exc.path
    if isinstance(exc, ValidationError):
        rec["violations"] = [{"path": p, "message": m} for p, m in exc.violations]
    return rec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out) if args.out else None
    try:
        cfg = parse_config(args.config or {}, _overrides(args))
        out_dir = cfg.out
        summary = run_subcommand(args.command, cfg)
    except (BandInterpError, OSError) as exc:
        rec = _error_record(exc)
        print(json.dumps(rec), file=sys.stderr)
        if out_dir is not None:
            try:
                out_dir.mkdir(parents=True, exist_ok=True)
                (out_dir / "error.json").write_text(json.dumps(rec, indent=2) + "\n")
            except OSError:
                pass
        return 2
    print(json.dumps({k: v for k, v in summary.items() if k != "checks"}, default=str))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
