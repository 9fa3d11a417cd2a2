"""Run configuration: a YAML (or JSON) tree validated into a RunConfig.

Schema (every key optional except ``lattice``)::

    lattice: square | hexagonal
    mode: tm | te
    bands: 6
    geometry: {eps: 8.9, eps_background: 1.0, radius: 0.2}   # radius: square only
    mesh: {h: <per-lattice default>, seed: 0}
    nodes: {kind: lobatto, degree: 8}
    reference: {degree: 21}
    solver: {tol: 1e-9, method: auto}
    run: {jobs: 1, seed: 0, cache: null, out: out}
    solve: {k: [[k1, k2], ...]}
    extrema: {band: <last band>, density: 300}
    lebesgue: {density: 200}
    converge: {degrees: [2, 4, 6, 8], kinds: [fekete, meanopt, lobatto, cheb1, cheb2]}
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import SchemaError, ValidationError
from .fem import RESIDUAL_TOL, Mode
from .lattice import LatticeKind
from .mesh import DEFAULT_H, hexagonal_geometry, square_geometry
from .nodes import NodeKind
from .reconstruct import REFERENCE_DEGREE, ReconstructionConfig

SOLVER_METHODS = ("auto", "iterative", "dense")

# key -> (expected python types, default); nested dicts describe sections
SCHEMA = {
    "lattice": ((str,), None),
    "mode": ((str,), "tm"),
    "bands": ((int,), 6),
    "geometry": {
        "eps": ((int, float), 8.9),
        "eps_background": ((int, float), 1.0),
        "radius": ((int, float), 0.2),
    },
    "mesh": {"h": ((int, float), None), "seed": ((int,), 0)},
    "nodes": {"kind": ((str,), NodeKind.IMPROVED_LOBATTO.value), "degree": ((int,), 8)},
    "reference": {"degree": ((int,), REFERENCE_DEGREE)},
    "solver": {"tol": ((int, float), RESIDUAL_TOL), "method": ((str,), "auto")},
    "run": {"jobs": ((int,), 1), "seed": ((int,), 0), "cache": ((str, type(None)), None),
            "out": ((str,), "out")},
    "solve": {"k": ((list, type(None)), None)},
    "extrema": {"band": ((int, type(None)), None), "density": ((int,), 300)},
    "lebesgue": {"density": ((int,), 200)},
    "converge": {"degrees": ((list,), [2, 4, 6, 8]), "kinds": ((list, type(None)), None)},
}


@dataclass
class RunConfig:
    recon: ReconstructionConfig
    out: Path
    cache: Path | None
    jobs: int
    seed: int
    raw: dict = field(default_factory=dict)

    def section(self, name):
        return self.raw.get(name, {})


def _fill(tree, schema, path=""):
    if not isinstance(tree, dict):
        raise SchemaError("expected a mapping", path or "<root>")
    unknown = sorted(set(tree) - set(schema))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise SchemaError(f"unknown key; allowed: {', '.join(sorted(schema))}", where)
    out = {}
    for key, spec in schema.items():
        where = f"{path}.{key}" if path else key
        if isinstance(spec, dict):
            out[key] = _fill(tree.get(key) or {}, spec, where)
            continue
        types, default = spec
        val = tree.get(key, default)
        if val is None and type(None) not in types and default is None:
            out[key] = None
            continue
        if isinstance(val, bool) or not isinstance(val, types):
            raise SchemaError(f"expected {'/'.join(t.__name__ for t in types)}, got {type(val).__name__}", where)
        out[key] = val
    return out


def _choice(value, allowed, path):
    v = str(value).lower()
    if v not in allowed:
        raise SchemaError(f"invalid value {value!r}; allowed values: {', '.join(allowed)}", path)
    return v


def load_tree(source):
    """Parse a config file (YAML or JSON) or pass a mapping through."""
    if isinstance(source, dict):
        return source
    text = Path(source).read_text()
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError(f"not valid YAML/JSON: {exc}") from exc
    return tree if tree is not None else {}


def parse_config(source, overrides: dict | None = None) -> RunConfig:
    """Validated RunConfig from a file path or mapping; ``overrides`` is a
    tree merged over the file contents (used for CLI flags)."""
    tree = dict(load_tree(source))
    for key, val in (overrides or {}).items():
        if isinstance(val, dict):
            tree[key] = dict(tree.get(key) or {}, **val)
        else:
            tree[key] = val
    if "lattice" not in tree:
        raise SchemaError("missing required key", "lattice")
    cfg = _fill(tree, SCHEMA)

    lattice = LatticeKind(_choice(cfg["lattice"], [k.value for k in LatticeKind], "lattice"))
    mode = Mode(_choice(cfg["mode"], [m.value for m in Mode], "mode"))
    kind = NodeKind(_choice(cfg["nodes"]["kind"], [k.value for k in NodeKind], "nodes.kind"))
    method = _choice(cfg["solver"]["method"], list(SOLVER_METHODS), "solver.method")
    kinds = cfg["converge"]["kinds"]
    if kinds is not None:
        kinds = [_choice(k, [x.value for x in NodeKind], f"converge.kinds[{i}]") for i, k in enumerate(kinds)]
        cfg["converge"]["kinds"] = kinds

    bad = []
    g = cfg["geometry"]
    h = cfg["mesh"]["h"]
    if h is None:
        h = DEFAULT_H[lattice]
    if not h > 0:
        bad.append(("mesh.h", f"must be > 0, got {h}"))
    if g["eps"] < 1.0:
        bad.append(("geometry.eps", "relative permittivity must be >= 1"))
    if g["eps_background"] < 1.0:
        bad.append(("geometry.eps_background", "relative permittivity must be >= 1"))
    if lattice is LatticeKind.SQUARE and not 0 < g["radius"] < 0.5:
        bad.append(("geometry.radius", "must lie in (0, 0.5)"))
    for path, val in (("bands", cfg["bands"]), ("nodes.degree", cfg["nodes"]["degree"]),
                      ("reference.degree", cfg["reference"]["degree"]), ("run.jobs", cfg["run"]["jobs"])):
        if val < 1:
            bad.append((path, f"must be >= 1, got {val}"))
    if not cfg["solver"]["tol"] > 0:
        bad.append(("solver.tol", "must be > 0"))
    band = cfg["extrema"]["band"]
    if band is None:
        cfg["extrema"]["band"] = cfg["bands"]
    elif not 1 <= band <= cfg["bands"]:
        bad.append(("extrema.band", f"must lie in 1..{cfg['bands']}, got {band}"))
    for path in ("extrema.density", "lebesgue.density"):
        sec, key = path.split(".")
        if cfg[sec][key] < 2:
            bad.append((path, "must be >= 2"))
    degrees = cfg["converge"]["degrees"]
    if not degrees or not all(isinstance(d, int) and d >= 1 for d in degrees):
        bad.append(("converge.degrees", "must be a non-empty list of positive integers"))
    elif degrees != sorted(degrees):
        bad.append(("converge.degrees", "must be ascending"))
    ks = cfg["solve"]["k"]
    if ks is not None and not all(isinstance(k, list) and len(k) == 2 for k in ks):
        bad.append(("solve.k", "must be a list of [k1, k2] pairs"))
    if bad:
        raise ValidationError(bad)

    if lattice is LatticeKind.SQUARE:
        geom = square_geometry(radius=float(g["radius"]), eps=float(g["eps"]), eps_background=float(g["eps_background"]))
    else:
        geom = hexagonal_geometry(eps=float(g["eps"]), eps_background=float(g["eps_background"]))
    recon = ReconstructionConfig(
        geom, mode, kind, cfg["nodes"]["degree"], cfg["bands"], float(h), cfg["reference"]["degree"],
        float(cfg["solver"]["tol"]), method, cfg["mesh"]["seed"], cfg["run"]["jobs"],
    )
    cache = cfg["run"]["cache"]
    return RunConfig(recon, Path(cfg["run"]["out"]), Path(cache) if cache else None,
                     cfg["run"]["jobs"], cfg["run"]["seed"], cfg)
