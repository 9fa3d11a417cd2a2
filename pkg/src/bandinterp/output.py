"""Plain-text writers for CLI artifacts.  Primary outputs are deterministic;
anything run-dependent goes to a ``.meta.json`` sidecar."""

from __future__ import annotations

import json
import platform
import time
from pathlib import Path

import numpy as np


def num(x):
    return f"{float(x):.17g}"


def write_band_table(path, ks, freqs, header=("k1", "k2", "band", "freq")):
    """CSV rows k1, k2, band (1-based), freq."""
    rows = [",".join(header)]
    for k, f in zip(np.atleast_2d(ks), np.atleast_2d(freqs)):
        rows += [f"{num(k[0])},{num(k[1])},{b + 1},{num(v)}" for b, v in enumerate(f)]
    Path(path).write_text("\n".join(rows) + "\n")


def read_band_table(path):
    lines = Path(path).read_text().splitlines()[1:]
    data = np.array([[float(t) for t in ln.split(",")] for ln in lines])
    return data


def write_error_report(path, rep):
    lines = [
        "# bandinterp error report",
        f"kind {rep.kind}",
        f"degree {rep.degree}",
        f"nodes {rep.n_nodes}",
        f"solves {rep.n_solves}",
        f"reference_points {len(rep.reference_k)}",
        f"error_inf {num(rep.error_inf)}",
        f"error_avg {num(rep.error_avg)}",
    ]
    for b, (e, k) in enumerate(zip(rep.band_max, rep.band_argmax)):
        lines.append(f"band {b + 1} max {num(e)} at {num(k[0])} {num(k[1])}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_error_report(path):
    out = {}
    for ln in Path(path).read_text().splitlines():
        if ln.startswith("#") or not ln.strip():
            continue
        key, *rest = ln.split()
        if key != "band":
            out[key] = rest[0]
    return out


def write_extrema(path, res, lattice_constant=1.0):
    s = 1.0 / lattice_constant
    lines = [
        "# bandinterp extrema (k in units of 1/a)",
        f"band {res.band + 1}",
        f"sense {res.sense}",
        f"value {num(res.value)}",
        f"location {num(res.location[0] * s)} {num(res.location[1] * s)}",
        f"boundary_value {num(res.boundary_value)}",
        f"boundary_location {num(res.boundary_location[0] * s)} {num(res.boundary_location[1] * s)}",
        f"interior {str(res.interior).lower()}",
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def write_convergence(path, rows):
    lines = ["kind,degree,solves,error_inf,error_avg"]
    lines += [f"{k},{n},{s},{num(ei)},{num(ea)}" for k, n, s, ei, ea in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def write_band_path(path, s, ks, freqs):
    m = freqs.shape[1]
    lines = ["s,k1,k2," + ",".join(f"band{b + 1}" for b in range(m))]
    for si, k, f in zip(s, ks, freqs):
        lines.append(",".join([num(si), num(k[0]), num(k[1])] + [num(v) for v in f]))
    Path(path).write_text("\n".join(lines) + "\n")


def write_meta(path, /, **info):
    from . import __version__

    meta = {"version": __version__, "python": platform.python_version(),
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), **info}
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
