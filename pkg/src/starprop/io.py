"""CSV / Markdown writers with deterministic metadata headers.

Numeric CSV files carry '#'-prefixed metadata lines (config hash, package
version, grid) followed by a header row and full-double-precision values
('%.17g', '.' decimal, ',' separator).  Nothing time- or host-dependent goes
into numeric files, so identical configs reproduce byte-identical output.
"""

import hashlib
import json

import numpy as np

from . import __version__
from .grids import TimeGrid


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def _fmt(x: float) -> str:
    return "%.17g" % x


def _meta_lines(config: dict, grid: TimeGrid, extra: dict | None = None) -> list:
    lines = [
        f"# starprop {__version__}",
        f"# config_hash {config_hash(config)}",
        f"# grid t_start={_fmt(grid.t_start)} t_end={_fmt(grid.t_end)} n_points={grid.n_points}",
    ]
    for key, val in (extra or {}).items():
        lines.append(f"# {key} {val}")
    return lines


def write_complex_table(path, config, grid, names, columns, extra=None):
    """Write per-node complex columns as re/im pairs."""
    header = ["k", "t_s"]
    for name in names:
        header += [f"{name}_re", f"{name}_im"]
    with open(path, "w") as fh:
        fh.write("\n".join(_meta_lines(config, grid, extra)) + "\n")
        fh.write(",".join(header) + "\n")
        for k, t in enumerate(grid.times):
            row = [str(k), _fmt(t)]
            for col in columns:
                row += [_fmt(col[k].real), _fmt(col[k].imag)]
            fh.write(",".join(row) + "\n")


def write_propagator_csv(path, config, traj, extra=None):
    d = traj.dim
    names = [f"u{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    cols = [traj.matrices[:, i, j] for i in range(d) for j in range(d)]
    meta = {"method": traj.method_tag}
    meta.update(extra or {})
    write_complex_table(path, config, traj.grid, names, cols, meta)


def write_density_csv(path, config, density, extra=None):
    d = density.rho.shape[1]
    names = [f"rho{i + 1}{j + 1}" for i in range(d) for j in range(d)]
    cols = [density.rho[:, i, j] for i in range(d) for j in range(d)]
    write_complex_table(path, config, density.grid, names, cols, extra)


def write_bloch_csv(path, config, grid, bloch, extra=None):
    with open(path, "w") as fh:
        fh.write("\n".join(_meta_lines(config, grid, extra)) + "\n")
        fh.write("k,t_s,gx,gy,gz\n")
        for k, t in enumerate(grid.times):
            fh.write(
                ",".join([str(k), _fmt(t)] + [_fmt(v) for v in bloch[k]]) + "\n"
            )


def write_error_csv(path, config, grid, error_value, extra=None):
    meta = {"relative_error": _fmt(error_value)}
    meta.update(extra or {})
    with open(path, "w") as fh:
        fh.write("\n".join(_meta_lines(config, grid, meta)) + "\n")
        fh.write("relative_error\n")
        fh.write(_fmt(error_value) + "\n")


def write_kernel_csv(path, config, kernel, extra=None):
    """Lower-triangle dump: rows (i, j, re, im)."""
    sm = kernel.smooth
    with open(path, "w") as fh:
        fh.write("\n".join(_meta_lines(config, kernel.grid, extra)) + "\n")
        fh.write("i,j,re,im\n")
        n = kernel.grid.n_points
        for i in range(n):
            for j in range(i + 1):
                fh.write(f"{i},{j},{_fmt(sm[i, j].real)},{_fmt(sm[i, j].imag)}\n")


def write_reports_csv(path, config, reports):
    with open(path, "w") as fh:
        fh.write(f"# starprop {__version__}\n")
        fh.write(f"# config_hash {config_hash(config)}\n")
        fh.write("method,target_error,n_points,achieved_error,wall_time_s,flag\n")
        for r in reports:
            fh.write(
                ",".join(
                    [
                        r.method_tag,
                        _fmt(r.target_error),
                        str(r.n_points),
                        _fmt(r.achieved_error),
                        _fmt(r.wall_time),
                        r.flag,
                    ]
                )
                + "\n"
            )


def write_reports_markdown(path, title, reports):
    with open(path, "w") as fh:
        fh.write(f"# {title}\n\n")
        fh.write("| Method | target E | N | achieved E | Time (s) | flag |\n")
        fh.write("|---|---|---|---|---|---|\n")
        for r in reports:
            fh.write(
                f"| {r.method_tag} | {r.target_error:.0e} | {r.n_points} "
                f"| {r.achieved_error:.3e} | {r.wall_time:.3f} | {r.flag} |\n"
            )


def write_frontier_csv(path, config, reports):
    with open(path, "w") as fh:
        fh.write(f"# starprop {__version__}\n")
        fh.write(f"# config_hash {config_hash(config)}\n")
        fh.write("method,n_points,wall_time_s,error\n")
        for r in reports:
            fh.write(
                f"{r.method_tag},{r.n_points},{_fmt(r.wall_time)},{_fmt(r.achieved_error)}\n"
            )


def write_series_csv(path, config, grid, named_series, sup_errors=None):
    """Trajectory series (complex) plus optional per-series sup-error metadata."""
    extra = {}
    if sup_errors:
        for name, val in sup_errors.items():
            extra[f"sup_error_{name}"] = _fmt(val)
    write_complex_table(path, config, grid, list(named_series), list(named_series.values()), extra)
