"""Command line front end.

Subcommands over JSON configs:

* ``simulate``   -- run one solver, write requested output files,
* ``benchmark``  -- minimal-N search per method/target, CSV + Markdown,
* ``neumann``    -- truncated-series trajectories against the exact one,
* ``kernel-dump`` -- debug dump of a two-time kernel table.

Exit codes: 0 success, 2 configuration/schema problem (message names the
offending field), 3 solver failure.
"""

import argparse
import json
import os
import sys
import time
from pathlib import Path


def _fail_config(message: str) -> int:
    print(f"config error: {message}", file=sys.stderr)
    return 2


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


class ConfigError(Exception):
    pass


def _require(obj, key, path):
    if key not in obj:
        raise ConfigError(f"missing field {path}{key}")
    return obj[key]


def _build_common(cfg):
    from .evaluation import default_rho0
    from .spin_systems import system_from_json
    from .waveforms import waveform_from_json

    try:
        system = system_from_json(_require(cfg, "system", ""))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"system: {exc}") from exc
    try:
        waveform = waveform_from_json(_require(cfg, "waveform", ""))
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"waveform: {exc}") from exc
    duration = float(_require(cfg, "duration_s", ""))
    if duration <= 0:
        raise ConfigError("duration_s: must be positive")
    return system, waveform, duration


def _out_path(args, rel):
    base = args.output_dir or os.environ.get("STARPROP_OUTPUT_DIR") or "."
    path = Path(base) / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _rule_from(args, cfg_solve):
    from .grids import parse_rule

    if args.quadrature:
        return parse_rule(args.quadrature)
    return parse_rule(cfg_solve.get("rule", "simpson"))


def cmd_simulate(args) -> int:
    from .evaluation import (
        DensityTrajectory,
        bloch_trajectory,
        default_rho0,
        propagate_density,
        relative_error,
    )
    from .grids import TimeGrid
    from .io import (
        write_bloch_csv,
        write_density_csv,
        write_error_csv,
        write_propagator_csv,
    )
    from .pathsum import SolveConfig, solve
    from .reference import RKConfig, pcpa, rk_dense, rk_solve
    from .spin_systems import SystemKind

    try:
        cfg = _load_json(args.config)
    except FileNotFoundError:
        return _fail_config(f"no such file: {args.config}")
    except json.JSONDecodeError as exc:
        return _fail_config(f"invalid JSON: {exc}")
    try:
        system, waveform, duration = _build_common(cfg)
        solve_cfg = cfg.get("solve", {})
        n_points = int(_require(solve_cfg, "n_points", "solve."))
        n_intervals = int(solve_cfg.get("n_intervals", 1))
        rule = _rule_from(args, solve_cfg)
        method = cfg.get("method", "ps")
        if method not in ("ps", "pcpa", "rk"):
            raise ConfigError(f"method: unknown method {method!r}")
        outputs = cfg.get("outputs", [])
        for k, out in enumerate(outputs):
            if out.get("kind") not in ("propagator", "density", "bloch", "error"):
                raise ConfigError(f"outputs[{k}].kind: unknown kind {out.get('kind')!r}")
            if "path" not in out:
                raise ConfigError(f"outputs[{k}].path: missing")
    except ConfigError as exc:
        return _fail_config(str(exc))

    try:
        t0 = time.perf_counter()
        if method == "ps":
            traj = solve(
                system,
                waveform,
                SolveConfig(n_points, rule, n_intervals),
                duration,
            )
        elif method == "pcpa":
            grid = TimeGrid(0.0, duration, n_points)
            traj = pcpa(system, waveform, grid, sampling=cfg.get("pcpa_sampling", "midpoint"))
        else:
            grid = TimeGrid(0.0, duration, n_points)
            traj = rk_solve(system, waveform, RKConfig(), grid=grid)
        wall = time.perf_counter() - t0

        rho0 = cfg.get("rho0")
        density = None
        error_value = None
        for out in outputs:
            path = _out_path(args, out["path"])
            if out["kind"] == "propagator":
                write_propagator_csv(path, cfg, traj)
            elif out["kind"] == "density":
                r0 = (
                    __import__("numpy").asarray(rho0, dtype=complex)
                    if rho0 is not None
                    else default_rho0(system.dim)
                )
                density = propagate_density(traj, r0)
                write_density_csv(path, cfg, density)
            elif out["kind"] == "bloch":
                psi0 = cfg.get("psi0", [0.0, 0.0, 1.0])
                import numpy as np

                bl = bloch_trajectory(traj, np.asarray(psi0, dtype=float))
                write_bloch_csv(path, cfg, traj.grid, bl)
            elif out["kind"] == "error":
                import numpy as np

                r0 = (
                    np.asarray(rho0, dtype=complex)
                    if rho0 is not None
                    else default_rho0(system.dim)
                )
                dense = rk_dense(system, waveform, RKConfig(), (0.0, duration))
                ref_u = dense(traj.grid.times)
                ref_u[0] = np.eye(system.dim)
                rho_r = DensityTrajectory(
                    traj.grid, np.einsum("kab,bc,kdc->kad", ref_u, r0, ref_u.conj())
                )
                error_value = relative_error(propagate_density(traj, r0), rho_r)
                write_error_csv(path, cfg, traj.grid, error_value)
        drift = traj.unitarity_drift() if system.kind is not SystemKind.MONO_SO3_CARTESIAN else float("nan")
        summary = (
            f"method={traj.method_tag} N={traj.grid.n_points} "
            f"unitarity_drift={drift:.3e} wall={wall:.3f}s"
        )
        if error_value is not None:
            summary += f" relative_error={error_value:.3e}"
        print(summary)
        return 0
    except ConfigError as exc:
        return _fail_config(str(exc))
    except Exception as exc:  # solver failure
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


def cmd_benchmark(args) -> int:
    from .evaluation import benchmark, frontier, scenario_from_json
    from .io import write_frontier_csv, write_reports_csv, write_reports_markdown

    try:
        cfg = _load_json(args.scenario)
    except FileNotFoundError:
        return _fail_config(f"no such file: {args.scenario}")
    except json.JSONDecodeError as exc:
        return _fail_config(f"invalid JSON: {exc}")
    try:
        scenario = scenario_from_json(cfg)
        if not scenario.rows and not scenario.frontier:
            raise ConfigError("rows: scenario declares no benchmark rows")
    except (ConfigError, KeyError, ValueError) as exc:
        return _fail_config(str(exc))
    try:
        stem = Path(args.scenario).stem
        if scenario.frontier:
            reports = frontier(scenario)
            out = _out_path(args, f"{stem}_frontier.csv")
            write_frontier_csv(out, cfg, reports)
            print(f"wrote {out}")
        if scenario.rows:
            reports = benchmark(scenario, jobs=args.jobs)
            out_csv = _out_path(args, f"{stem}_report.csv")
            out_md = _out_path(args, f"{stem}_report.md")
            write_reports_csv(out_csv, cfg, reports)
            write_reports_markdown(out_md, stem, reports)
            for r in reports:
                print(
                    f"{r.method_tag} target={r.target_error:.0e} -> N={r.n_points} "
                    f"achieved={r.achieved_error:.3e} time={r.wall_time:.3f}s {r.flag}"
                )
            print(f"wrote {out_csv} and {out_md}")
        return 0
    except Exception as exc:
        print(f"benchmark error: {exc}", file=sys.stderr)
        return 3


def cmd_neumann(args) -> int:
    import numpy as np

    from .grids import TimeGrid
    from .io import write_series_csv
    from .pathsum import neumann_u22, u22_trajectory
    from .spin_systems import SystemKind

    try:
        cfg = _load_json(args.config)
    except FileNotFoundError:
        return _fail_config(f"no such file: {args.config}")
    except json.JSONDecodeError as exc:
        return _fail_config(f"invalid JSON: {exc}")
    orders = []
    for tok in (args.orders or "").split(","):
        tok = tok.strip()
        if not tok:
            continue
        m = int(tok)
        if m <= 0:
            return _fail_config(f"orders: must be positive, got {m}")
        orders.append(m)
    try:
        system, waveform, duration = _build_common(cfg)
        if system.kind not in (SystemKind.MONO_SO3_SHIFT, SystemKind.MONO_SO3_CARTESIAN):
            raise ConfigError("system.kind: series comparison runs on the SO(3) kinds")
        solve_cfg = cfg.get("solve", {})
        n_points = int(_require(solve_cfg, "n_points", "solve."))
        rule = _rule_from(args, solve_cfg)
    except ConfigError as exc:
        return _fail_config(str(exc))
    try:
        grid = TimeGrid(0.0, duration, n_points)
        exact = u22_trajectory(system, waveform, grid, rule)
        series = {"u22_exact": exact}
        sup = {}
        for m in orders:
            approx = neumann_u22(system, waveform, grid, rule, m)
            series[f"u22_m{m}"] = approx
            sup[f"m{m}"] = float(np.max(np.abs(approx - exact)))
        out = _out_path(args, args.out or "neumann_u22.csv")
        write_series_csv(out, cfg, grid, series, sup)
        for m in orders:
            print(f"order {m}: sup_error={sup[f'm{m}']:.6e}")
        print(f"wrote {out}")
        return 0
    except Exception as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


def cmd_kernel_dump(args) -> int:
    from .grids import TimeGrid
    from .io import write_kernel_csv
    from .pathsum import b_kernel, fourier_kernel
    from .spin_systems import SystemKind

    try:
        cfg = _load_json(args.config)
    except FileNotFoundError:
        return _fail_config(f"no such file: {args.config}")
    except json.JSONDecodeError as exc:
        return _fail_config(f"invalid JSON: {exc}")
    try:
        system, waveform, duration = _build_common(cfg)
        solve_cfg = cfg.get("solve", {})
        n_points = int(_require(solve_cfg, "n_points", "solve."))
        rule = _rule_from(args, solve_cfg)
    except ConfigError as exc:
        return _fail_config(str(exc))
    if args.omega is not None:
        omega = float(args.omega)
    elif system.kind in (SystemKind.MONO_SO3_SHIFT, SystemKind.MONO_SO3_CARTESIAN):
        omega = system.offsets[0]
    elif system.kind is SystemKind.MONO_SU2:
        omega = 0.5 * system.offsets[0]
    elif system.kind is SystemKind.BIPARTITE:
        omega = 0.5 * (system.offsets[0] + system.offsets[1])
    else:
        return _fail_config("kernel dump needs --omega for this system kind")
    try:
        grid = TimeGrid(0.0, duration, n_points)
        kernel = (
            b_kernel(waveform, grid, omega, rule)
            if args.kernel == "b"
            else fourier_kernel(waveform, grid, omega, rule)
        )
        out = _out_path(args, args.out or f"kernel_{args.kernel}.csv")
        write_kernel_csv(out, cfg, kernel, {"kernel": args.kernel, "omega_rad_s": omega})
        print(f"wrote {out}")
        return 0
    except Exception as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="starprop",
        description="Propagators of driven spin systems via discretized star-product resolvents",
    )
    parser.add_argument("--quadrature", choices=["rect", "trap", "simpson"], default=None)
    parser.add_argument("--threads", type=int, default=None, help="BLAS thread cap")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
    parser.add_argument("--output-dir", default=None, help="base directory for output files")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one solver over a JSON config")
    p_sim.add_argument("config")
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("benchmark", help="minimal-N search over a scenario file")
    p_bench.add_argument("scenario")
    p_bench.add_argument("--jobs", type=int, default=1)
    p_bench.set_defaults(func=cmd_benchmark)

    p_neu = sub.add_parser("neumann", help="truncated-series trajectories vs exact")
    p_neu.add_argument("config")
    p_neu.add_argument("--orders", default="", help="comma separated positive orders")
    p_neu.add_argument("--out", default=None)
    p_neu.set_defaults(func=cmd_neumann)

    p_dump = sub.add_parser("kernel-dump", help="dump a two-time kernel table to CSV")
    p_dump.add_argument("config")
    p_dump.add_argument("--kernel", choices=["b", "fourier"], default="b")
    p_dump.add_argument("--omega", default=None)
    p_dump.add_argument("--out", default=None)
    p_dump.set_defaults(func=cmd_kernel_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    if args.seed is not None:
        import numpy as np

        np.random.seed(args.seed)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
