"""Accuracy evaluation and the benchmark harness.

The accuracy figure of a method is the time-averaged deviation from one of
the normalized Frobenius scalar product between its density trajectory and
the reference trajectory,

    E = (1/T) ∫_0^T [ 1 - Tr(rho_M^dag rho_r) / sqrt(N_M N_r) ] dτ,

with N_X = Tr(rho_X^dag rho_X).  (The normalizer under the square root is
the product of squared conventional Frobenius norms, so the quotient is the
standard normalized inner product; it is zero exactly when the trajectories
coincide.)  The time integral uses the trapezoid rule on the shared grid.
State-mode comparisons use the same construction on state vectors with the
real part of the overlap.

The benchmark harness searches, per method and target accuracy, for the
smallest grid size whose error meets the target: doubling from the lower
bound until the target is met, then integer bisection.  The reference is a
single adaptive Runge-Kutta solve at 1e-13 tolerances whose dense output is
evaluated on each candidate grid, so no interpolation of the candidate is
ever involved.  Wall times are reported (median of 3, after a warm-up) but
are never part of any acceptance decision.
"""

import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .grids import QuadratureRule, TimeGrid, parse_rule
from .pathsum import PropagatorTrajectory, SolveConfig, StateTrajectory, solve
from .reference import RKConfig, pcpa, rk_dense
from .spin_systems import SystemKind, SystemSpec, shift_basis_matrix, system_from_json
from .waveforms import Waveform, waveform_from_json


@dataclass(frozen=True, eq=False)
class DensityTrajectory:
    grid: TimeGrid
    rho: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rho, dtype=np.complex128)
        if r.ndim != 3 or r.shape[0] != self.grid.n_points or r.shape[1] != r.shape[2]:
            raise ValueError(f"rho must be (n_points, d, d), got {r.shape}")
        object.__setattr__(self, "rho", r)


@dataclass
class ErrorReport:
    """One benchmark row: method, target, grid size found, achieved error."""

    method_tag: str
    target_error: float
    n_points: int
    achieved_error: float
    wall_time: float
    flag: str = ""  # "", "at_lower_bound", "unreachable", "capped"


def default_rho0(dim: int) -> np.ndarray:
    """Longitudinal equilibrium deviation Σ I_z^(i), unit Frobenius norm.

    This is the conventional initial operator when none is specified; it is
    traceless, which the propagation accepts silently (the accuracy metric
    is scale invariant).
    """
    if dim == 2:
        rho = np.diag([0.5, -0.5]).astype(np.complex128)
    elif dim == 4:
        rho = np.diag([1.0, 0.0, 0.0, -1.0]).astype(np.complex128)
    elif dim == 8:
        rho = np.diag([1.5, 0.5, 0.5, -0.5, 0.5, -0.5, -0.5, -1.5]).astype(np.complex128)
    else:
        raise ValueError(f"no default initial operator for dimension {dim}")
    return rho / np.sqrt(np.trace(rho.conj().T @ rho).real)


def propagate_density(traj: PropagatorTrajectory, rho0: np.ndarray) -> DensityTrajectory:
    """rho(t_k) = U(t_k) rho0 U(t_k)^dag per node.

    rho0 must be Hermitian; a trace that is neither ~1 nor ~0 (deviation
    operators are common) draws a warning, not an error.
    """
    rho0 = np.asarray(rho0, dtype=np.complex128)
    d = traj.dim
    if rho0.shape != (d, d):
        raise ValueError(f"rho0 must be ({d}, {d}), got {rho0.shape}")
    if np.max(np.abs(rho0 - rho0.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(rho0))):
        warnings.warn("initial operator is not Hermitian", stacklevel=2)
    tr = complex(np.trace(rho0))
    if min(abs(tr), abs(tr - 1.0)) > 1e-9:
        warnings.warn(f"initial operator trace is {tr:.3g}, neither 0 nor 1", stacklevel=2)
    u = traj.matrices
    rho = np.einsum("kab,bc,kdc->kad", u, rho0, u.conj())
    return DensityTrajectory(traj.grid, rho)


def relative_error(rho_m: DensityTrajectory, rho_r: DensityTrajectory) -> float:
    """Time-averaged deviation from 1 of the normalized Frobenius overlap."""
    if rho_m.grid != rho_r.grid:
        raise ValueError("density trajectories live on different grids")
    a, b = rho_m.rho, rho_r.rho
    overlap = np.einsum("kab,kab->k", a.conj(), b).real
    na = np.einsum("kab,kab->k", a.conj(), a).real
    nb = np.einsum("kab,kab->k", b.conj(), b).real
    integrand = 1.0 - overlap / np.sqrt(na * nb)
    return float(np.trapz(integrand, dx=rho_m.grid.dt) / rho_m.grid.span)


def state_relative_error(psi_m: np.ndarray, psi_r: np.ndarray, grid: TimeGrid) -> float:
    """Same construction on state vectors, with the real part of the overlap."""
    a = np.asarray(psi_m)
    b = np.asarray(psi_r)
    overlap = np.einsum("ka,ka->k", a.conj(), b).real
    na = np.einsum("ka,ka->k", a.conj(), a).real
    nb = np.einsum("ka,ka->k", b.conj(), b).real
    integrand = 1.0 - overlap / np.sqrt(na * nb)
    return float(np.trapz(integrand, dx=grid.dt) / grid.span)


def bloch_trajectory(traj: PropagatorTrajectory, psi0: np.ndarray) -> np.ndarray:
    """Cartesian Bloch vector g(t_k) from a shift-basis 3x3 propagator.

    psi0 is the Cartesian start vector (unit norm); the result is real up to
    method error and is returned with the imaginary part dropped.
    """
    psi0 = np.asarray(psi0, dtype=np.complex128)
    if psi0.shape != (3,):
        raise ValueError("psi0 must be a Cartesian 3-vector")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        warnings.warn("psi0 is not unit norm", stacklevel=2)
    ub = shift_basis_matrix()
    cart = np.einsum("ab,kbc,cd,d->ka", ub.conj().T, traj.matrices, ub, psi0)
    return cart.real


# ---------------------------------------------------------------------------
# benchmark harness


@dataclass
class BenchmarkRow:
    method: str  # "ps" or "pcpa"
    rule: QuadratureRule | None
    target_error: float
    n_min: int
    n_max: int
    time_budget_s: float | None = None


@dataclass
class BenchmarkScenario:
    system: SystemSpec
    waveform: Waveform
    duration: float
    rows: list
    mode: str = "density"  # or "state"
    rho0: np.ndarray | None = None
    psi0: np.ndarray | None = None
    reference: RKConfig = field(default_factory=RKConfig)
    pcpa_sampling: str = "left"
    frontier: dict | None = None


def scenario_from_json(obj: dict) -> BenchmarkScenario:
    system = system_from_json(obj["system"])
    waveform = waveform_from_json(obj["waveform"])
    duration = float(obj["duration_s"])
    rows = []
    for row in obj.get("rows", []):
        rows.append(
            BenchmarkRow(
                method=row["method"],
                rule=parse_rule(row["rule"]) if "rule" in row else None,
                target_error=float(row["target_error"]),
                n_min=int(row["n_min"]),
                n_max=int(row["n_max"]),
                time_budget_s=(float(row["time_budget_s"]) if "time_budget_s" in row else None),
            )
        )
    ref = obj.get("reference", {})
    rho0 = obj.get("rho0")
    psi0 = obj.get("psi0")
    return BenchmarkScenario(
        system=system,
        waveform=waveform,
        duration=duration,
        rows=rows,
        mode=obj.get("mode", "density"),
        rho0=(np.asarray(rho0, dtype=np.complex128) if rho0 is not None else None),
        psi0=(np.asarray(psi0, dtype=float) if psi0 is not None else None),
        reference=RKConfig(
            rel_tol=float(ref.get("rtol", 1e-13)), abs_tol=float(ref.get("atol", 1e-13))
        ),
        pcpa_sampling=obj.get("pcpa_sampling", "left"),
        frontier=obj.get("frontier"),
    )


class _Evaluator:
    """Shared reference solution plus per-N error evaluation for one scenario."""

    def __init__(self, scenario: BenchmarkScenario):
        self.sc = scenario
        spec = scenario.system
        self.state_mode = scenario.mode == "state"
        if self.state_mode:
            if spec.kind not in (SystemKind.MONO_SO3_CARTESIAN, SystemKind.MONO_SO3_SHIFT):
                raise ValueError("state mode is defined for the SO(3) kinds")
            psi0 = scenario.psi0 if scenario.psi0 is not None else np.array([0.0, 0.0, 1.0])
            self.psi0 = np.asarray(psi0, dtype=np.complex128)
            cart_spec = SystemSpec(
                SystemKind.MONO_SO3_CARTESIAN, spec.offsets, spec.couplings
            )
            self.cart_spec = cart_spec
            self.dense = rk_dense(
                cart_spec, scenario.waveform, scenario.reference, (0.0, scenario.duration),
                initial=self.psi0,
            )
        else:
            self.rho0 = (
                scenario.rho0 if scenario.rho0 is not None else default_rho0(spec.dim)
            )
            self.dense = rk_dense(
                spec, scenario.waveform, scenario.reference, (0.0, scenario.duration)
            )
        self._ub = shift_basis_matrix()

    def _grid(self, n: int) -> TimeGrid:
        return TimeGrid(0.0, self.sc.duration, n)

    def run_method(self, method: str, rule, n: int):
        grid = self._grid(n)
        spec = self.sc.system
        if method == "ps":
            traj = solve(spec, self.sc.waveform, SolveConfig(n, rule), self.sc.duration)
            if self.state_mode:
                u = traj.matrices
                if spec.kind is SystemKind.MONO_SO3_SHIFT:
                    u = np.einsum("ab,kbc,cd->kad", self._ub.conj().T, u, self._ub)
                states = np.einsum("kab,b->ka", u, self.psi0)
                return StateTrajectory(grid, states, traj.method_tag)
            return traj
        if method == "pcpa":
            if self.state_mode:
                return pcpa(
                    self.cart_spec, self.sc.waveform, grid,
                    sampling=self.sc.pcpa_sampling, initial=self.psi0,
                )
            return pcpa(spec, self.sc.waveform, grid, sampling=self.sc.pcpa_sampling)
        raise ValueError(f"unknown method {method!r}")

    def error_of(self, result) -> float:
        grid = result.grid
        ref_vals = self.dense(grid.times)
        if self.state_mode:
            return state_relative_error(result.states, ref_vals, grid)
        ref_vals[0] = np.eye(self.sc.system.dim)
        rho_r = DensityTrajectory(
            grid, np.einsum("kab,bc,kdc->kad", ref_vals, self.rho0, ref_vals.conj())
        )
        rho_m = propagate_density(result, self.rho0)
        return relative_error(rho_m, rho_r)

    def error_at(self, method: str, rule, n: int) -> float:
        return self.error_of(self.run_method(method, rule, n))


def _timed_run(evaluator, method, rule, n, repeats=3):
    evaluator.run_method(method, rule, n)  # warm-up, excluded
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        evaluator.run_method(method, rule, n)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def _search_row(evaluator: _Evaluator, row: BenchmarkRow) -> ErrorReport:
    tag = row.method if row.rule is None else f"{row.method}-{row.rule.value}"
    start = time.perf_counter()
    budget = row.time_budget_s

    def out_of_budget():
        return budget is not None and time.perf_counter() - start > budget

    cache: dict[int, float] = {}

    def err(n: int) -> float:
        if n not in cache:
            cache[n] = evaluator.error_at(row.method, row.rule, n)
        return cache[n]

    if err(row.n_min) <= row.target_error:
        wall = _timed_run(evaluator, row.method, row.rule, row.n_min)
        return ErrorReport(tag, row.target_error, row.n_min, err(row.n_min), wall, "at_lower_bound")

    lo, hi = row.n_min, None
    n = row.n_min
    while n < row.n_max:
        n = min(2 * n, row.n_max)
        if out_of_budget():
            best = min(cache, key=cache.get)
            return ErrorReport(tag, row.target_error, best, cache[best], float("nan"), "capped")
        if err(n) <= row.target_error:
            hi = n
            break
        lo = n
    if hi is None:
        best = min(cache, key=cache.get)
        return ErrorReport(tag, row.target_error, best, cache[best], float("nan"), "unreachable")

    while hi - lo > 1:
        if out_of_budget():
            return ErrorReport(tag, row.target_error, hi, cache[hi], float("nan"), "capped")
        mid = (lo + hi) // 2
        if err(mid) <= row.target_error:
            hi = mid
        else:
            lo = mid
    wall = _timed_run(evaluator, row.method, row.rule, hi)
    return ErrorReport(tag, row.target_error, hi, cache[hi], wall)


def benchmark(scenario: BenchmarkScenario, jobs: int = 1) -> list:
    """Minimal-N search for every scenario row; returns one report per row."""
    evaluator = _Evaluator(scenario)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda r: _search_row(evaluator, r), scenario.rows))
    return [_search_row(evaluator, row) for row in scenario.rows]


def frontier(scenario: BenchmarkScenario) -> list:
    """Error-versus-time points at fixed grid sizes (no search).

    The scenario's ``frontier`` object names methods and the shared list of
    grid sizes; the result rows are (method_tag, n, wall_time, error).
    """
    if not scenario.frontier:
        raise ValueError("scenario carries no frontier section")
    evaluator = _Evaluator(scenario)
    out = []
    for m in scenario.frontier["methods"]:
        method = m["method"]
        rule = parse_rule(m["rule"]) if "rule" in m else None
        tag = method if rule is None else f"{method}-{rule.value}"
        for n in scenario.frontier["n_values"]:
            res = evaluator.run_method(method, rule, int(n))
            err = evaluator.error_of(res)
            wall = _timed_run(evaluator, method, rule, int(n))
            out.append(ErrorReport(tag, float("nan"), int(n), err, wall))
    return out
