"""Reference integrators: piecewise-constant steps and adaptive Runge-Kutta.

The piecewise-constant propagator approximation (PCPA) freezes the
Hamiltonian once per step and multiplies exact step exponentials,

    U(t_{k+1}) = exp(-i H(t*) dt) U(t_k),

sampling t* at the step midpoint by default (the stronger baseline) or at
the left endpoint (the textbook form used by the benchmark harness).  Step
exponentials are exact: a closed form for 2x2 Hermitian generators, the
rotation formula for the real 3x3 Bloch generator, and a batched Hermitian
eigendecomposition otherwise.

The machine-precision oracle is a Dormand-Prince 5(4) embedded pair [1] with
the classical quartic dense-output interpolant, i.e. the same method family
as MATLAB's ode45.  Coefficients are hard-coded below.

[1] J. R. Dormand, P. J. Prince, "A family of embedded Runge-Kutta
    formulae", J. Comput. Appl. Math. 6 (1980) 19-26.
"""

from dataclasses import dataclass

import numpy as np

from .grids import TimeGrid
from .pathsum import PropagatorTrajectory, StateTrajectory
from .spin_systems import SystemKind, SystemSpec, generator_structure, hamiltonian_stack
from .waveforms import Waveform, beta


class StepUnderflowError(RuntimeError):
    """Adaptive step fell below 1e-15 of the integration span."""


@dataclass(frozen=True)
class RKConfig:
    rel_tol: float = 1e-13
    abs_tol: float = 1e-13
    max_step: float = np.inf
    dense_output_nodes: TimeGrid | None = None

    def __post_init__(self):
        for name, tol in (("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)):
            if not 0.0 < tol <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2], got {tol}")


# ---------------------------------------------------------------------------
# PCPA


def _su2_step_exponentials(h_stack: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i H dt) for a stack of 2x2 Hermitian H via the Pauli closed form."""
    a = 0.5 * (h_stack[:, 0, 0] + h_stack[:, 1, 1]).real
    bz = 0.5 * (h_stack[:, 0, 0] - h_stack[:, 1, 1]).real
    bx = h_stack[:, 1, 0].real
    by = h_stack[:, 1, 0].imag
    norm = np.sqrt(bx**2 + by**2 + bz**2)
    theta = norm * dt
    sinc = np.where(norm > 0.0, np.sin(theta) / np.where(norm > 0.0, norm, 1.0), dt)
    cos = np.cos(theta)
    phase = np.exp(-1j * a * dt)
    out = np.empty_like(h_stack)
    out[:, 0, 0] = phase * (cos - 1j * sinc * bz)
    out[:, 1, 1] = phase * (cos + 1j * sinc * bz)
    out[:, 0, 1] = phase * (-1j * sinc * (bx - 1j * by))
    out[:, 1, 0] = phase * (-1j * sinc * (bx + 1j * by))
    return out


def _rotation_step_exponentials(a_stack: np.ndarray, dt: float) -> np.ndarray:
    """exp(A dt) for a stack of real antisymmetric 3x3 Bloch generators."""
    w1 = a_stack[:, 2, 1]
    w2 = a_stack[:, 0, 2]
    w3 = a_stack[:, 1, 0]
    norm = np.sqrt(w1**2 + w2**2 + w3**2)
    theta = norm * dt
    safe = np.where(norm > 0.0, norm, 1.0)
    s = np.where(norm > 0.0, np.sin(theta) / safe, dt)
    c = np.where(norm > 0.0, (1.0 - np.cos(theta)) / safe**2, 0.5 * dt**2)
    k2 = np.matmul(a_stack, a_stack)
    return np.eye(3) + s[:, None, None] * a_stack + c[:, None, None] * k2


def _hermitian_step_exponentials(h_stack: np.ndarray, dt: float) -> np.ndarray:
    evals, vecs = np.linalg.eigh(h_stack)
    phases = np.exp(-1j * evals * dt)
    return np.einsum("kab,kb,kcb->kac", vecs, phases, vecs.conj())


def _prefix_products(steps: np.ndarray) -> np.ndarray:
    """Inclusive scan S_k = steps[k] @ ... @ steps[0] (fixed association)."""
    out = steps.copy()
    shift = 1
    while shift < out.shape[0]:
        out[shift:] = np.matmul(out[shift:], out[:-shift])
        shift *= 2
    return out


def pcpa(
    spec: SystemSpec,
    wf: Waveform,
    grid: TimeGrid,
    sampling: str = "midpoint",
    initial: np.ndarray | None = None,
):
    """Piecewise-constant propagator approximation on the given grid.

    ``sampling`` is "midpoint" or "left".  With ``initial`` a state vector,
    the state trajectory psi(t_k) = U(t_k) psi0 is returned instead of the
    propagator stack.
    """
    if sampling not in ("midpoint", "left"):
        raise ValueError("sampling must be 'midpoint' or 'left'")
    ts = grid.times
    dt = grid.dt
    t_eval = ts[:-1] + (0.5 * dt if sampling == "midpoint" else 0.0)
    h = hamiltonian_stack(spec, wf, t_eval)
    if spec.kind is SystemKind.MONO_SO3_CARTESIAN:
        steps = _rotation_step_exponentials(h, dt).astype(np.complex128)
    elif spec.dim == 2:
        steps = _su2_step_exponentials(h, dt)
    else:
        steps = _hermitian_step_exponentials(h, dt)
    scans = _prefix_products(steps)
    d = spec.dim
    mats = np.empty((grid.n_points, d, d), dtype=np.complex128)
    mats[0] = np.eye(d)
    mats[1:] = scans
    tag = f"pcpa-{sampling}"
    if initial is not None:
        psi0 = np.asarray(initial, dtype=np.complex128)
        states = np.einsum("kab,b->ka", mats, psi0)
        return StateTrajectory(grid, states, tag)
    return PropagatorTrajectory(grid, mats, tag)


# ---------------------------------------------------------------------------
# Dormand-Prince 5(4)

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_ERR = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)
_D = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)


class DenseSolution:
    """Accepted-step interpolant of one adaptive integration."""

    def __init__(self, t_nodes, conts, shape):
        self.t_nodes = np.asarray(t_nodes)
        self.conts = conts  # (steps, 5, *shape)
        self.shape = shape
        self.n_steps = len(t_nodes) - 1

    def __call__(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        seg = np.clip(np.searchsorted(self.t_nodes, times, side="right") - 1, 0, self.n_steps - 1)
        h = self.t_nodes[seg + 1] - self.t_nodes[seg]
        theta = ((times - self.t_nodes[seg]) / h).reshape((-1,) + (1,) * len(self.shape))
        c = self.conts[seg]
        r1, r2, r3, r4, r5 = (c[:, i] for i in range(5))
        return r1 + theta * (r2 + (1.0 - theta) * (r3 + theta * (r4 + (1.0 - theta) * r5)))


def integrate_dopri5(
    f,
    t0: float,
    t1: float,
    y0: np.ndarray,
    rtol: float,
    atol: float,
    max_step: float = np.inf,
) -> DenseSolution:
    """Adaptive 5(4) integration of dy/dt = f(t, y) with dense output."""
    span = t1 - t0
    y = np.asarray(y0, dtype=np.complex128)
    shape = y.shape
    t = t0
    k1 = f(t, y)

    scale0 = atol + rtol * np.abs(y)
    d0 = np.sqrt(np.mean(np.abs(y / scale0) ** 2))
    d1 = np.sqrt(np.mean(np.abs(k1 / scale0) ** 2))
    h = 1e-6 * span if d1 < 1e-10 else 0.01 * d0 / d1
    h = float(min(h if h > 0 else 1e-6 * span, max_step, span))

    t_nodes = [t0]
    conts = []
    ks = [None] * 7
    while t < t1:
        h = min(h, t1 - t, max_step)
        if h < 1e-15 * span:
            raise StepUnderflowError(
                f"step {h:.3e} fell below 1e-15 of the span at t = {t:.6e}"
            )
        ks[0] = k1
        for i in range(1, 7):
            yi = y + h * sum(a * ks[j] for j, a in enumerate(_A[i]))
            ks[i] = f(t + _C[i] * h, yi)
        y1 = y + h * sum(b * ks[j] for j, b in enumerate(_B5) if b != 0.0)
        err_vec = h * sum(e * ks[j] for j, e in enumerate(_ERR) if e != 0.0)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y1))
        err = float(np.sqrt(np.mean(np.abs(err_vec / scale) ** 2)))
        if err <= 1.0:
            ydiff = y1 - y
            bspl = h * ks[0] - ydiff
            r5 = h * sum(d * ks[j] for j, d in enumerate(_D) if d != 0.0)
            conts.append(np.stack([y, ydiff, bspl, ydiff - h * ks[6] - bspl, r5]))
            t_nodes.append(t + h)
            t = t + h
            y = y1
            k1 = ks[6]  # first-same-as-last
        fac = 0.9 * err ** -0.2 if err > 0 else 5.0
        h = h * min(5.0, max(0.2, fac))
    return DenseSolution(np.array(t_nodes), np.stack(conts), shape)


def _rhs(spec: SystemSpec, wf: Waveform):
    g0, gx, gy = generator_structure(spec)

    def f(t, y):
        bt = beta(wf, t)
        return (g0 + bt.real * gx + bt.imag * gy) @ y

    return f


def rk_dense(
    spec: SystemSpec,
    wf: Waveform,
    cfg: RKConfig,
    t_span: tuple,
    initial: np.ndarray | None = None,
) -> DenseSolution:
    """Adaptive solve of dU/dt = G(t) U (or a state) returning the interpolant."""
    d = spec.dim
    y0 = np.eye(d, dtype=np.complex128) if initial is None else np.asarray(
        initial, dtype=np.complex128
    )
    return integrate_dopri5(
        _rhs(spec, wf), t_span[0], t_span[1], y0, cfg.rel_tol, cfg.abs_tol, cfg.max_step
    )


def rk_solve(
    spec: SystemSpec,
    wf: Waveform,
    cfg: RKConfig,
    initial: np.ndarray | None = None,
    grid: TimeGrid | None = None,
):
    """Adaptive reference solve evaluated on a grid.

    ``initial`` None (or a square matrix) requests propagator mode seeded at
    the identity; a vector requests state mode.  The output grid comes from
    ``grid`` or ``cfg.dense_output_nodes``.
    """
    out_grid = grid or cfg.dense_output_nodes
    if out_grid is None:
        raise ValueError("an output grid is required (grid or cfg.dense_output_nodes)")
    sol = rk_dense(spec, wf, cfg, (out_grid.t_start, out_grid.t_end), initial)
    vals = sol(out_grid.times)
    if initial is not None and np.asarray(initial).ndim == 1:
        return StateTrajectory(out_grid, vals, "rk-dopri5")
    vals[0] = np.eye(spec.dim) if initial is None else np.asarray(initial)
    return PropagatorTrajectory(out_grid, vals, "rk-dopri5")
