"""Propagator solvers built on resolvents of the kernel algebra.

Each solver evaluates the exact walk-sum form of the time-ordered propagator
for its system: diagonal entries (or diagonal blocks of the partitioned
state space) come from resolvents of effective self-energy kernels, and
off-diagonal entries follow by composing the neighbouring resolvent with the
connecting edge and the already-known diagonal history.  Because only values
at (t_i, t_0) enter the final trajectory, most compositions reduce to first
column Volterra solves; kernels whose two-time dependence factors through
cumulative integrals use the separable O(N) fast path.

Conventions shared by every solver here:

* trajectories start exactly at the identity,
* cumulative integrals and composition weights use the configured rule,
* entries related by complex conjugation are filled from their partners,
  never recomputed.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .grids import QuadratureRule, TimeGrid, prefix_integral
from .spin_systems import (
    SystemKind,
    SystemSpec,
    gauge_shift_bipartite,
    partition,
    shift_basis_matrix,
    tripartite_energies,
)
from .star_algebra import (
    SeparableKernel,
    StarKernel,
    convolve_first_column,
    integrate_columns,
    kernel_from_one_variable,
    resolvent_first_column_from_table,
    scalar_separable,
    separable_resolvent_full,
    star_product,
    volterra_apply_from_table,
    volterra_first_column,
)
from .waveforms import Waveform, beta

SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class SolveConfig:
    """Discretization of a path-sum solve.

    ``n_points`` nodes per subinterval, ``n_intervals`` subintervals whose
    end propagators seed the next one; the pure method is n_intervals = 1.
    ``neumann_order`` switches the monopartite middle-entry evaluation to the
    truncated series of that order (None means the exact resolvent).
    """

    n_points: int
    rule: QuadratureRule = QuadratureRule.AVERAGED_SIMPSON
    n_intervals: int = 1
    neumann_order: int | None = None

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("n_points must be at least 2")
        if self.n_intervals < 1:
            raise ValueError("n_intervals must be at least 1")
        if self.neumann_order is not None and self.neumann_order < 1:
            raise ValueError("neumann_order must be positive")


@dataclass(frozen=True, eq=False)
class PropagatorTrajectory:
    """U(t_k) for every grid node, with method metadata."""

    grid: TimeGrid
    matrices: np.ndarray
    method_tag: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=np.complex128)
        n = self.grid.n_points
        if m.ndim != 3 or m.shape[0] != n or m.shape[1] != m.shape[2]:
            raise ValueError(f"matrices must be ({n}, d, d), got {m.shape}")
        object.__setattr__(self, "matrices", m)

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    def unitarity_drift(self) -> float:
        """max_k || U(t_k)^dag U(t_k) - I ||_F; an accuracy signal, not enforced."""
        u = self.matrices
        g = np.einsum("kji,kjl->kil", u.conj(), u)
        g = g - np.eye(self.dim)
        return float(np.sqrt(np.abs(np.einsum("kij,kij->k", g.conj(), g)).max()))


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    """psi(t_k) for every grid node (state-mode solves)."""

    grid: TimeGrid
    states: np.ndarray
    method_tag: str
    meta: dict = field(default_factory=dict)


def config_fingerprint(*parts) -> str:
    """Stable short hash of JSON-serializable metadata."""
    blob = json.dumps(parts, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def fourier_kernel(wf: Waveform, grid: TimeGrid, omega: float, rule: QuadratureRule) -> StarKernel:
    """Windowed Fourier table B[i, j] = ∫_{t_j}^{t_i} e^{-i omega τ} beta(τ) dτ.

    Built from rule-consistent running integrals, so B[i, j] = C(t_i) - C(t_j)
    exactly; the table stores i >= j and is antisymmetric in the continuum
    sense.
    """
    t = grid.times
    c = prefix_integral(np.exp(-1j * omega * t) * beta(wf, t), grid.dt, rule)
    return StarKernel(grid, 0.0, np.tril(c[:, None] - c[None, :]))


def b_kernel(wf: Waveform, grid: TimeGrid, omega: float, rule: QuadratureRule) -> StarKernel:
    """Real kernel b(t', t) = 2 Re( e^{-i omega t'} beta(t') ∫_t^{t'} e^{i omega τ} conj(beta) dτ ).

    This is the product form of the derivative of |B_{t',t}|^2; using it
    avoids numerical differentiation of the Fourier table.
    """
    t = grid.times
    bt = beta(wf, t)
    w = np.exp(-1j * omega * t) * bt
    c = prefix_integral(w, grid.dt, rule)
    table = 2.0 * (w[:, None] * (np.conj(c)[:, None] - np.conj(c)[None, :])).real
    return StarKernel(grid, 0.0, np.tril(table).astype(np.complex128))


def _b_separable_terms(wf, grid, omega, rule, scale=1.0):
    """(u, v) pairs with b[i, k] * scale = Σ u_m[i] v_m[k]."""
    t = grid.times
    bt = beta(wf, t)
    w = np.exp(-1j * omega * t) * bt
    c = prefix_integral(w, grid.dt, rule)
    ones = np.ones(grid.n_points)
    return [
        (scale * (w * np.conj(c) + np.conj(w) * c), ones),
        (-scale * w, np.conj(c)),
        (-scale * np.conj(w), c),
    ]


def _phase_weighted_cumulative(factor_out, factor_in, values, dt, rule):
    """factor_out(t) * ∫_0^t factor_in(τ) values(τ) dτ with the active rule."""
    shape = (-1,) + (1,) * (np.ndim(values) - 1)
    inner = prefix_integral(factor_in.reshape(shape) * values, dt, rule)
    return factor_out.reshape(shape) * inner


# ---------------------------------------------------------------------------
# monopartite SU(2)


def solve_mono_su2(spec: SystemSpec, wf: Waveform, grid: TimeGrid, rule: QuadratureRule) -> PropagatorTrajectory:
    """2x2 propagator of a single driven spin.

    The (1,1) entry is the resolvent of i Omega/2 + conj(beta)(t') e^{i Omega t'/2}
    B_{t',t}(Omega / 4 pi); the (2,1) entry is the phase-weighted cumulative of
    beta * U11, and the remaining entries follow from conjugation symmetry.
    """
    if spec.kind is not SystemKind.MONO_SU2:
        raise ValueError("solve_mono_su2 expects a MONO_SU2 system")
    omega = spec.offsets[0]
    t = grid.times
    n = grid.n_points
    bt = beta(wf, t)
    c2 = prefix_integral(np.exp(-0.5j * omega * t) * bt, grid.dt, rule)
    q = np.conj(bt) * np.exp(0.5j * omega * t)
    # kernel of the (1,1) resolvent: f = -i Omega/2 - q_i (C_i - C_k)
    kern = scalar_separable(
        n,
        [(-q * c2, np.ones(n)), (q, c2)],
        const=-0.5j * omega,
    )
    rho = volterra_first_column(kern, grid.dt, rule)[:, 0, 0]
    u11 = 1.0 + prefix_integral(rho, grid.dt, rule)
    u21 = -1j * _phase_weighted_cumulative(
        np.exp(0.5j * omega * t), np.exp(-0.5j * omega * t) * bt, u11, grid.dt, rule
    )
    u = np.empty((n, 2, 2), dtype=np.complex128)
    u[:, 0, 0] = u11
    u[:, 1, 0] = u21
    u[:, 1, 1] = np.conj(u11)
    u[:, 0, 1] = -np.conj(u21)
    u[0] = np.eye(2)
    return PropagatorTrajectory(grid, u, f"ps-{rule.value}")


# ---------------------------------------------------------------------------
# monopartite SO(3), shift basis


def _so3_inner_resolvent_full(wf, grid, omega, rule) -> np.ndarray:
    """Smooth part of (1 + 2 e^{-i Omega t'} beta(t') conj(B)_{t',t})^{*-1}."""
    t = grid.times
    bt = beta(wf, t)
    w = np.exp(-1j * omega * t) * bt
    c = prefix_integral(w, grid.dt, rule)
    kern = scalar_separable(
        grid.n_points,
        [(2.0 * w * np.conj(c), np.ones(grid.n_points)), (-2.0 * w, np.conj(c))],
    )
    # resolvent of f = -k_in, i.e. (1 - f)^{*-1} with f = -2 w (conj C_i - conj C_k)
    neg = SeparableKernel(
        kern.n_points,
        1,
        [(-lm, rm) for lm, rm in kern.terms],
        None,
    )
    return separable_resolvent_full(neg, grid.dt, rule)


def u22_trajectory(
    spec: SystemSpec, wf: Waveform, grid: TimeGrid, rule: QuadratureRule
) -> np.ndarray:
    """Middle entry U22(t) of the shift-basis 3x3 propagator, O(N) memory."""
    omega = spec.offsets[0]
    terms = _b_separable_terms(wf, grid, omega, rule, scale=-2.0)
    kern = scalar_separable(grid.n_points, terms)
    rho = volterra_first_column(kern, grid.dt, rule)[:, 0, 0]
    return 1.0 + prefix_integral(rho, grid.dt, rule)


def neumann_u22(
    spec: SystemSpec,
    wf: Waveform,
    grid: TimeGrid,
    rule: QuadratureRule,
    order: int | None,
) -> np.ndarray:
    """Truncated series approximation of U22 through the given order.

    Order m sums (-2)^n ∫ b^{*n}(τ, 0) dτ for n = 1..m; None routes to the
    exact resolvent.
    """
    if order is None:
        return u22_trajectory(spec, wf, grid, rule)
    if order < 1:
        raise ValueError("series order must be >= 1")
    omega = spec.offsets[0]
    bk = b_kernel(wf, grid, omega, rule)
    col = bk.smooth[:, 0].copy()
    total = prefix_integral(col, grid.dt, rule) * (-2.0)
    factor = -2.0
    for _ in range(2, order + 1):
        col = convolve_first_column(bk, col, rule)
        factor *= -2.0
        total = total + factor * prefix_integral(col, grid.dt, rule)
    return 1.0 + total


def solve_mono_so3(
    spec: SystemSpec, wf: Waveform, grid: TimeGrid, rule: QuadratureRule
) -> PropagatorTrajectory:
    """Full 3x3 shift-basis propagator of a single driven spin.

    Diagonal entries come from scalar resolvents (U22 from the real b-kernel,
    U11 from the nested resolvent through the inner 2<->3 walk sum, U33 by
    conjugation); off-diagonal entries are simple-path compositions of those
    resolvents with the connecting edges.  Cartesian output is obtained by
    conjugating with the basis unitary afterwards.
    """
    if spec.kind not in (SystemKind.MONO_SO3_SHIFT, SystemKind.MONO_SO3_CARTESIAN):
        raise ValueError("solve_mono_so3 expects a single-spin SO(3) system")
    omega = spec.offsets[0]
    t = grid.times
    n = grid.n_points
    dt = grid.dt
    bt = beta(wf, t)

    u22 = u22_trajectory(spec, wf, grid, rule)

    rho_in = _so3_inner_resolvent_full(wf, grid, omega, rule)
    r_in = StarKernel(grid, 1.0, rho_in)
    # f11 = i Omega - 2 beta * R_in * conj(beta): compose right-to-left
    x = star_product(r_in, kernel_from_one_variable(grid, np.conj(bt)), rule)
    x2 = integrate_columns(x.smooth, dt, rule)
    f11 = np.tril(1j * omega * np.ones((n, n)) - 2.0 * bt[:, None] * x2)
    rho11 = resolvent_first_column_from_table(f11, dt, rule)
    u11 = 1.0 + prefix_integral(rho11, dt, rule)

    u12 = -1j * SQRT2 * _phase_weighted_cumulative(
        np.exp(1j * omega * t), np.exp(-1j * omega * t) * bt, u22, dt, rule
    )
    g21 = -1j * SQRT2 * (
        np.conj(bt) * u11 + convolve_first_column(StarKernel(grid, 0.0, rho_in), np.conj(bt) * u11, rule)
    )
    u21 = prefix_integral(g21, dt, rule)
    u31 = 1j * SQRT2 * _phase_weighted_cumulative(
        np.exp(-1j * omega * t), np.exp(1j * omega * t) * np.conj(bt), u21, dt, rule
    )

    u = np.empty((n, 3, 3), dtype=np.complex128)
    u[:, 0, 0] = u11
    u[:, 1, 1] = u22
    u[:, 2, 2] = np.conj(u11)
    u[:, 0, 1] = u12
    u[:, 2, 1] = np.conj(u12)
    u[:, 1, 0] = u21
    u[:, 1, 2] = np.conj(u21)
    u[:, 2, 0] = u31
    u[:, 0, 2] = np.conj(u31)
    u[0] = np.eye(3)
    tag = f"ps-{rule.value}"
    if spec.kind is SystemKind.MONO_SO3_CARTESIAN:
        ub = shift_basis_matrix()
        u = np.einsum("ab,kbc,cd->kad", ub.conj().T, u, ub)
        u[0] = np.eye(3)
    return PropagatorTrajectory(grid, u, tag)


# ---------------------------------------------------------------------------
# bipartite


def solve_bipartite(
    spec: SystemSpec, wf: Waveform, grid: TimeGrid, rule: QuadratureRule
) -> PropagatorTrajectory:
    """4x4 propagator of two scalar-coupled driven spins.

    Works in the traceless-pair gauge (diagonal shifted by pi J / 2): the
    central 2x2 block is a block resolvent driven by the b-kernel at the
    mean offset; the corner {1,4} system couples through the constant block
    Hamiltonian exponential (evaluated by eigendecomposition); the remaining
    blocks are phase- or exponential-weighted cumulatives.  The gauge phase
    is restored before returning.
    """
    if spec.kind is not SystemKind.BIPARTITE:
        raise ValueError("solve_bipartite expects a BIPARTITE system")
    t = grid.times
    n = grid.n_points
    dt = grid.dt
    bt = beta(wf, t)
    cbt = np.conj(bt)

    energies, shift = gauge_shift_bipartite(spec)
    h11p = energies.h[0]
    layout = partition(spec)
    h2 = layout.h_II  # real symmetric 2x2, shifted gauge
    omega0 = 0.5 * (spec.offsets[0] + spec.offsets[1])

    col = np.ones((2, 1))
    row = np.ones((1, 2))
    terms = [
        (
            (-2.0 * u)[:, None, None] * col,
            v[:, None, None] * row,
        )
        for u, v in _b_separable_terms(wf, grid, omega0, rule)
    ]
    kern_ii = SeparableKernel(n, 2, terms, const=(-1j * h2).astype(np.complex128))
    rho_ii = volterra_first_column(kern_ii, dt, rule)
    u_ii = np.eye(2) + prefix_integral(rho_ii, dt, rule)

    usum = u_ii.sum(axis=1)  # u . U_II, shape (N, 2)
    u_1ii = -1j * _phase_weighted_cumulative(
        np.exp(-1j * h11p * t), np.exp(1j * h11p * t) * cbt, usum, dt, rule
    )
    u_4ii = -1j * _phase_weighted_cumulative(
        np.exp(1j * h11p * t), np.exp(-1j * h11p * t) * bt, usum, dt, rule
    )

    # corner {1,4} block: kernel D - V(t') ∫ e^{-i H2 (t'-τ)} W(τ) dτ
    evals, q = np.linalg.eigh(h2)
    w_tab = np.empty((n, 2, 2), dtype=np.complex128)
    w_tab[:, 0, 0] = bt
    w_tab[:, 1, 0] = bt
    w_tab[:, 0, 1] = cbt
    w_tab[:, 1, 1] = cbt
    v_tab = np.empty((n, 2, 2), dtype=np.complex128)
    v_tab[:, 0, 0] = cbt
    v_tab[:, 0, 1] = cbt
    v_tab[:, 1, 0] = bt
    v_tab[:, 1, 1] = bt
    dconst = np.diag([-1j * h11p, 1j * h11p]).astype(np.complex128)
    corner_terms = []
    pure_i = np.zeros((n, 2, 2), dtype=np.complex128)
    qt_w = np.einsum("pa,kab->kpb", q.T, w_tab)  # rows q_a^T W(τ)
    for a in range(2):
        za = prefix_integral(np.exp(1j * evals[a] * t)[:, None] * qt_w[:, a, :], dt, rule)
        la = np.exp(-1j * evals[a] * t)[:, None, None] * np.einsum(
            "kab,b->ka", v_tab, q[:, a]
        )[:, :, None]
        pure_i -= np.einsum("kap,kb->kab", la, za)
        corner_terms.append((la, za[:, None, :]))
    corner_terms.append((pure_i, np.broadcast_to(np.eye(2), (n, 2, 2))))
    kern_corner = SeparableKernel(n, 2, corner_terms, const=dconst)
    rho_c = volterra_first_column(kern_corner, dt, rule)
    u_c = np.eye(2) + prefix_integral(rho_c, dt, rule)

    # {II x corner} block: -i ∫ e^{-i H2 (t-τ)} W(τ) U_corner(τ) dτ
    wu = np.einsum("kab,kbm->kam", w_tab, u_c)
    u_iic = np.zeros((n, 2, 2), dtype=np.complex128)
    for a in range(2):
        ya = prefix_integral(
            np.exp(1j * evals[a] * t)[:, None] * np.einsum("a,kam->km", q[:, a], wu),
            dt,
            rule,
        )
        u_iic += np.einsum(
            "a,km->kam", q[:, a], np.exp(-1j * evals[a] * t)[:, None] * ya
        )
    u_iic *= -1j

    u = np.empty((n, 4, 4), dtype=np.complex128)
    u[:, 0, 0] = u_c[:, 0, 0]
    u[:, 0, 3] = u_c[:, 0, 1]
    u[:, 3, 0] = u_c[:, 1, 0]
    u[:, 3, 3] = u_c[:, 1, 1]
    u[:, 0, 1:3] = u_1ii
    u[:, 3, 1:3] = u_4ii
    u[:, 1:3, 1:3] = u_ii
    u[:, 1:3, 0] = u_iic[:, :, 0]
    u[:, 1:3, 3] = u_iic[:, :, 1]
    u *= np.exp(-1j * shift * (t - t[0]))[:, None, None]
    u[0] = np.eye(4)
    return PropagatorTrajectory(grid, u, f"ps-{rule.value}")


# ---------------------------------------------------------------------------
# tripartite


def _closed_resolvent_apply(h_val, history, t, dt, rule):
    """(delta - i h e^{-i h (t-τ)}) applied to a trajectory, O(N)."""
    shape = (-1,) + (1,) * (np.ndim(history) - 1)
    inner = prefix_integral(np.exp(1j * h_val * t).reshape(shape) * history, dt, rule)
    return history - 1j * h_val * np.exp(-1j * h_val * t).reshape(shape) * inner


def solve_tripartite(
    spec: SystemSpec, wf: Waveform, grid: TimeGrid, rule: QuadratureRule
) -> PropagatorTrajectory:
    """8x8 propagator of three scalar-coupled driven spins.

    The state space is partitioned into the path graph {1} - {2,3,5} -
    {4,6,7} - {8}.  A ladder of nested resolvents is built from both ends of
    the path (the end cells have closed-form resolvents, the middle cells
    3x3 block resolvents); the four diagonal blocks then combine both
    branches and the twelve off-diagonal blocks are edge compositions solved
    as first-column Volterra equations.
    """
    if spec.kind is not SystemKind.TRIPARTITE:
        raise ValueError("solve_tripartite expects a TRIPARTITE system")
    from .star_algebra import (
        BlockStarKernel,
        _smooth_product,
        block_star_product,
        block_star_resolvent,
    )

    t = grid.times
    n = grid.n_points
    dt = grid.dt
    bt = beta(wf, t)
    cbt = np.conj(bt)
    h = tripartite_energies(spec)
    h11, h88 = h[0], h[7]
    layout = partition(spec)
    h2 = layout.h_II
    h3 = layout.h_III
    mix = layout.mixing
    ones33 = np.ones((3, 3))

    # closed-form end cells: scalar cycle factors through states 1 and 8
    e8 = prefix_integral(np.exp(1j * h88 * t) * bt, dt, rule)
    s8 = np.tril(-cbt[:, None] * np.exp(-1j * h88 * t)[:, None] * (e8[:, None] - e8[None, :]))
    f1 = prefix_integral(np.exp(1j * h11 * t) * cbt, dt, rule)
    s1 = np.tril(-bt[:, None] * np.exp(-1j * h11 * t)[:, None] * (f1[:, None] - f1[None, :]))

    k_g3 = BlockStarKernel(
        grid, np.zeros((3, 3)), (-1j * h3)[None, None] + s8[:, :, None, None] * ones33
    )
    gamma3 = block_star_resolvent(k_g3, rule, residual_tol=None)

    bmix = BlockStarKernel(
        grid,
        np.zeros((3, 3)),
        np.tril(np.ones((n, n)))[:, :, None, None] * (bt[:, None, None, None] * mix),
    )
    y = block_star_product(gamma3, bmix, rule)
    z = integrate_columns(y.smooth, dt, rule)
    m3 = -cbt[:, None, None, None] * np.einsum("ab,ijbc->ijac", mix, z)
    k_g2 = BlockStarKernel(grid, np.zeros((3, 3)), (-1j * h2)[None, None] + m3)
    gamma2 = block_star_resolvent(k_g2, rule, residual_tol=None)

    k_l2 = BlockStarKernel(
        grid, np.zeros((3, 3)), (-1j * h2)[None, None] + s1[:, :, None, None] * ones33
    )
    lam2 = block_star_resolvent(k_l2, rule, residual_tol=None)

    cbmix = BlockStarKernel(
        grid,
        np.zeros((3, 3)),
        np.tril(np.ones((n, n)))[:, :, None, None] * (cbt[:, None, None, None] * mix),
    )
    yg = block_star_product(lam2, cbmix, rule)
    zg = integrate_columns(yg.smooth, dt, rule)
    m2 = -bt[:, None, None, None] * np.einsum("ab,ijbc->ijac", mix, zg)
    k_l3 = BlockStarKernel(grid, np.zeros((3, 3)), (-1j * h3)[None, None] + m2)
    lam3 = block_star_resolvent(k_l3, rule, residual_tol=None)

    uvec = np.ones(3)
    tri = np.tril(np.ones((n, n)))

    # scalar cell {1}: kernel -i h11 - conj(beta) u . ∫(Gamma2 * beta u^T)
    bcol = tri[:, :, None, None] * (bt[:, None, None, None] * uvec[:, None])
    y2 = _smooth_product(gamma2.smooth, bcol, dt, rule) + bcol  # delta part of Gamma2 is I
    z2 = integrate_columns(y2, dt, rule)
    f_g11 = np.tril(
        -1j * h11 * np.ones((n, n))
        - cbt[:, None] * np.einsum("a,ijam->ij", uvec, z2)
    )
    rho11 = resolvent_first_column_from_table(f_g11, dt, rule)
    u11 = 1.0 + prefix_integral(rho11, dt, rule)

    k_gii = (-1j * h2)[None, None] + s1[:, :, None, None] * ones33 + m3
    rho_ii = _first_column_from_block_table(k_gii, dt, rule)
    u_ii = np.eye(3) + prefix_integral(rho_ii, dt, rule)

    k_giii = (-1j * h3)[None, None] + s8[:, :, None, None] * ones33 + m2
    rho_iii = _first_column_from_block_table(k_giii, dt, rule)
    u_iii = np.eye(3) + prefix_integral(rho_iii, dt, rule)

    cbcol = tri[:, :, None, None] * (cbt[:, None, None, None] * uvec[:, None])
    yg2 = _smooth_product(lam3.smooth, cbcol, dt, rule) + cbcol
    zg2 = integrate_columns(yg2, dt, rule)
    f_g88 = np.tril(
        -1j * h88 * np.ones((n, n))
        - bt[:, None] * np.einsum("a,ijam->ij", uvec, zg2)
    )
    rho88 = resolvent_first_column_from_table(f_g88, dt, rule)
    u88 = 1.0 + prefix_integral(rho88, dt, rule)

    # off-diagonal blocks, assembled right-to-left from known diagonals
    def apply_block(kernel_table, history):
        return volterra_apply_from_table(kernel_table, history, dt, rule)

    k_g2t = k_g2.smooth
    k_g3t = k_g3.smooth
    k_l2t = k_l2.smooth
    k_l3t = k_l3.smooth

    y_ii1 = -1j * bt[:, None, None] * (uvec[:, None] * u11[:, None, None])
    g_ii1 = apply_block(k_g2t, y_ii1)
    u_ii1 = prefix_integral(g_ii1, dt, rule)

    y_iii1 = -1j * bt[:, None, None] * np.einsum("ab,kbm->kam", mix, u_ii1)
    g_iii1 = apply_block(k_g3t, y_iii1)
    u_iii1 = prefix_integral(g_iii1, dt, rule)

    y_81 = -1j * bt[:, None] * np.einsum("a,kam->km", uvec, u_iii1)
    g_81 = _closed_resolvent_apply(h88, y_81, t, dt, rule)
    u_81 = prefix_integral(g_81, dt, rule)

    y_iii8 = -1j * cbt[:, None, None] * (uvec[:, None] * u88[:, None, None])
    g_iii8 = apply_block(k_l3t, y_iii8)
    u_iii8 = prefix_integral(g_iii8, dt, rule)

    y_ii8 = -1j * cbt[:, None, None] * np.einsum("ab,kbm->kam", mix, u_iii8)
    g_ii8 = apply_block(k_l2t, y_ii8)
    u_ii8 = prefix_integral(g_ii8, dt, rule)

    y_18 = -1j * cbt[:, None] * np.einsum("a,kam->km", uvec, u_ii8)
    g_18 = _closed_resolvent_apply(h11, y_18, t, dt, rule)
    u_18 = prefix_integral(g_18, dt, rule)

    y_1ii = -1j * cbt[:, None] * np.einsum("a,kam->km", uvec, u_ii)
    g_1ii = _closed_resolvent_apply(h11, y_1ii, t, dt, rule)
    u_1ii = prefix_integral(g_1ii, dt, rule)

    y_iii_ii = -1j * bt[:, None, None] * np.einsum("ab,kbm->kam", mix, u_ii)
    g_iii_ii = apply_block(k_g3t, y_iii_ii)
    u_iii_ii = prefix_integral(g_iii_ii, dt, rule)

    y_8ii = -1j * bt[:, None] * np.einsum("a,kam->km", uvec, u_iii_ii)
    g_8ii = _closed_resolvent_apply(h88, y_8ii, t, dt, rule)
    u_8ii = prefix_integral(g_8ii, dt, rule)

    y_8iii = -1j * bt[:, None] * np.einsum("a,kam->km", uvec, u_iii)
    g_8iii = _closed_resolvent_apply(h88, y_8iii, t, dt, rule)
    u_8iii = prefix_integral(g_8iii, dt, rule)

    y_ii_iii = -1j * cbt[:, None, None] * np.einsum("ab,kbm->kam", mix, u_iii)
    g_ii_iii = apply_block(k_l2t, y_ii_iii)
    u_ii_iii = prefix_integral(g_ii_iii, dt, rule)

    y_1iii = -1j * cbt[:, None] * np.einsum("a,kam->km", uvec, u_ii_iii)
    g_1iii = _closed_resolvent_apply(h11, y_1iii, t, dt, rule)
    u_1iii = prefix_integral(g_1iii, dt, rule)

    # assemble into canonical ordering
    u = np.zeros((n, 8, 8), dtype=np.complex128)
    cells = layout.blocks
    i1, iII, iIII, i8 = cells
    u[:, i1[0], i1[0]] = u11
    u[:, i8[0], i8[0]] = u88
    u[np.ix_(np.arange(n), iII, iII)] = u_ii
    u[np.ix_(np.arange(n), iIII, iIII)] = u_iii
    u[np.ix_(np.arange(n), iII, i1)] = u_ii1
    u[np.ix_(np.arange(n), iIII, i1)] = u_iii1
    u[:, i8[0], i1[0]] = u_81[:, 0]
    u[np.ix_(np.arange(n), iIII, i8)] = u_iii8
    u[np.ix_(np.arange(n), iII, i8)] = u_ii8
    u[:, i1[0], i8[0]] = u_18[:, 0]
    u[np.ix_(np.arange(n), [i1[0]], iII)] = u_1ii[:, None, :]
    u[np.ix_(np.arange(n), iIII, iII)] = u_iii_ii
    u[np.ix_(np.arange(n), [i8[0]], iII)] = u_8ii[:, None, :]
    u[np.ix_(np.arange(n), [i8[0]], iIII)] = u_8iii[:, None, :]
    u[np.ix_(np.arange(n), iII, iIII)] = u_ii_iii
    u[np.ix_(np.arange(n), [i1[0]], iIII)] = u_1iii[:, None, :]
    u[0] = np.eye(8)
    return PropagatorTrajectory(grid, u, f"ps-{rule.value}")


def _first_column_from_block_table(f: np.ndarray, dt: float, rule: QuadratureRule) -> np.ndarray:
    """First resolvent column from a dense block kernel table (N, N, d, d)."""
    n, _, d, _ = f.shape
    rho = np.zeros((n, d, d), dtype=np.complex128)
    rho[0] = f[0, 0]
    eye = np.eye(d)
    sign = (-1.0) ** np.arange(n)
    simpson = rule is QuadratureRule.AVERAGED_SIMPSON
    for i in range(1, n):
        fi = f[i]
        k0 = np.einsum("kab,kbc->ac", fi[:i], rho[:i])
        if rule is QuadratureRule.RECTANGULAR:
            known = k0
            w_end = dt
        elif not simpson or i == 1:
            known = k0 - 0.5 * fi[0] @ rho[0]
            w_end = 0.5 * dt
        elif i % 2 == 0:
            k1 = np.einsum("k,kab,kbc->ac", sign[:i], fi[:i], rho[:i])
            known = k0 - k1 / 3.0 - (fi[0] @ rho[0]) / 3.0
            w_end = dt / 3.0
        else:
            known = k0 - (7.0 / 12.0) * fi[0] @ rho[0] + (1.0 / 12.0) * (
                fi[1] @ rho[1] + fi[i - 1] @ rho[i - 1]
            )
            w_end = (5.0 / 12.0) * dt
        rho[i] = np.linalg.solve(eye - w_end * fi[i], fi[0] + dt * known)
    return rho


# ---------------------------------------------------------------------------
# dispatch and hybrid composition


_SOLVERS = {
    SystemKind.MONO_SU2: solve_mono_su2,
    SystemKind.MONO_SO3_SHIFT: solve_mono_so3,
    SystemKind.MONO_SO3_CARTESIAN: solve_mono_so3,
    SystemKind.BIPARTITE: solve_bipartite,
    SystemKind.TRIPARTITE: solve_tripartite,
}


def solve_pure(spec: SystemSpec, wf: Waveform, grid: TimeGrid, rule: QuadratureRule) -> PropagatorTrajectory:
    return _SOLVERS[spec.kind](spec, wf, grid, rule)


def solve(
    spec: SystemSpec,
    wf: Waveform,
    cfg: SolveConfig,
    t_end: float,
    t_start: float = 0.0,
) -> PropagatorTrajectory:
    """Path-sum propagator over [t_start, t_end] under the given config.

    With n_intervals > 1 the span is split into equal subintervals, each
    solved on n_points nodes from the identity; the end propagator of one
    interval seeds the next, so U(t) = U_local(t) U_seed.  Interval
    boundaries are shared nodes, giving n_intervals * (n_points - 1) + 1
    output nodes in total.
    """
    if cfg.n_intervals == 1:
        grid = TimeGrid(t_start, t_end, cfg.n_points)
        traj = solve_pure(spec, wf, grid, cfg.rule)
        meta = {"n_points": cfg.n_points, "n_intervals": 1, "rule": cfg.rule.value}
        return PropagatorTrajectory(grid, traj.matrices, traj.method_tag, meta)
    edges = np.linspace(t_start, t_end, cfg.n_intervals + 1)
    d = spec.dim
    pieces = []
    seed = np.eye(d, dtype=np.complex128)
    for k in range(cfg.n_intervals):
        sub = TimeGrid(edges[k], edges[k + 1], cfg.n_points)
        local = solve_pure(spec, wf, sub, cfg.rule).matrices
        glob = np.einsum("kab,bc->kac", local, seed)
        seed = glob[-1]
        pieces.append(glob if k == 0 else glob[1:])
    mats = np.concatenate(pieces, axis=0)
    total = cfg.n_intervals * (cfg.n_points - 1) + 1
    grid = TimeGrid(t_start, t_end, total)
    meta = {"n_points": cfg.n_points, "n_intervals": cfg.n_intervals, "rule": cfg.rule.value}
    return PropagatorTrajectory(grid, mats, f"ps-{cfg.rule.value}-hybrid", meta)
