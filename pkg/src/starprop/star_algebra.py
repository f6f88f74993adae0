"""Discretized two-time kernel algebra: products, resolvents, integrals.

A kernel f(t', t) on a uniform grid is stored as a lower-triangular table
``smooth[i, j] = f(t_i, t_j)`` together with a coefficient for the singular
identity component (the Dirac delta at t' = t, the unit of the composition
product).  The composition

    (f * g)(t', t) = ∫_t^{t'} f(t', τ) g(τ, t) dτ

maps to a quadrature-weighted triangular matrix product, and the resolvent
(1 - f)^{*-1} maps to the inverse of a well conditioned lower-triangular
system solved by forward substitution in time.

Quadrature weights depend on the integration range [t_j, t_i], so they are
applied at composition time and never baked into stored tables; one kernel
serves all rules.  The diagonal of a smooth-smooth product is set exactly to
zero (empty range), for every rule.

Layout of this module:

* :class:`StarKernel` / :class:`BlockStarKernel` and constructors,
* full-table operations (`star_product`, `star_resolvent`, block variants,
  `integrate_left`), used wherever the whole two-time table is required,
* first-column operations (`resolvent_first_column`,
  `convolve_first_column`), used by propagator solvers that only ever need
  values at (t_i, t_0); these run in O(N^2) time and O(N) extra memory,
* a structured fast path (:class:`SeparableKernel`) for kernels of the form
  f[i, k] = const + Σ_m L_m[i] R_m[k], which admit O(N) first-column solves
  and O(N^2) full resolvents via running sums.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .grids import QuadratureRule, TimeGrid, prefix_integral, prefix_weights

DEFAULT_RESIDUAL_TOL = 1e-10


class GridMismatchError(ValueError):
    """Operands live on different grids."""


class GridTooCoarseError(ValueError):
    """dt * max |f(t_i, t_i)| >= 1, the triangular system may lose conditioning."""


class ResolventResidualError(RuntimeError):
    """A posteriori residual check of a resolvent failed."""

    def __init__(self, residual: float, tol: float):
        super().__init__(
            f"resolvent residual {residual:.3e} exceeds tolerance {tol:.3e}; "
            "the grid is too coarse or the kernel too singular"
        )
        self.residual = residual
        self.tol = tol


@dataclass(frozen=True, eq=False)
class StarKernel:
    """Scalar two-time kernel: delta coefficient plus lower-triangular table."""

    grid: TimeGrid
    delta_coeff: complex
    smooth: np.ndarray

    def __post_init__(self):
        n = self.grid.n_points
        sm = np.asarray(self.smooth, dtype=np.complex128)
        if sm.shape != (n, n):
            raise ValueError(f"smooth table must be ({n}, {n}), got {sm.shape}")
        object.__setattr__(self, "smooth", np.tril(sm))
        object.__setattr__(self, "delta_coeff", complex(self.delta_coeff))

    @property
    def diag(self) -> np.ndarray:
        return np.diagonal(self.smooth)


@dataclass(frozen=True, eq=False)
class BlockStarKernel:
    """Matrix-valued two-time kernel with square d x d blocks."""

    grid: TimeGrid
    delta_coeff: np.ndarray
    smooth: np.ndarray

    def __post_init__(self):
        n = self.grid.n_points
        sm = np.asarray(self.smooth, dtype=np.complex128)
        if sm.ndim != 4 or sm.shape[0] != n or sm.shape[1] != n or sm.shape[2] != sm.shape[3]:
            raise ValueError(f"smooth table must be ({n}, {n}, d, d), got {sm.shape}")
        d = sm.shape[2]
        dc = np.asarray(self.delta_coeff, dtype=np.complex128)
        if dc.shape != (d, d):
            raise ValueError(f"delta coefficient must be ({d}, {d}), got {dc.shape}")
        mask = np.tril(np.ones((n, n), dtype=bool))
        object.__setattr__(self, "smooth", np.where(mask[:, :, None, None], sm, 0.0))
        object.__setattr__(self, "delta_coeff", dc)

    @property
    def dim(self) -> int:
        return self.smooth.shape[2]


def identity_kernel(grid: TimeGrid) -> StarKernel:
    """The unit of the composition product (pure delta)."""
    n = grid.n_points
    return StarKernel(grid, 1.0, np.zeros((n, n), dtype=np.complex128))


def block_identity_kernel(grid: TimeGrid, dim: int) -> BlockStarKernel:
    n = grid.n_points
    return BlockStarKernel(grid, np.eye(dim), np.zeros((n, n, dim, dim), dtype=np.complex128))


def kernel_from_function(grid: TimeGrid, f, delta: complex = 0.0) -> StarKernel:
    """Sample f(t_i, t_j) on the lower triangle of the grid.

    Raises if any sampled value is non-finite, naming the offending node pair.
    """
    t = grid.times
    ti = t[:, None]
    tj = t[None, :]
    try:
        vals = np.asarray(f(ti, tj), dtype=np.complex128)
        vals = np.broadcast_to(vals, (grid.n_points, grid.n_points)).copy()
    except Exception:
        vals = np.vectorize(f, otypes=[np.complex128])(ti, tj)
    vals = np.tril(vals)
    if not np.all(np.isfinite(vals)):
        i, j = np.argwhere(~np.isfinite(vals))[0]
        raise ValueError(f"kernel sample is not finite at node pair (i={i}, j={j})")
    return StarKernel(grid, delta, vals)


def kernel_from_one_variable(grid: TimeGrid, values: np.ndarray, delta: complex = 0.0) -> StarKernel:
    """Embed a one-time function h as a kernel.

    Under the convention that a single time argument is the left one,
    h behaves as the two-time kernel h(t_i) constant in t_j.
    """
    v = np.asarray(values, dtype=np.complex128)
    if v.shape != (grid.n_points,):
        raise ValueError("need one sample per grid node")
    return StarKernel(grid, delta, np.tril(np.repeat(v[:, None], grid.n_points, axis=1)))


def block_kernel_from_function(grid: TimeGrid, f, dim: int, delta=None) -> BlockStarKernel:
    """Sample a matrix-valued f(t_i, t_j) -> (dim, dim) on the lower triangle."""
    n = grid.n_points
    t = grid.times
    sm = np.zeros((n, n, dim, dim), dtype=np.complex128)
    for i in range(n):
        for j in range(i + 1):
            block = np.asarray(f(t[i], t[j]), dtype=np.complex128)
            if block.shape != (dim, dim):
                raise ValueError(f"block at (i={i}, j={j}) has shape {block.shape}")
            if not np.all(np.isfinite(block)):
                raise ValueError(f"kernel block is not finite at node pair (i={i}, j={j})")
            sm[i, j] = block
    if delta is None:
        delta = np.zeros((dim, dim))
    return BlockStarKernel(grid, delta, sm)


def _require_same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError(
            f"kernels live on different grids: {a.grid} vs {b.grid}"
        )


def _as_big(m4: np.ndarray) -> np.ndarray:
    n, _, p, q = m4.shape
    return np.ascontiguousarray(m4.transpose(0, 2, 1, 3)).reshape(n * p, n * q)


def _from_big(big: np.ndarray, n: int, p: int, q: int) -> np.ndarray:
    return big.reshape(n, p, n, q).transpose(0, 2, 1, 3)


def _smooth_product(a4: np.ndarray, b4: np.ndarray, dt: float, rule: QuadratureRule) -> np.ndarray:
    """Quadrature-weighted composition of two lower-triangular block tables.

    Shapes (N, N, p, q) x (N, N, q, r) -> (N, N, p, r); scalar tables are
    handled by the caller as 1 x 1 blocks.  The (i, j) entry integrates over
    [t_j, t_i] with the active rule; entries with i <= j are exactly zero.
    """
    n = a4.shape[0]
    p, q = a4.shape[2], a4.shape[3]
    r = b4.shape[3]
    if b4.shape[2] != q:
        raise ValueError("inner block dimensions do not match")

    p0 = _from_big(_as_big(a4) @ _as_big(b4), n, p, r)

    idx = np.arange(n)
    nmat = idx[:, None] - idx[None, :]
    diag_b = b4[idx, idx]
    diag_a = a4[idx, idx]
    e0 = np.einsum("ijab,jbc->ijac", a4, diag_b)
    en = np.einsum("iab,ijbc->ijac", diag_a, b4)

    if rule is QuadratureRule.RECTANGULAR:
        out = dt * p0
    elif rule is QuadratureRule.TRAPEZOIDAL:
        out = dt * (p0 - 0.5 * (e0 + en))
    else:
        sign = (-1.0) ** idx
        p1 = _from_big(_as_big(a4) @ _as_big(b4 * sign[:, None, None, None]), n, p, r)
        e1 = np.zeros_like(p0)
        en1 = np.zeros_like(p0)
        sub_b = b4[idx[1:], idx[:-1]]
        e1[:, :-1] = np.einsum("ijab,jbc->ijac", a4[:, 1:], sub_b)
        sub_a = a4[idx[1:], idx[:-1]]
        en1[1:] = np.einsum("iab,ijbc->ijac", sub_a, b4[:-1])
        colsign = ((-1.0) ** (idx + 1))[None, :, None, None]
        even = p0 + (colsign / 3.0) * p1 - (e0 + en) / 3.0
        odd = p0 - (7.0 / 12.0) * (e0 + en) + (1.0 / 12.0) * (e1 + en1)
        single = p0 - 0.5 * (e0 + en)
        nmask = nmat[:, :, None, None]
        out = np.where(nmask % 2 == 0, even, odd)
        out = np.where(nmask == 1, single, out)
        out = dt * out

    out[nmat <= 0] = 0.0
    return out


def star_product(a: StarKernel, b: StarKernel, rule: QuadratureRule) -> StarKernel:
    """Composition a * b under the given rule.

    Delta parts combine algebraically (the delta is the exact unit): total
    delta is the coefficient product and each delta passes the other smooth
    part through unchanged.
    """
    _require_same_grid(a, b)
    sm = _smooth_product(
        a.smooth[:, :, None, None], b.smooth[:, :, None, None], a.grid.dt, rule
    )[:, :, 0, 0]
    sm = sm + a.delta_coeff * b.smooth + b.delta_coeff * a.smooth
    return StarKernel(a.grid, a.delta_coeff * b.delta_coeff, sm)


def block_star_product(a: BlockStarKernel, b: BlockStarKernel, rule: QuadratureRule) -> BlockStarKernel:
    _require_same_grid(a, b)
    if a.dim != b.dim:
        raise ValueError(f"block dimensions differ: {a.dim} vs {b.dim}")
    sm = _smooth_product(a.smooth, b.smooth, a.grid.dt, rule)
    sm = sm + np.einsum("ab,ijbc->ijac", a.delta_coeff, b.smooth)
    sm = sm + np.einsum("ijab,bc->ijac", a.smooth, b.delta_coeff)
    return BlockStarKernel(a.grid, a.delta_coeff @ b.delta_coeff, sm)


def _check_conditioning(diag: np.ndarray, dt: float):
    worst = float(np.max(np.abs(diag))) if diag.size else 0.0
    if dt * worst >= 1.0:
        raise GridTooCoarseError(
            f"dt * max|f(t_i, t_i)| = {dt * worst:.3e} >= 1; refine the grid"
        )


def _resolvent_smooth_triangular(f: np.ndarray, dt: float, rule: QuadratureRule) -> np.ndarray:
    """Smooth part of (1 - f)^{*-1} for rect/trap rules via one triangular solve."""
    n = f.shape[0]
    fd = np.diagonal(f).copy()
    if rule is QuadratureRule.RECTANGULAR:
        m = -dt * f
        np.fill_diagonal(m, 1.0 - dt * fd)
        rhs = f.copy()
        np.fill_diagonal(rhs, (1.0 - dt * fd) * fd)
        rho = solve_triangular(m, rhs, lower=True, check_finite=False)
        return np.tril(rho)
    # trapezoid: half-weight endpoints fold into a diagonal rescaling
    m = -dt * np.tril(f, -1)
    np.fill_diagonal(m, 1.0 - 0.5 * dt * fd)
    rhs = f.copy()
    np.fill_diagonal(rhs, (1.0 - 0.5 * dt * fd) * 0.5 * fd)
    rho = solve_triangular(m, rhs, lower=True, check_finite=False)
    rho = np.tril(rho)
    idx = np.arange(n)
    rho[idx, idx] *= 2.0
    return rho


def _resolvent_smooth_rowloop(f: np.ndarray, dt: float, rule: QuadratureRule) -> np.ndarray:
    """Forward substitution over rows, all columns at once (averaged Simpson)."""
    n = f.shape[0]
    rho = np.zeros_like(f)
    idx = np.arange(n)
    rho[idx, idx] = np.diagonal(f)
    sign = (-1.0) ** idx
    for i in range(1, n):
        fi = f[i, : i + 1]
        js = idx[:i]
        span = i - js
        d0 = fi[:i] @ rho[:i, :i]
        d1 = (fi[:i] * sign[:i]) @ rho[:i, :i]
        diag_rho = rho[js, js]
        known = d0 - (7.0 / 12.0) * fi[js] * diag_rho
        sub = rho[js + 1, js]
        known = known + (1.0 / 12.0) * (fi[js + 1] * sub + fi[i - 1] * rho[i - 1, :i])
        even = span % 2 == 0
        known_even = d0 - (sign[js] / 3.0) * d1 - (fi[js] * diag_rho) / 3.0
        known = np.where(even, known_even, known)
        if i >= 1:
            known[i - 1] = d0[i - 1] - 0.5 * fi[i - 1] * diag_rho[i - 1]
        pivot = np.where(even, 1.0 - dt * fi[i] / 3.0, 1.0 - (5.0 / 12.0) * dt * fi[i])
        pivot[i - 1] = 1.0 - 0.5 * dt * fi[i]
        rho[i, :i] = (fi[:i] + dt * known) / pivot
    return rho


def star_resolvent(
    f: StarKernel,
    rule: QuadratureRule,
    residual_tol: float | None = DEFAULT_RESIDUAL_TOL,
) -> StarKernel:
    """Resolvent (1 - f)^{*-1} of a smooth kernel f.

    The argument carries the smooth part only (delta coefficient must be 0);
    the result has delta coefficient 1.  The triangular system is rejected if
    dt * max|f(t_i, t_i)| >= 1.  Unless ``residual_tol`` is None, the identity
    (1 - f) * result = 1 is verified a posteriori and a failure raises
    :class:`ResolventResidualError` carrying the residual.
    """
    if f.delta_coeff != 0:
        raise ValueError("star_resolvent expects the smooth kernel f, with zero delta part")
    dt = f.grid.dt
    _check_conditioning(f.diag, dt)
    if rule is QuadratureRule.AVERAGED_SIMPSON:
        rho = _resolvent_smooth_rowloop(f.smooth, dt, rule)
    else:
        rho = _resolvent_smooth_triangular(f.smooth, dt, rule)
    result = StarKernel(f.grid, 1.0, rho)
    if residual_tol is not None:
        prod = _smooth_product(
            f.smooth[:, :, None, None], rho[:, :, None, None], dt, rule
        )[:, :, 0, 0]
        resid = rho - f.smooth - prod
        rel = float(np.max(np.abs(resid))) / (1.0 + float(np.max(np.abs(rho))))
        if rel > residual_tol:
            raise ResolventResidualError(rel, residual_tol)
    return result


def _block_resolvent_smooth_rowloop(f: np.ndarray, dt: float, rule: QuadratureRule) -> np.ndarray:
    """Block forward substitution; dense d x d solves on the diagonal."""
    n, _, d, _ = f.shape
    rho = np.zeros_like(f)
    idx = np.arange(n)
    eye = np.eye(d)
    rho[idx, idx] = f[idx, idx]
    sign = (-1.0) ** idx
    simpson = rule is QuadratureRule.AVERAGED_SIMPSON

    for i in range(1, n):
        fi = f[i, : i + 1]
        js = idx[:i]
        # d0[j] = sum_k f[i,k] rho[k,j] via one gemm
        fa = fi[:i].transpose(1, 0, 2).reshape(d, i * d)
        rb = rho[:i, :i].transpose(0, 2, 1, 3).reshape(i * d, i * d)
        d0 = (fa @ rb).reshape(d, i, d).transpose(1, 0, 2)
        diag_rho = rho[js, js]
        e0 = np.einsum("jab,jbc->jac", fi[js], diag_rho)
        if rule is QuadratureRule.RECTANGULAR:
            known = d0
            rhs = fi[:i] + dt * known
            piv = eye - dt * fi[i]
            rho[i, :i] = np.linalg.solve(piv, rhs.transpose(1, 2, 0).reshape(d, -1)).reshape(
                d, d, i
            ).transpose(2, 0, 1)
            continue
        if not simpson:
            known = d0 - 0.5 * e0
            rhs = fi[:i] + dt * known
            piv = eye - 0.5 * dt * fi[i]
            rho[i, :i] = np.linalg.solve(piv, rhs.transpose(1, 2, 0).reshape(d, -1)).reshape(
                d, d, i
            ).transpose(2, 0, 1)
            continue
        fb = (fi[:i] * sign[:i, None, None]).transpose(1, 0, 2).reshape(d, i * d)
        d1 = (fb @ rb).reshape(d, i, d).transpose(1, 0, 2)
        sub = rho[js + 1, js]
        e1 = np.einsum("jab,jbc->jac", fi[js + 1], sub)
        en1 = np.einsum("ab,jbc->jac", fi[i - 1], rho[i - 1, :i])
        span = i - js
        even = (span % 2 == 0)[:, None, None]
        known_even = d0 - (sign[js][:, None, None] / 3.0) * d1 - e0 / 3.0
        known_odd = d0 - (7.0 / 12.0) * e0 + (1.0 / 12.0) * (e1 + en1)
        known = np.where(even, known_even, known_odd)
        known[i - 1] = d0[i - 1] - 0.5 * e0[i - 1]
        rhs = fi[:i] + dt * known
        piv_even = eye - dt * fi[i] / 3.0
        piv_odd = eye - (5.0 / 12.0) * dt * fi[i]
        piv_single = eye - 0.5 * dt * fi[i]
        sol_even = np.linalg.solve(piv_even, rhs.transpose(1, 2, 0).reshape(d, -1)).reshape(
            d, d, i
        ).transpose(2, 0, 1)
        sol_odd = np.linalg.solve(piv_odd, rhs.transpose(1, 2, 0).reshape(d, -1)).reshape(
            d, d, i
        ).transpose(2, 0, 1)
        out = np.where(even, sol_even, sol_odd)
        out[i - 1] = np.linalg.solve(piv_single, rhs[i - 1])
        rho[i, :i] = out
    return rho


def block_star_resolvent(
    f: BlockStarKernel,
    rule: QuadratureRule,
    residual_tol: float | None = DEFAULT_RESIDUAL_TOL,
) -> BlockStarKernel:
    """Block analogue of :func:`star_resolvent`; result has delta part I."""
    if np.any(f.delta_coeff != 0):
        raise ValueError("block_star_resolvent expects a smooth kernel, zero delta part")
    dt = f.grid.dt
    idx = np.arange(f.grid.n_points)
    _check_conditioning(f.smooth[idx, idx], dt)
    rho = _block_resolvent_smooth_rowloop(f.smooth, dt, rule)
    result = BlockStarKernel(f.grid, np.eye(f.dim), rho)
    if residual_tol is not None:
        prod = _smooth_product(f.smooth, rho, dt, rule)
        resid = rho - f.smooth - prod
        rel = float(np.max(np.abs(resid))) / (1.0 + float(np.max(np.abs(rho))))
        if rel > residual_tol:
            raise ResolventResidualError(rel, residual_tol)
    return result


def integrate_left(kernel, rule: QuadratureRule) -> np.ndarray:
    """v(t_k) = delta_coeff + ∫_{t_0}^{t_k} smooth(τ, t_0) dτ.

    For propagator-style resolvents this is exactly the trajectory; v(t_0)
    equals the delta coefficient.  Works for scalar and block kernels alike.
    """
    return kernel.delta_coeff + prefix_integral(kernel.smooth[:, 0], kernel.grid.dt, rule)


def convolve_first_column(kernel, history: np.ndarray, rule: QuadratureRule) -> np.ndarray:
    """(kernel * h)(t_i, t_0) for a one-time trajectory h.

    ``history`` has shape (N,) for scalar kernels or (N, d, m) for block
    kernels; the delta part contributes delta @ h(t_i).
    """
    dt = kernel.grid.dt
    n = kernel.grid.n_points
    idx = np.arange(n)
    sign = (-1.0) ** idx
    h = np.asarray(history, dtype=np.complex128)
    scalar = isinstance(kernel, StarKernel)
    k = kernel.smooth
    if scalar:
        p0 = k @ h
        p1 = k @ (sign * h)
        e0 = k[:, 0] * h[0]
        en = np.diagonal(k) * h
        e1 = k[:, 1] * h[1] if n > 1 else np.zeros_like(p0)
        en1 = np.zeros_like(p0)
        en1[1:] = np.diagonal(k, -1) * h[:-1]
        delta_term = kernel.delta_coeff * h
    else:
        kb = _as_big(k)
        hb = h.reshape(n * h.shape[1], -1)
        p0 = (kb @ hb).reshape(n, k.shape[2], -1)
        p1 = (kb @ (h * sign[:, None, None]).reshape(n * h.shape[1], -1)).reshape(
            n, k.shape[2], -1
        )
        e0 = np.einsum("iab,bm->iam", k[:, 0], h[0])
        en = np.einsum("iab,ibm->iam", k[idx, idx], h)
        e1 = np.einsum("iab,bm->iam", k[:, 1], h[1]) if n > 1 else np.zeros_like(p0)
        en1 = np.zeros_like(p0)
        en1[1:] = np.einsum("iab,ibm->iam", k[idx[1:], idx[:-1]], h[:-1])
        delta_term = np.einsum("ab,ibm->iam", kernel.delta_coeff, h)

    if rule is QuadratureRule.RECTANGULAR:
        out = dt * p0
    elif rule is QuadratureRule.TRAPEZOIDAL:
        out = dt * (p0 - 0.5 * (e0 + en))
    else:
        shape = (-1,) + (1,) * (p0.ndim - 1)
        evenmask = (idx % 2 == 0).reshape(shape)
        even = p0 - p1 / 3.0 - (e0 + en) / 3.0
        odd = p0 - (7.0 / 12.0) * (e0 + en) + (1.0 / 12.0) * (e1 + en1)
        out = dt * np.where(evenmask, even, odd)
        if n > 1:
            out[1] = dt * (p0[1] - 0.5 * (e0[1] + en[1]))
    out[0] = 0.0
    return delta_term + out


def integrate_columns(table: np.ndarray, dt: float, rule: QuadratureRule) -> np.ndarray:
    """P[i, j] = ∫_{t_j}^{t_i} table(τ, t_j) dτ for a lower-triangular table.

    ``table`` may carry trailing block axes.  Used to turn a composed kernel
    into the left-integrated factor appearing inside nested path kernels.
    """
    m = np.asarray(table)
    n = m.shape[0]
    idx = np.arange(n)
    trail = (1,) * (m.ndim - 2)
    cs = np.cumsum(m, axis=0)
    diag = m[idx, idx]
    s_range = cs - cs[idx, idx][None, :] + diag[None, :]
    if rule is QuadratureRule.RECTANGULAR:
        out = dt * s_range
    elif rule is QuadratureRule.TRAPEZOIDAL:
        out = dt * (s_range - 0.5 * (diag[None, :] + m))
    else:
        am = m * ((-1.0) ** idx).reshape((n, 1) + trail)
        ca = np.cumsum(am, axis=0)
        absalt = ca - ca[idx, idx][None, :] + am[idx, idx][None, :]
        colsign = ((-1.0) ** idx).reshape((1, n) + trail)
        even = s_range - colsign * absalt / 3.0 - (diag[None, :] + m) / 3.0
        sub = np.zeros_like(m)
        sub[:, : n - 1] = np.broadcast_to(m[idx[1:], idx[:-1]][None, :], m[:, : n - 1].shape)
        shifted = np.zeros_like(m)
        shifted[1:] = m[:-1]
        odd = s_range - (7.0 / 12.0) * (diag[None, :] + m) + (1.0 / 12.0) * (sub + shifted)
        single = s_range - 0.5 * (diag[None, :] + m)
        nmat = (idx[:, None] - idx[None, :]).reshape((n, n) + trail)
        out = np.where(nmat % 2 == 0, even, odd)
        out = np.where(nmat == 1, single, out)
        out = dt * out
    nmat = (idx[:, None] - idx[None, :]).reshape((n, n) + trail)
    return np.where(nmat <= 0, 0.0, out)


@dataclass
class SeparableKernel:
    """Kernel f[i, k] = const + Σ_m L_m[i] @ R_m[k] with small inner ranks.

    ``terms`` is a list of (L, R) pairs with L of shape (N, d, p) and R of
    shape (N, p, d); scalar kernels use d = p = 1.  ``const`` is a (d, d)
    matrix added to every entry (None for zero).  This form admits O(N)
    first-column Volterra solves via running sums.
    """

    n_points: int
    dim: int
    terms: list = field(default_factory=list)
    const: np.ndarray | None = None

    def row(self, i: int) -> np.ndarray:
        """Dense row f[i, :i+1], shape (i+1, d, d)."""
        out = np.zeros((i + 1, self.dim, self.dim), dtype=np.complex128)
        if self.const is not None:
            out += self.const
        for lm, rm in self.terms:
            out += np.einsum("ap,kpb->kab", lm[i], rm[: i + 1])
        return out

    def entry(self, i: int, k: int) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=np.complex128)
        if self.const is not None:
            out += self.const
        for lm, rm in self.terms:
            out += lm[i] @ rm[k]
        return out


def scalar_separable(n_points: int, terms, const: complex = 0.0) -> SeparableKernel:
    """Build a 1 x 1 SeparableKernel from (u, v) coefficient vectors."""
    packed = [
        (np.asarray(u, dtype=np.complex128)[:, None, None],
         np.asarray(v, dtype=np.complex128)[:, None, None])
        for u, v in terms
    ]
    c = None if const == 0.0 else np.array([[const]], dtype=np.complex128)
    return SeparableKernel(n_points, 1, packed, c)


def volterra_first_column(kernel: SeparableKernel, dt: float, rule: QuadratureRule) -> np.ndarray:
    """First column of the resolvent smooth part, in O(N) per term.

    Solves rho(t_i) = f(t_i, t_0) + ∫_0^{t_i} f(t_i, τ) rho(τ) dτ with the
    active rule, maintaining running (plain and alternating) sums of
    R_m[k] @ rho[k].  Returns rho of shape (N, d, d).
    """
    n = kernel.n_points
    d = kernel.dim
    eye = np.eye(d)
    const = kernel.const if kernel.const is not None else np.zeros((d, d), dtype=np.complex128)
    terms = kernel.terms
    rho = np.zeros((n, d, d), dtype=np.complex128)
    rho[0] = kernel.entry(0, 0)

    simpson = rule is QuadratureRule.AVERAGED_SIMPSON
    trap = rule is QuadratureRule.TRAPEZOIDAL
    p_c = rho[0].copy()
    q_c = rho[0].copy()
    p_m = [rm[0] @ rho[0] for _, rm in terms]
    q_m = [pm.copy() for pm in p_m]
    f_col0 = [lm @ rm[0] for lm, rm in terms]  # (N, d, d) pieces of f[i, 0]

    worst = float(np.max(np.abs(kernel.entry(0, 0))))
    for i in range(1, n):
        fi0 = const.copy()
        fii = const.copy()
        k0 = const @ p_c
        for m, (lm, rm) in enumerate(terms):
            fi0 += f_col0[m][i]
            fii += lm[i] @ rm[i]
            k0 += lm[i] @ p_m[m]
        worst = max(worst, float(np.max(np.abs(fii))))
        if dt * worst >= 1.0:
            raise GridTooCoarseError(
                f"dt * max|f(t_i, t_i)| = {dt * worst:.3e} >= 1; refine the grid"
            )
        if rule is QuadratureRule.RECTANGULAR:
            known = k0
            w_end = dt
        elif trap or i == 1:
            known = k0 - 0.5 * fi0 @ rho[0]
            w_end = 0.5 * dt
        elif i % 2 == 0:
            k1 = const @ q_c
            for m, (lm, _) in enumerate(terms):
                k1 += lm[i] @ q_m[m]
            known = k0 - k1 / 3.0 - (fi0 @ rho[0]) / 3.0
            w_end = dt / 3.0
        else:
            fi1 = kernel.entry(i, 1)
            fim = kernel.entry(i, i - 1)
            known = k0 - (7.0 / 12.0) * fi0 @ rho[0] + (1.0 / 12.0) * (
                fi1 @ rho[1] + fim @ rho[i - 1]
            )
            w_end = (5.0 / 12.0) * dt
        rhs = fi0 + dt * known
        if d == 1:
            rho[i] = rhs / (1.0 - w_end * fii[0, 0])
        else:
            rho[i] = np.linalg.solve(eye - w_end * fii, rhs)
        p_c += rho[i]
        s = -1.0 if i % 2 else 1.0
        q_c += s * rho[i]
        for m, (_, rm) in enumerate(terms):
            upd = rm[i] @ rho[i]
            p_m[m] += upd
            q_m[m] += s * upd
    return rho


def separable_resolvent_full(kernel: SeparableKernel, dt: float, rule: QuadratureRule) -> np.ndarray:
    """Full resolvent smooth table of a scalar separable kernel, O(N^2).

    Sweeps anti-diagonals i = j + n for n = 0..N-1, carrying per-column
    running sums.  Only implemented for scalar kernels (dim == 1).
    """
    if kernel.dim != 1:
        raise ValueError("full separable resolvents are implemented for scalar kernels")
    n = kernel.n_points
    const = complex(kernel.const[0, 0]) if kernel.const is not None else 0.0
    us = [lm[:, 0, 0] for lm, _ in kernel.terms]
    vs = [rm[:, 0, 0] for _, rm in kernel.terms]
    idx = np.arange(n)
    sign = (-1.0) ** idx

    def f_val(i_arr, j_arr):
        out = np.full(i_arr.shape, const, dtype=np.complex128)
        for u, v in zip(us, vs):
            out = out + u[i_arr] * v[j_arr]
        return out

    fdiag = f_val(idx, idx)
    _check_conditioning(fdiag, dt)

    rho = np.zeros((n, n), dtype=np.complex128)
    rho[idx, idx] = fdiag
    p_c = fdiag.copy()
    q_c = sign * fdiag
    p_m = [v * fdiag for v in vs]
    q_m = [sign * pm for pm in p_m]
    prev = fdiag.copy()  # rho[j + n - 1, j]
    simpson = rule is QuadratureRule.AVERAGED_SIMPSON

    for off in range(1, n):
        j = idx[: n - off]
        i = j + off
        fi0 = f_val(i, j)
        fii = fdiag[i]
        k0 = const * p_c[: n - off]
        for m, u in enumerate(us):
            k0 = k0 + u[i] * p_m[m][: n - off]
        if rule is QuadratureRule.RECTANGULAR:
            known = k0
            w_end = dt
        elif not simpson or off == 1:
            known = k0 - 0.5 * fi0 * rho[j, j]
            w_end = 0.5 * dt
        elif off % 2 == 0:
            k1 = const * q_c[: n - off]
            for m, u in enumerate(us):
                k1 = k1 + u[i] * q_m[m][: n - off]
            known = k0 - sign[j] * k1 / 3.0 - fi0 * rho[j, j] / 3.0
            w_end = dt / 3.0
        else:
            known = (
                k0
                - (7.0 / 12.0) * fi0 * rho[j, j]
                + (1.0 / 12.0) * (f_val(i, j + 1) * rho[j + 1, j] + f_val(i, i - 1) * prev[: n - off])
            )
            w_end = (5.0 / 12.0) * dt
        new = (fi0 + dt * known) / (1.0 - w_end * fii)
        rho[i, j] = new
        p_c[: n - off] += new
        q_c[: n - off] += sign[i] * new
        for m, v in enumerate(vs):
            p_m[m][: n - off] += v[i] * new
            q_m[m][: n - off] += sign[i] * v[i] * new
        prev = new
    return rho


def resolvent_first_column_from_table(f: np.ndarray, dt: float, rule: QuadratureRule) -> np.ndarray:
    """First column of the resolvent smooth part from a dense scalar table."""
    n = f.shape[0]
    _check_conditioning(np.diagonal(f), dt)
    rho = np.zeros(n, dtype=np.complex128)
    rho[0] = f[0, 0]
    sign = (-1.0) ** np.arange(n)
    simpson = rule is QuadratureRule.AVERAGED_SIMPSON
    for i in range(1, n):
        fi = f[i]
        k0 = fi[:i] @ rho[:i]
        if rule is QuadratureRule.RECTANGULAR:
            known = k0
            w_end = dt
        elif not simpson or i == 1:
            known = k0 - 0.5 * fi[0] * rho[0]
            w_end = 0.5 * dt
        elif i % 2 == 0:
            k1 = (fi[:i] * sign[:i]) @ rho[:i]
            known = k0 - k1 / 3.0 - fi[0] * rho[0] / 3.0
            w_end = dt / 3.0
        else:
            known = k0 - (7.0 / 12.0) * fi[0] * rho[0] + (1.0 / 12.0) * (
                fi[1] * rho[1] + fi[i - 1] * rho[i - 1]
            )
            w_end = (5.0 / 12.0) * dt
        rho[i] = (fi[0] + dt * known) / (1.0 - w_end * fi[i])
    return rho


def volterra_apply_from_table(
    f: np.ndarray, history: np.ndarray, dt: float, rule: QuadratureRule
) -> np.ndarray:
    """First column of (1 - f)^{*-1} * h without forming the resolvent.

    Solves z = h + f * z by forward substitution.  ``f`` is a dense block
    table (N, N, d, d) (or (N, N) scalar); ``history`` is (N, d, m) or (N,).
    """
    scalar = f.ndim == 2
    if scalar:
        f4 = f[:, :, None, None]
        h = np.asarray(history, dtype=np.complex128)[:, None, None]
    else:
        f4 = f
        h = np.asarray(history, dtype=np.complex128)
    n, _, d, _ = f4.shape
    m = h.shape[2]
    z = np.zeros((n, d, m), dtype=np.complex128)
    z[0] = h[0]
    eye = np.eye(d)
    sign = (-1.0) ** np.arange(n)
    simpson = rule is QuadratureRule.AVERAGED_SIMPSON
    for i in range(1, n):
        fi = f4[i]
        k0 = np.einsum("kab,kbm->am", fi[:i], z[:i])
        if rule is QuadratureRule.RECTANGULAR:
            known = k0
            w_end = dt
        elif not simpson or i == 1:
            known = k0 - 0.5 * fi[0] @ z[0]
            w_end = 0.5 * dt
        elif i % 2 == 0:
            k1 = np.einsum("k,kab,kbm->am", sign[:i], fi[:i], z[:i])
            known = k0 - k1 / 3.0 - (fi[0] @ z[0]) / 3.0
            w_end = dt / 3.0
        else:
            known = k0 - (7.0 / 12.0) * fi[0] @ z[0] + (1.0 / 12.0) * (
                fi[1] @ z[1] + fi[i - 1] @ z[i - 1]
            )
            w_end = (5.0 / 12.0) * dt
        rhs = h[i] + dt * known
        if d == 1:
            z[i] = rhs / (1.0 - w_end * fi[i, 0, 0])
        else:
            z[i] = np.linalg.solve(eye - w_end * fi[i], rhs)
    if scalar:
        return z[:, 0, 0]
    return z
