"""Exact propagators for driven spin systems via discretized star-products.

The package evaluates time-ordered exponentials of driven spin Hamiltonians
by mapping the Volterra composition of two-time kernels onto triangular
matrix algebra: propagator entries become resolvents (inverses of well
conditioned lower-triangular systems) of effective kernels built from pulse
integrals.  Reference integrators (piecewise-constant steps, adaptive
Dormand-Prince) and an accuracy/benchmark harness round out the toolkit.
"""

__version__ = "0.1.0"

from .grids import QuadratureRule, TimeGrid
from .star_algebra import (
    BlockStarKernel,
    StarKernel,
    block_star_product,
    block_star_resolvent,
    identity_kernel,
    integrate_left,
    kernel_from_function,
    star_product,
    star_resolvent,
)
from .waveforms import (
    ChirpSpec,
    CompositeWaveform,
    TabulatedWaveform,
    beta,
    chirp_amplitude,
    chirp_phase,
    omega1_max_from_q,
    q_from_flip_angle,
)
from .spin_systems import (
    SystemKind,
    SystemSpec,
    basis_transform_so3,
    gauge_shift_bipartite,
    hamiltonian_at,
    partition,
    shift_basis_matrix,
)
from .pathsum import (
    PropagatorTrajectory,
    SolveConfig,
    b_kernel,
    fourier_kernel,
    neumann_u22,
    solve,
    solve_bipartite,
    solve_mono_so3,
    solve_mono_su2,
    solve_tripartite,
    u22_trajectory,
)
from .reference import RKConfig, pcpa, rk_dense, rk_solve
from .evaluation import (
    DensityTrajectory,
    ErrorReport,
    bloch_trajectory,
    benchmark,
    default_rho0,
    propagate_density,
    relative_error,
)

__all__ = [
    "QuadratureRule",
    "TimeGrid",
    "StarKernel",
    "BlockStarKernel",
    "identity_kernel",
    "kernel_from_function",
    "star_product",
    "block_star_product",
    "star_resolvent",
    "block_star_resolvent",
    "integrate_left",
    "ChirpSpec",
    "TabulatedWaveform",
    "CompositeWaveform",
    "beta",
    "chirp_amplitude",
    "chirp_phase",
    "omega1_max_from_q",
    "q_from_flip_angle",
    "SystemKind",
    "SystemSpec",
    "hamiltonian_at",
    "basis_transform_so3",
    "shift_basis_matrix",
    "gauge_shift_bipartite",
    "partition",
    "SolveConfig",
    "PropagatorTrajectory",
    "fourier_kernel",
    "b_kernel",
    "neumann_u22",
    "u22_trajectory",
    "solve",
    "solve_mono_su2",
    "solve_mono_so3",
    "solve_bipartite",
    "solve_tripartite",
    "RKConfig",
    "pcpa",
    "rk_solve",
    "rk_dense",
    "DensityTrajectory",
    "ErrorReport",
    "default_rho0",
    "propagate_density",
    "relative_error",
    "bloch_trajectory",
    "benchmark",
]
