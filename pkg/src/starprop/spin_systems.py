"""Hamiltonian builders for driven spin-1/2 systems.

Supported systems: a single spin-1/2 in the SU(2) (2x2) representation or in
the SO(3) (3x3) representation (Cartesian Bloch form or shift-operator
basis), and two or three scalar-coupled spins (4x4 / 8x8).

Multi-spin basis ordering is the Kronecker order alpha-first per spin, e.g.
|aa>, |ab>, |ba>, |bb| for two spins; this is asserted against the operator
sum Σ Ω_i I_z^(i) + pulse + Σ 2π J_ij I^(i).I^(j) in the test suite.

Every Hamiltonian is affine in the pulse quadratures, H(t) = H0 + bx Gx +
by Gy, which the solvers exploit for cheap re-evaluation.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np

from .waveforms import Waveform, beta

SQRT2 = math.sqrt(2.0)


class SystemKind(enum.Enum):
    MONO_SU2 = "mono_su2"
    MONO_SO3_CARTESIAN = "mono_so3_cartesian"
    MONO_SO3_SHIFT = "mono_so3_shift"
    BIPARTITE = "bipartite"
    TRIPARTITE = "tripartite"


_N_OFFSETS = {
    SystemKind.MONO_SU2: 1,
    SystemKind.MONO_SO3_CARTESIAN: 1,
    SystemKind.MONO_SO3_SHIFT: 1,
    SystemKind.BIPARTITE: 2,
    SystemKind.TRIPARTITE: 3,
}
_N_COUPLINGS = {
    SystemKind.MONO_SU2: 0,
    SystemKind.MONO_SO3_CARTESIAN: 0,
    SystemKind.MONO_SO3_SHIFT: 0,
    SystemKind.BIPARTITE: 1,
    SystemKind.TRIPARTITE: 3,
}
_DIMS = {
    SystemKind.MONO_SU2: 2,
    SystemKind.MONO_SO3_CARTESIAN: 3,
    SystemKind.MONO_SO3_SHIFT: 3,
    SystemKind.BIPARTITE: 4,
    SystemKind.TRIPARTITE: 8,
}


@dataclass(frozen=True)
class SystemSpec:
    """Spin system: offsets Omega_i in rad/s, couplings J_ij in Hz.

    Tripartite coupling order is (J_12, J_13, J_23).
    """

    kind: SystemKind
    offsets: tuple
    couplings: tuple = ()

    def __post_init__(self):
        offsets = tuple(float(x) for x in self.offsets)
        couplings = tuple(float(x) for x in self.couplings)
        if len(offsets) != _N_OFFSETS[self.kind]:
            raise ValueError(
                f"{self.kind.value} needs {_N_OFFSETS[self.kind]} offsets, got {len(offsets)}"
            )
        if len(couplings) != _N_COUPLINGS[self.kind]:
            raise ValueError(
                f"{self.kind.value} needs {_N_COUPLINGS[self.kind]} couplings, got {len(couplings)}"
            )
        if not all(np.isfinite(offsets)) or not all(np.isfinite(couplings)):
            raise ValueError("offsets and couplings must be finite")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "couplings", couplings)

    @property
    def dim(self) -> int:
        return _DIMS[self.kind]


@dataclass(frozen=True)
class DiagonalEnergies:
    """Diagonal energies h_ii (rad/s) and the gauge shift applied to them."""

    h: np.ndarray
    gauge_shift: float = 0.0


@dataclass(frozen=True)
class PartitionLayout:
    """State-space partition used by the coupled-spin solvers.

    ``blocks`` lists canonical basis indices (0-based) per partition cell;
    ``u`` is the all-ones connector row, ``mixing`` the inter-cell pattern
    (the rank-one u^T u for two spins, the path-graph mixing matrix for
    three).  Block Hamiltonians are gauge-shifted for the bipartite system.
    """

    blocks: tuple
    u: np.ndarray
    mixing: np.ndarray
    h_II: np.ndarray
    h_III: np.ndarray | None = None


def bipartite_energies(spec: SystemSpec) -> np.ndarray:
    o1, o2 = spec.offsets
    pj = math.pi * spec.couplings[0]
    return 0.5 * np.array(
        [pj + o1 + o2, -pj + o1 - o2, -pj - o1 + o2, pj - o1 - o2]
    )


def tripartite_energies(spec: SystemSpec) -> np.ndarray:
    o1, o2, o3 = spec.offsets
    j12, j13, j23 = (math.pi * j for j in spec.couplings)
    return 0.5 * np.array(
        [
            (j12 + j13 + j23) + o1 + o2 + o3,
            j12 - (j13 + j23) + o1 + o2 - o3,
            -(j12 - j13 + j23) + o1 - o2 + o3,
            -(j12 + j13 - j23) + o1 - o2 - o3,
            -(j12 + j13 - j23) - o1 + o2 + o3,
            -(j12 - j13 + j23) - o1 + o2 - o3,
            j12 - (j13 + j23) - o1 - o2 + o3,
            (j12 + j13 + j23) - o1 - o2 - o3,
        ]
    )


def diagonal_energies(spec: SystemSpec) -> DiagonalEnergies:
    if spec.kind is SystemKind.BIPARTITE:
        return DiagonalEnergies(bipartite_energies(spec))
    if spec.kind is SystemKind.TRIPARTITE:
        return DiagonalEnergies(tripartite_energies(spec))
    raise ValueError(f"no diagonal-energy table for {spec.kind.value}")


def gauge_shift_bipartite(spec: SystemSpec):
    """Primed energies h'_ii = h_ii - pi J / 2 and the shift itself.

    The shifted Hamiltonian generates the same density-matrix dynamics; the
    solver restores the propagator phase via U(t) = exp(-i shift t) U'(t).
    """
    if spec.kind is not SystemKind.BIPARTITE:
        raise ValueError("gauge shift is defined for the bipartite system")
    shift = 0.5 * math.pi * spec.couplings[0]
    h = bipartite_energies(spec) - shift
    return DiagonalEnergies(h, gauge_shift=shift), shift


# beta / conj(beta) fill patterns for the coupled systems, 0-based (row, col)
_BIPARTITE_BETA = [(1, 0), (2, 0), (3, 1), (3, 2)]
_TRIPARTITE_BETA = [
    (1, 0), (2, 0), (4, 0),
    (3, 1), (5, 1),
    (3, 2), (6, 2),
    (5, 4), (6, 4),
    (7, 3), (7, 5), (7, 6),
]


def _bipartite_static(spec: SystemSpec) -> np.ndarray:
    h = bipartite_energies(spec)
    pj = math.pi * spec.couplings[0]
    h0 = np.diag(h).astype(np.complex128)
    h0[1, 2] = h0[2, 1] = pj
    return h0


def _tripartite_static(spec: SystemSpec) -> np.ndarray:
    h = tripartite_energies(spec)
    j12, j13, j23 = (math.pi * j for j in spec.couplings)
    h0 = np.diag(h).astype(np.complex128)
    for (r, c), v in {
        (1, 2): j23, (1, 4): j13, (2, 4): j12,
        (3, 5): j12, (3, 6): j13, (5, 6): j23,
    }.items():
        h0[r, c] = h0[c, r] = v
    return h0


def _pulse_patterns(kind: SystemKind):
    """Matrices (B, C) with H_pulse = beta * B + conj(beta) * C."""
    if kind is SystemKind.MONO_SU2:
        b = np.zeros((2, 2), dtype=np.complex128)
        b[1, 0] = 1.0
        return b, b.T.copy()
    if kind is SystemKind.MONO_SO3_SHIFT:
        b = np.zeros((3, 3), dtype=np.complex128)
        b[0, 1] = SQRT2
        b[1, 2] = -SQRT2
        c = np.zeros((3, 3), dtype=np.complex128)
        c[1, 0] = SQRT2
        c[2, 1] = -SQRT2
        return b, c
    if kind is SystemKind.BIPARTITE:
        pats = _BIPARTITE_BETA
        d = 4
    elif kind is SystemKind.TRIPARTITE:
        pats = _TRIPARTITE_BETA
        d = 8
    else:
        raise ValueError(f"no pulse pattern for {kind.value}")
    b = np.zeros((d, d), dtype=np.complex128)
    for r, c in pats:
        b[r, c] = 1.0
    return b, b.T.copy()


def hamiltonian_at(spec: SystemSpec, wf: Waveform, t: float) -> np.ndarray:
    """Hamiltonian matrix at time t (rad/s).

    Hermitian for the SU(2^N) kinds and the shift-basis single spin.  The
    Cartesian SO(3) kind instead returns the real Bloch generator A with
    dg/dt = A g (the -i is already folded in).
    """
    bt = complex(beta(wf, t))
    if spec.kind is SystemKind.MONO_SO3_CARTESIAN:
        omega = spec.offsets[0]
        bx, by = bt.real, bt.imag
        return np.array(
            [
                [0.0, -omega, 2.0 * by],
                [omega, 0.0, -2.0 * bx],
                [-2.0 * by, 2.0 * bx, 0.0],
            ]
        )
    if spec.kind is SystemKind.MONO_SU2:
        omega = spec.offsets[0]
        h0 = np.diag([0.5 * omega, -0.5 * omega]).astype(np.complex128)
    elif spec.kind is SystemKind.MONO_SO3_SHIFT:
        omega = spec.offsets[0]
        h0 = np.diag([-omega, 0.0, omega]).astype(np.complex128)
    elif spec.kind is SystemKind.BIPARTITE:
        h0 = _bipartite_static(spec)
    else:
        h0 = _tripartite_static(spec)
    b, c = _pulse_patterns(spec.kind)
    return h0 + bt * b + np.conj(bt) * c


def generator_structure(spec: SystemSpec):
    """(G0, Gx, Gy) with dU/dt = (G0 + bx Gx + by Gy) U, bx + i by = beta."""
    if spec.kind is SystemKind.MONO_SO3_CARTESIAN:
        omega = spec.offsets[0]
        g0 = np.array([[0.0, -omega, 0.0], [omega, 0.0, 0.0], [0.0, 0.0, 0.0]])
        gx = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -2.0], [0.0, 2.0, 0.0]])
        gy = np.array([[0.0, 0.0, 2.0], [0.0, 0.0, 0.0], [-2.0, 0.0, 0.0]])
        return g0, gx, gy
    if spec.kind is SystemKind.MONO_SU2:
        omega = spec.offsets[0]
        h0 = np.diag([0.5 * omega, -0.5 * omega]).astype(np.complex128)
    elif spec.kind is SystemKind.MONO_SO3_SHIFT:
        omega = spec.offsets[0]
        h0 = np.diag([-omega, 0.0, omega]).astype(np.complex128)
    elif spec.kind is SystemKind.BIPARTITE:
        h0 = _bipartite_static(spec)
    else:
        h0 = _tripartite_static(spec)
    b, c = _pulse_patterns(spec.kind)
    return -1j * h0, -1j * (b + c), (b - c)


def hamiltonian_stack(spec: SystemSpec, wf: Waveform, times: np.ndarray) -> np.ndarray:
    """Hamiltonians (or Bloch generators) at many times, shape (M, d, d)."""
    bt = beta(wf, times)
    if spec.kind is SystemKind.MONO_SO3_CARTESIAN:
        g0, gx, gy = generator_structure(spec)
        return g0[None] + bt.real[:, None, None] * gx + bt.imag[:, None, None] * gy
    if spec.kind is SystemKind.MONO_SU2:
        omega = spec.offsets[0]
        h0 = np.diag([0.5 * omega, -0.5 * omega]).astype(np.complex128)
    elif spec.kind is SystemKind.MONO_SO3_SHIFT:
        omega = spec.offsets[0]
        h0 = np.diag([-omega, 0.0, omega]).astype(np.complex128)
    elif spec.kind is SystemKind.BIPARTITE:
        h0 = _bipartite_static(spec)
    else:
        h0 = _tripartite_static(spec)
    b, c = _pulse_patterns(spec.kind)
    return h0[None] + bt[:, None, None] * b + np.conj(bt)[:, None, None] * c


def shift_basis_matrix() -> np.ndarray:
    """Unitary mapping Cartesian Bloch components to the shift basis."""
    return np.array(
        [[1.0, 1j, 0.0], [0.0, 0.0, SQRT2], [1.0, -1j, 0.0]], dtype=np.complex128
    ) / SQRT2


def basis_transform_so3(generator_cartesian: np.ndarray) -> np.ndarray:
    """Shift-basis Hamiltonian U (i A) U^dag from the real Bloch generator A."""
    u = shift_basis_matrix()
    return u @ (1j * np.asarray(generator_cartesian, dtype=np.complex128)) @ u.conj().T


def partition(spec: SystemSpec) -> PartitionLayout:
    """State-space partition of the coupled systems.

    Bipartite cells are {1}, {2,3}, {4} with the 2x2 block Hamiltonian taken
    in the shifted gauge; tripartite cells are {1}, {2,3,5}, {4,6,7}, {8}
    forming a path graph with mixing matrix M.
    """
    if spec.kind is SystemKind.BIPARTITE:
        energies, _ = gauge_shift_bipartite(spec)
        hp = energies.h
        pj = math.pi * spec.couplings[0]
        h_ii = np.array([[hp[1], pj], [pj, hp[2]]])
        return PartitionLayout(
            blocks=((0,), (1, 2), (3,)),
            u=np.ones(2),
            mixing=np.ones((2, 2)),
            h_II=h_ii,
        )
    if spec.kind is SystemKind.TRIPARTITE:
        h = tripartite_energies(spec)
        j12, j13, j23 = (math.pi * j for j in spec.couplings)
        h_ii = np.array(
            [[h[1], j23, j13], [j23, h[2], j12], [j13, j12, h[4]]]
        )
        h_iii = np.array(
            [[h[3], j12, j13], [j12, h[5], j23], [j13, j23, h[6]]]
        )
        mixing = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
        return PartitionLayout(
            blocks=((0,), (1, 2, 4), (3, 5, 6), (7,)),
            u=np.ones(3),
            mixing=mixing,
            h_II=h_ii,
            h_III=h_iii,
        )
    raise ValueError(f"no partition for {spec.kind.value}")


def system_from_json(obj) -> SystemSpec:
    if not isinstance(obj, dict):
        raise ValueError("system must be a JSON object")
    kind = SystemKind(obj["kind"])
    return SystemSpec(
        kind=kind,
        offsets=tuple(obj.get("offsets_rad_s", ())),
        couplings=tuple(obj.get("couplings_hz", ())),
    )


def system_to_json(spec: SystemSpec) -> dict:
    return {
        "kind": spec.kind.value,
        "offsets_rad_s": list(spec.offsets),
        "couplings_hz": list(spec.couplings),
    }
