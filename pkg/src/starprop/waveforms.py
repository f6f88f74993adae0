"""Parametric pulse envelopes: the 6-parameter chirp family plus tables.

A pulse is described by its complex envelope

    beta(t) = beta_x(t) + i beta_y(t) = (1/2) omega_1(t) exp(i phi(t))

in rad/s.  The chirp family uses a super-Gaussian amplitude profile

    omega_1(t) = omega_1_max * exp(-2^(n+2) ((t - delta_t) / tau_p)^n)

with even smoothing factor n, and a quadratic phase

    phi(t) = phi_0 + pi dF (t - delta_t)^2 / tau_p + 2 pi df (t - delta_t)

whose time derivative is the linear frequency sweep.  The peak amplitude can
be given explicitly, or derived from the adiabaticity factor Q_0 via
omega_1_max = sqrt(2 pi dF Q_0 / tau_p), or from a target flip angle alpha
via Q_0 = (2/pi) ln(2 / (cos(alpha) + 1)).  When several parameterizations
are supplied, precedence is explicit amplitude, then Q_0, then flip angle.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np


def omega1_max_from_q(delta_f_hz: float, tau_p_s: float, q0: float) -> float:
    """Peak amplitude (rad/s) from bandwidth (Hz), duration (s) and Q_0."""
    return math.sqrt(2.0 * math.pi * delta_f_hz * q0 / tau_p_s)


def q_from_flip_angle(alpha_rad: float) -> float:
    """Adiabaticity factor giving an effective flip angle alpha in [0, pi)."""
    if not 0.0 <= alpha_rad < math.pi:
        raise ValueError(f"flip angle must lie in [0, pi); got {alpha_rad}")
    return (2.0 / math.pi) * math.log(2.0 / (math.cos(alpha_rad) + 1.0))


@dataclass(frozen=True)
class ChirpSpec:
    """Frequency-swept pulse with super-Gaussian envelope.

    Amplitude is resolved once at construction from whichever of
    ``omega1_max`` (rad/s), ``q0`` or ``alpha`` (rad) is given, in that order
    of precedence.
    """

    delta_F: float  # sweep bandwidth, Hz
    tau_p: float    # duration, s
    phi0: float = 0.0      # overall phase, rad
    delta_t: float = 0.0   # time offset of the envelope center, s
    delta_f: float = 0.0   # frequency offset, Hz
    n: int = 2             # smoothing factor, positive even integer
    omega1_max: float | None = None
    q0: float | None = None
    alpha: float | None = None
    amplitude: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.tau_p <= 0:
            raise ValueError("tau_p must be positive")
        if self.delta_F <= 0:
            raise ValueError("delta_F must be positive")
        if self.n < 2 or self.n % 2 != 0:
            raise ValueError("smoothing factor n must be a positive even integer >= 2")
        if self.omega1_max is not None:
            amp = float(self.omega1_max)
        elif self.q0 is not None:
            amp = omega1_max_from_q(self.delta_F, self.tau_p, self.q0)
        elif self.alpha is not None:
            amp = omega1_max_from_q(self.delta_F, self.tau_p, q_from_flip_angle(self.alpha))
        else:
            raise ValueError("one of omega1_max, q0 or alpha is required")
        object.__setattr__(self, "amplitude", amp)


@dataclass(frozen=True)
class TabulatedWaveform:
    """Sampled complex envelope; linear interpolation, zero outside support."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=np.complex128)
        if t.ndim != 1 or t.shape != v.shape:
            raise ValueError("times and values must be matching 1-d arrays")
        if t.size < 2 or np.any(np.diff(t) <= 0):
            raise ValueError("table times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class CompositeWaveform:
    """Pointwise sum of component waveforms."""

    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))


Waveform = ChirpSpec | TabulatedWaveform | CompositeWaveform


def chirp_amplitude(spec: ChirpSpec, t) -> np.ndarray:
    """Envelope omega_1(t) in rad/s."""
    x = (np.asarray(t, dtype=float) - spec.delta_t) / spec.tau_p
    return spec.amplitude * np.exp(-(2.0 ** (spec.n + 2)) * x**spec.n)


def chirp_phase(spec: ChirpSpec, t) -> np.ndarray:
    """Phase phi(t) in rad; d(phi)/dt is the instantaneous sweep."""
    dt = np.asarray(t, dtype=float) - spec.delta_t
    return spec.phi0 + math.pi * spec.delta_F * dt**2 / spec.tau_p + 2.0 * math.pi * spec.delta_f * dt


def chirp_sweep(spec: ChirpSpec, t) -> np.ndarray:
    """Instantaneous angular frequency d(phi)/dt in rad/s."""
    dt = np.asarray(t, dtype=float) - spec.delta_t
    return 2.0 * math.pi * spec.delta_F * dt / spec.tau_p + 2.0 * math.pi * spec.delta_f


def beta(wf: Waveform, t) -> np.ndarray:
    """Complex envelope beta(t) in rad/s, vectorized over t."""
    tt = np.asarray(t, dtype=float)
    if isinstance(wf, ChirpSpec):
        return 0.5 * chirp_amplitude(wf, tt) * np.exp(1j * chirp_phase(wf, tt))
    if isinstance(wf, TabulatedWaveform):
        re = np.interp(tt, wf.times, wf.values.real, left=0.0, right=0.0)
        im = np.interp(tt, wf.times, wf.values.imag, left=0.0, right=0.0)
        return re + 1j * im
    if isinstance(wf, CompositeWaveform):
        out = np.zeros(tt.shape, dtype=np.complex128)
        for part in wf.parts:
            out = out + beta(part, tt)
        return out
    raise TypeError(f"not a waveform: {wf!r}")


def tabulated_from_csv(path) -> TabulatedWaveform:
    """Load a table with columns t_s, re_rad_s, im_rad_s ('#' lines skipped)."""
    times, values = [], []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if row[0].strip().lower() in ("t_s", "t"):
                continue
            times.append(float(row[0]))
            values.append(float(row[1]) + 1j * float(row[2]))
    return TabulatedWaveform(np.array(times), np.array(values))


def waveform_from_json(obj) -> Waveform:
    """Build a waveform from its JSON form.

    Chirps use the exact field names delta_F_hz, tau_p_s, phi0_rad,
    delta_t_s, delta_f_hz, n, plus one of omega1_max, q0 or alpha.
    """
    if not isinstance(obj, dict):
        raise ValueError("waveform must be a JSON object")
    kind = obj.get("type", "chirp")
    if kind == "chirp":
        return ChirpSpec(
            delta_F=float(obj["delta_F_hz"]),
            tau_p=float(obj["tau_p_s"]),
            phi0=float(obj.get("phi0_rad", 0.0)),
            delta_t=float(obj.get("delta_t_s", 0.0)),
            delta_f=float(obj.get("delta_f_hz", 0.0)),
            n=int(obj.get("n", 2)),
            omega1_max=(float(obj["omega1_max"]) if "omega1_max" in obj else None),
            q0=(float(obj["q0"]) if "q0" in obj else None),
            alpha=(float(obj["alpha"]) if "alpha" in obj else None),
        )
    if kind == "table":
        if "csv" in obj:
            return tabulated_from_csv(obj["csv"])
        return TabulatedWaveform(
            np.asarray(obj["times_s"], dtype=float),
            np.asarray(obj["re_rad_s"], dtype=float) + 1j * np.asarray(obj["im_rad_s"], dtype=float),
        )
    if kind == "composite":
        return CompositeWaveform(tuple(waveform_from_json(p) for p in obj["parts"]))
    raise ValueError(f"unknown waveform type {kind!r}")


def waveform_to_json(wf: Waveform) -> dict:
    if isinstance(wf, ChirpSpec):
        out = {
            "type": "chirp",
            "delta_F_hz": wf.delta_F,
            "tau_p_s": wf.tau_p,
            "phi0_rad": wf.phi0,
            "delta_t_s": wf.delta_t,
            "delta_f_hz": wf.delta_f,
            "n": wf.n,
        }
        if wf.omega1_max is not None:
            out["omega1_max"] = wf.omega1_max
        elif wf.q0 is not None:
            out["q0"] = wf.q0
        else:
            out["alpha"] = wf.alpha
        return out
    if isinstance(wf, TabulatedWaveform):
        return {
            "type": "table",
            "times_s": wf.times.tolist(),
            "re_rad_s": wf.values.real.tolist(),
            "im_rad_s": wf.values.imag.tolist(),
        }
    if isinstance(wf, CompositeWaveform):
        return {"type": "composite", "parts": [waveform_to_json(p) for p in wf.parts]}
    raise TypeError(f"not a waveform: {wf!r}")
