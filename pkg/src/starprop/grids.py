"""Uniform time grids and the quadrature rules shared by the kernel algebra.

Every discrete object in this package lives on a :class:`TimeGrid`.  The grid
is deliberately minimal: equally spaced nodes, both endpoints included, node
times computed as ``t_start + k * dt`` (never as a running sum, so there is no
accumulated rounding).

Three integration rules are supported.  ``RECTANGULAR`` weights every node of
a range [t_j, t_i] with dt, which is the rule implied by mapping the Volterra
composition onto a plain triangular matrix product.  ``TRAPEZOIDAL`` halves
the endpoint weights.  ``AVERAGED_SIMPSON`` uses composite Simpson weights on
ranges with an even number of subintervals; on odd ranges it averages the two
composite variants that close the first or the last subinterval with a
trapezoid, which works out to the endpoint-corrected weights
``[5/12, 13/12, 1, ..., 1, 13/12, 5/12]``.  Ranges of a single subinterval
fall back to the trapezoid, empty ranges integrate to zero.
"""

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class QuadratureRule(enum.Enum):
    """Integration rule applied when kernels are composed or integrated."""

    RECTANGULAR = "rect"
    TRAPEZOIDAL = "trap"
    AVERAGED_SIMPSON = "simpson"


_RULE_ALIASES = {
    "rect": QuadratureRule.RECTANGULAR,
    "rectangular": QuadratureRule.RECTANGULAR,
    "trap": QuadratureRule.TRAPEZOIDAL,
    "trapezoidal": QuadratureRule.TRAPEZOIDAL,
    "simpson": QuadratureRule.AVERAGED_SIMPSON,
    "averaged_simpson": QuadratureRule.AVERAGED_SIMPSON,
}


def parse_rule(value) -> QuadratureRule:
    if isinstance(value, QuadratureRule):
        return value
    try:
        return _RULE_ALIASES[str(value).lower()]
    except KeyError:
        raise ValueError(
            f"unknown quadrature rule {value!r}; expected one of {sorted(_RULE_ALIASES)}"
        ) from None


@dataclass(frozen=True)
class TimeGrid:
    """``n_points`` equally spaced nodes on [t_start, t_end], endpoints included."""

    t_start: float
    t_end: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("a time grid needs at least two nodes")
        if not np.isfinite(self.t_start) or not np.isfinite(self.t_end):
            raise ValueError("grid endpoints must be finite")
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / (self.n_points - 1)

    @cached_property
    def times(self) -> np.ndarray:
        return self.t_start + np.arange(self.n_points) * self.dt

    @property
    def span(self) -> float:
        return self.t_end - self.t_start


def _shaped(vec: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Reshape a per-node vector so it broadcasts over trailing value axes."""
    return vec.reshape((-1,) + (1,) * (like.ndim - 1))


def prefix_integral(samples: np.ndarray, dt: float, rule: QuadratureRule) -> np.ndarray:
    """Running integral I[k] = ∫_{t_0}^{t_k} of node samples, I[0] = 0.

    ``samples`` may carry trailing axes (vector or matrix valued integrands);
    the integral acts along axis 0.
    """
    y = np.asarray(samples)
    n = y.shape[0]
    cs = np.cumsum(y, axis=0)
    if rule is QuadratureRule.RECTANGULAR:
        out = dt * cs
        out[0] = 0.0
        return out
    if rule is QuadratureRule.TRAPEZOIDAL:
        return dt * (cs - 0.5 * (y[0] + y))

    k = np.arange(n)
    sign = _shaped((-1.0) ** k, y)
    ca = np.cumsum(sign * y, axis=0)
    yprev = np.empty_like(y)
    yprev[0] = 0.0
    yprev[1:] = y[:-1]
    even = dt * (cs - ca / 3.0 - (y[0] + y) / 3.0)
    y1 = y[1] if n > 1 else 0.0
    odd = dt * (cs - (7.0 / 12.0) * (y[0] + y) + (1.0 / 12.0) * (y1 + yprev))
    out = np.where(_shaped(k % 2 == 0, y), even, odd)
    if n > 1:
        out[1] = dt * 0.5 * (y[0] + y[1])
    out[0] = 0.0
    return out


def prefix_weights(n: int, dt: float, rule: QuadratureRule) -> np.ndarray:
    """Weights w of the active rule on the range [t_0, t_n], length n + 1."""
    if n == 0:
        return np.zeros(1)
    if rule is QuadratureRule.RECTANGULAR:
        return np.full(n + 1, dt)
    if rule is QuadratureRule.TRAPEZOIDAL or n == 1:
        w = np.full(n + 1, dt)
        w[0] = w[-1] = 0.5 * dt
        return w
    if n % 2 == 0:
        w = np.full(n + 1, dt)
        w[1::2] = 4.0 * dt / 3.0
        w[2:-1:2] = 2.0 * dt / 3.0
        w[0] = w[-1] = dt / 3.0
        return w
    w = np.full(n + 1, dt)
    w[0] = w[-1] = 5.0 * dt / 12.0
    w[1] = w[-2] = 13.0 * dt / 12.0
    return w


def closing_weight(n: int, dt: float, rule: QuadratureRule) -> float:
    """Weight of the last node of a range with n subintervals (n >= 1)."""
    if rule is QuadratureRule.RECTANGULAR:
        return dt
    if rule is QuadratureRule.TRAPEZOIDAL or n == 1:
        return 0.5 * dt
    if n % 2 == 0:
        return dt / 3.0
    return 5.0 * dt / 12.0
