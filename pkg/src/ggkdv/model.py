"""Physical parameters, grids, state containers and inner products.

The coupled system propagates two wave profiles u and v on (0, L).  The
coefficient set (a, a1, a2, b, c, r) must satisfy b, c, r > 0 and
1 - a^2 b > 0; everything downstream assumes a validated parameter set.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SystemParams",
    "ValidatedParams",
    "DiagonalForm",
    "SpaceTimeGrid",
    "StatePair",
    "Trajectory",
    "CoefficientViolation",
    "DegenerateDiagonalization",
    "ShapeMismatch",
    "validate_params",
    "diagonalize",
    "x_inner",
    "x_norm",
    "l2_inner",
    "l2_norm",
]


class CoefficientViolation(ValueError):
    """Raised when a coefficient set leaves the admissible region."""


class DegenerateDiagonalization(ValueError):
    """Raised when the change of variables is singular (a = 0)."""


class ShapeMismatch(ValueError):
    """Raised when state vectors do not match the grid."""


@dataclass(frozen=True)
class SystemParams:
    """Coefficients of the coupled system.

    a   dispersive coupling, a1/a2 nonlinear coupling strengths,
    b, c scaling of the second equation, r transport speed (times c).
    """

    a: float
    a1: float
    a2: float
    b: float
    c: float
    r: float


@dataclass(frozen=True)
class ValidatedParams:
    """Admissible coefficient set; construct via validate_params."""

    a: float
    a1: float
    a2: float
    b: float
    c: float
    r: float
    one_minus_a2b: float

    @property
    def ab_over_c(self):
        return self.a * self.b / self.c


def validate_params(p: SystemParams) -> ValidatedParams:
    """Check the admissibility constraints and wrap the coefficients.

    Requires b > 0, c > 0, r > 0 and 1 - a^2 b > 0.  Raises
    CoefficientViolation listing every failed inequality.
    """
    failures = []
    if not p.b > 0:
        failures.append(f"b > 0 violated (b={p.b})")
    if not p.c > 0:
        failures.append(f"c > 0 violated (c={p.c})")
    if not p.r > 0:
        failures.append(f"r > 0 violated (r={p.r})")
    one_minus_a2b = 1.0 - p.a ** 2 * p.b
    if not one_minus_a2b > 0:
        failures.append(f"1 - a^2 b > 0 violated (1 - a^2 b={one_minus_a2b})")
    if failures:
        raise CoefficientViolation("; ".join(failures))
    return ValidatedParams(p.a, p.a1, p.a2, p.b, p.c, p.r, one_minus_a2b)


DEFAULT_PARAMS = SystemParams(a=0.5, a1=1.0, a2=1.0, b=1.0, c=1.0, r=1.0)


@dataclass(frozen=True)
class DiagonalForm:
    """Change of variables decoupling the dispersive part of the system."""

    lam: float
    alpha_plus: float
    alpha_minus: float
    to_diag: np.ndarray
    from_diag: np.ndarray


def diagonalize(p: ValidatedParams) -> DiagonalForm:
    """Diagonalize the dispersive drift matrix [[1, a], [ab/c, 1/c]].

    Returns lambda = sqrt((1/c-1)^2 + 4 a^2 b / c), the pair
    alpha_pm = -((1/c-1) +- lambda)/2, and the 2x2 matrices of the
    substitution u = 2a*u~ + 2a*v~, v = ((1/c-1)+lambda)*u~ +
    ((1/c-1)-lambda)*v~ together with its inverse.  Exposed for
    validation; the production solvers discretize the coupled system
    directly (the r*v_x term spoils the decoupling).
    """
    if p.a == 0.0:
        raise DegenerateDiagonalization(
            "a = 0: the substitution matrix is singular and lambda may vanish"
        )
    d = 1.0 / p.c - 1.0
    lam = np.sqrt(d * d + 4.0 * p.a ** 2 * p.b / p.c)
    alpha_plus = -0.5 * (d + lam)
    alpha_minus = -0.5 * (d - lam)
    from_diag = np.array([[2.0 * p.a, 2.0 * p.a], [d + lam, d - lam]])
    to_diag = np.linalg.inv(from_diag)
    return DiagonalForm(lam, alpha_plus, alpha_minus, to_diag, from_diag)


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform grid: nodes x_j = j*dx (both endpoints included), steps dt."""

    L: float
    T: float
    nx: int
    nt: int

    def __post_init__(self):
        if self.nx < 8 or self.nt < 8:
            raise ValueError(f"need nx >= 8 and nt >= 8, got nx={self.nx}, nt={self.nt}")
        if not (self.L > 0 and self.T > 0):
            raise ValueError(f"need L > 0 and T > 0, got L={self.L}, T={self.T}")

    @property
    def dx(self):
        return self.L / self.nx

    @property
    def dt(self):
        return self.T / self.nt

    @property
    def x(self):
        return np.linspace(0.0, self.L, self.nx + 1)

    @property
    def t(self):
        return np.linspace(0.0, self.T, self.nt + 1)

    def trapz_weights(self):
        """Composite-trapezoid quadrature weights on the spatial nodes."""
        w = np.full(self.nx + 1, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    def time_weights(self):
        """Composite-trapezoid quadrature weights on the time nodes."""
        w = np.full(self.nt + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w


@dataclass(frozen=True)
class StatePair:
    """Nodal values of the two components on the spatial grid."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if u.shape != v.shape or u.ndim != 1:
            raise ShapeMismatch(f"u and v must be 1-d of equal length, got {u.shape} and {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @staticmethod
    def zeros(g: SpaceTimeGrid) -> "StatePair":
        return StatePair(np.zeros(g.nx + 1), np.zeros(g.nx + 1))

    def __add__(self, other):
        return StatePair(self.u + other.u, self.v + other.v)

    def __sub__(self, other):
        return StatePair(self.u - other.u, self.v - other.v)

    def __mul__(self, scalar):
        return StatePair(self.u * scalar, self.v * scalar)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed sequence of states, times increasing from 0 to T."""

    states: list
    times: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(self.states) != t.size:
            raise ValueError("states and times must have matching length")
        if t.size >= 2 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @property
    def final(self) -> StatePair:
        return self.states[-1]


def _check_shapes(s1: StatePair, s2: StatePair, g: SpaceTimeGrid):
    n = g.nx + 1
    if s1.u.size != n or s2.u.size != n:
        raise ShapeMismatch(
            f"states of length {s1.u.size} and {s2.u.size} do not match grid with nx+1={n}"
        )


def x_inner(s1: StatePair, s2: StatePair, p: ValidatedParams, g: SpaceTimeGrid) -> float:
    """Weighted inner product int u1*u2 dx + (b/c) int v1*v2 dx (trapezoid)."""
    _check_shapes(s1, s2, g)
    w = g.trapz_weights()
    return float(np.dot(w, s1.u * s2.u) + (p.b / p.c) * np.dot(w, s1.v * s2.v))


def x_norm(s: StatePair, p: ValidatedParams, g: SpaceTimeGrid) -> float:
    return np.sqrt(max(x_inner(s, s, p, g), 0.0))


def l2_inner(s1: StatePair, s2: StatePair, g: SpaceTimeGrid) -> float:
    """Unweighted pairing int u1*u2 dx + int v1*v2 dx (trapezoid)."""
    _check_shapes(s1, s2, g)
    w = g.trapz_weights()
    return float(np.dot(w, s1.u * s2.u) + np.dot(w, s1.v * s2.v))


def l2_norm(s: StatePair, g: SpaceTimeGrid) -> float:
    return np.sqrt(max(l2_inner(s, s, g), 0.0))
