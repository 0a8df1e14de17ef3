"""Time steppers for the coupled third-order system and its adjoint.

Spatial discretization: uniform nodes, interior third derivative by the
5-point centered stencil (-w[j-2] + 2w[j-1] - 2w[j+1] + w[j+2])/(2 dx^3),
first derivative centered, and second-order one-sided closures for the
boundary-condition rows.  Time integration is Crank-Nicolson for the
full coupled linear operator (including the transport term r*v_x), with
the quadratic terms of the nonlinear system handled by a per-step Picard
iteration (IMEX).

A solver instance factorizes its implicit matrix once; stepping reuses
the factorization.  Instances are pure functions of their inputs and may
run in parallel with one another.
"""

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .timefrac import TimeSeries, sobolev_norm
from .model import (
    ShapeMismatch,
    SpaceTimeGrid,
    StatePair,
    Trajectory,
    ValidatedParams,
    x_norm,
)

__all__ = [
    "BoundaryData",
    "ControlConfig",
    "AdjointTraces",
    "SourcePair",
    "SingularSystem",
    "PicardDivergence",
    "solve_linear_forward",
    "solve_nonlinear_forward",
    "solve_adjoint_backward",
    "build_discrete_adjoint",
    "DiscreteControlMap",
    "hidden_regularity_estimate",
    "trajectory_to_csv",
    "trajectory_summary",
    "CHANNELS",
]


class SingularSystem(RuntimeError):
    """Implicit boundary-value system could not be factorized."""


class PicardDivergence(RuntimeError):
    """Inner fixed-point iteration failed to converge at some step."""

    def __init__(self, step, residual):
        self.step = step
        self.residual = residual
        super().__init__(f"Picard iteration diverged at step {step} (residual {residual:.3e})")


CHANNELS = ("h0", "h1", "h2", "g0", "g1", "g2")


class ControlConfig(Enum):
    """Active boundary channels for the six control placements.

    C1: (0,h1,0) / (g0,g1,g2)    C2: (h0,h1,h2) / (0,g1,0)
    C3: (h0,h1,0) / (g0,g1,0)    C4: (0,h1,h2) / (0,g1,g2)
    C5: h1 only                  C6: g1 only
    """

    C1 = ("h1", "g0", "g1", "g2")
    C2 = ("h0", "h1", "h2", "g1")
    C3 = ("h0", "h1", "g0", "g1")
    C4 = ("h1", "h2", "g1", "g2")
    C5 = ("h1",)
    C6 = ("g1",)

    @property
    def active(self):
        return self.value

    def mask(self):
        """Boolean mask over the canonical channel order."""
        return np.array([ch in self.value for ch in CHANNELS])


@dataclass(frozen=True)
class BoundaryData:
    """Six boundary input series: values of u_xx(0), u_x(L), u_xx(L) and
    v_xx(0), v_x(L), v_xx(L) at the time nodes."""

    h0: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    g0: np.ndarray
    g1: np.ndarray
    g2: np.ndarray

    def __post_init__(self):
        n = None
        for ch in CHANNELS:
            v = np.asarray(getattr(self, ch), dtype=float)
            if n is None:
                n = v.size
            if v.ndim != 1 or v.size != n:
                raise ShapeMismatch("all six boundary series must be 1-d of equal length")
            object.__setattr__(self, ch, v)

    @staticmethod
    def zeros(g: SpaceTimeGrid) -> "BoundaryData":
        z = np.zeros(g.nt + 1)
        return BoundaryData(*(z.copy() for _ in CHANNELS))

    @staticmethod
    def from_array(q: np.ndarray) -> "BoundaryData":
        return BoundaryData(*(q[i].copy() for i in range(6)))

    def as_array(self):
        return np.stack([getattr(self, ch) for ch in CHANNELS])

    def masked(self, cfg: ControlConfig) -> "BoundaryData":
        q = self.as_array()
        q[~cfg.mask()] = 0.0
        return BoundaryData.from_array(q)


@dataclass(frozen=True)
class SourcePair:
    """Right-hand sides of the two equations on the space-time grid."""

    f: np.ndarray
    s: np.ndarray


@dataclass(frozen=True)
class AdjointTraces:
    """Boundary traces of the adjoint pair, one series per time node."""

    phi0: np.ndarray
    psi0: np.ndarray
    phiL: np.ndarray
    psiL: np.ndarray
    dphiL: np.ndarray
    dpsiL: np.ndarray
    d2phi0: np.ndarray
    d2psi0: np.ndarray
    d2phiL: np.ndarray
    d2psiL: np.ndarray


# second-order stencils; offsets are node shifts relative to the row node
_D3_CENTER = ([-2, -1, 1, 2], [-0.5, 1.0, -1.0, 0.5])
_D3_LEFT = ([-1, 0, 1, 2, 3], [-1.5, 5.0, -6.0, 3.0, -0.5])
_D3_RIGHT = ([-3, -2, -1, 0, 1], [0.5, -3.0, 6.0, -5.0, 1.5])
_D1_CENTER = ([-1, 1], [-0.5, 0.5])
_D2_AT_LEFT = ([0, 1, 2, 3], [2.0, -5.0, 4.0, -1.0])
_D2_AT_RIGHT = ([0, -1, -2, -3], [2.0, -5.0, 4.0, -1.0])
_D1_AT_LEFT = ([0, 1, 2], [-1.5, 2.0, -0.5])
_D1_AT_RIGHT = ([0, -1, -2], [1.5, -2.0, 0.5])


def _d3_row(j, nx, left_biased_at=None, right_biased_at=None):
    if left_biased_at is not None and j == left_biased_at:
        return _D3_LEFT
    if right_biased_at is not None and j == right_biased_at:
        return _D3_RIGHT
    return _D3_CENTER


class _Stepper:
    """Crank-Nicolson step machinery shared by the forward and adjoint solvers.

    Holds A_minus = I - (dt/2) Lop on equation rows with constraint rows
    replacing the boundary nodes, its LU factorization, and
    A_plus = I + (dt/2) Lop with zeroed constraint rows.
    """

    def __init__(self, p: ValidatedParams, g: SpaceTimeGrid, adjoint: bool):
        self.p, self.g, self.adjoint = p, g, adjoint
        nx, n = g.nx, g.nx + 1
        dx, dt = g.dx, g.dt
        size = 2 * n
        rows, cols, vals = [], [], []

        def add(i, j, v):
            rows.append(i)
            cols.append(j)
            vals.append(v)

        if adjoint:
            eq_rows = range(2, nx)  # rows 0, 1 and nx hold constraints
            bias = dict(right_biased_at=nx - 1)
            cu_uu, cu_uv = 1.0, p.ab_over_c  # phi_tau = +(phi_xxx + (ab/c) psi_xxx)
            cv_vu, cv_vv = p.a, 1.0 / p.c
            transport = p.r / p.c
        else:
            eq_rows = range(1, nx - 1)  # rows 0, nx-1 and nx hold constraints
            bias = dict(left_biased_at=1)
            cu_uu, cu_uv = -1.0, -p.a  # u_t = -(u_xxx + a v_xxx)
            cv_vu, cv_vv = -p.ab_over_c, -1.0 / p.c
            transport = -p.r / p.c

        for j in eq_rows:
            offs, coeffs = _d3_row(j, nx, **bias)
            for o, cf in zip(offs, coeffs):
                w3 = cf / dx ** 3
                add(j, j + o, cu_uu * w3)
                add(j, n + j + o, cu_uv * w3)
                add(n + j, j + o, cv_vu * w3)
                add(n + j, n + j + o, cv_vv * w3)
            for o, cf in zip(*_D1_CENTER):
                add(n + j, n + j + o, transport * cf / dx)

        lop = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()

        rows, cols, vals = [], [], []
        if adjoint:
            abc, a, c, r = p.ab_over_c, p.a, p.c, p.r
            # row 0 of each block: first-derivative trace pinned at x=0
            for o, cf in zip(*_D1_AT_LEFT):
                add(0, o, cf / dx)
                add(n, n + o, cf / dx)
            # row 1: second-derivative combinations at x=0
            for o, cf in zip(*_D2_AT_LEFT):
                add(1, o, cf / dx ** 2)
                add(1, n + o, abc * cf / dx ** 2)
                add(n + 1, o, a * cf / dx ** 2)
                add(n + 1, n + o, cf / (c * dx ** 2))
            add(n + 1, n + 0, r / c)
            # row nx: second-derivative combinations at x=L
            for o, cf in zip(*_D2_AT_RIGHT):
                add(nx, nx + o, cf / dx ** 2)
                add(nx, n + nx + o, abc * cf / dx ** 2)
                add(n + nx, nx + o, a * cf / dx ** 2)
                add(n + nx, n + nx + o, cf / (c * dx ** 2))
            add(n + nx, n + nx, r / c)
            self.bc_rows = None  # homogeneous constraints only
        else:
            for blk in (0, n):
                for o, cf in zip(*_D2_AT_LEFT):
                    add(blk + 0, blk + o, cf / dx ** 2)  # w_xx(0) row
                for o, cf in zip(*_D2_AT_RIGHT):
                    add(blk + nx - 1, blk + nx + o, cf / dx ** 2)  # w_xx(L) row
                for o, cf in zip(*_D1_AT_RIGHT):
                    add(blk + nx, blk + nx + o, cf / dx)  # w_x(L) row
            # canonical channel order h0, h1, h2, g0, g1, g2
            self.bc_rows = np.array([0, nx, nx - 1, n, n + nx, n + nx - 1])

        cmat = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()

        eq_mask = np.zeros(size, dtype=bool)
        for j in eq_rows:
            eq_mask[j] = eq_mask[n + j] = True
        self.eq_mask = eq_mask
        dia = sp.diags(eq_mask.astype(float))

        # lop only populates equation rows, so no extra masking is needed
        a_minus = (dia - 0.5 * dt * lop + cmat).tocsc()
        self.a_plus = (dia + 0.5 * dt * lop).tocsr()
        self.a_plus_t = self.a_plus.T.tocsr()
        try:
            self.lu = spla.splu(a_minus)
        except RuntimeError as exc:
            raise SingularSystem(f"implicit system factorization failed: {exc}") from None
        if not np.all(np.isfinite(self.lu.solve(np.ones(size)))):
            raise SingularSystem("implicit system is numerically singular")

    def step(self, w, bc_next=None, extra_eq_rhs=None):
        """One Crank-Nicolson step; bc_next holds the six boundary values at
        the new time level, extra_eq_rhs an already-assembled equation-row term."""
        rhs = self.a_plus @ w
        if extra_eq_rhs is not None:
            rhs += extra_eq_rhs
        if bc_next is not None:
            rhs[self.bc_rows] = bc_next
        return self.lu.solve(rhs)

    def step_transpose(self, s):
        """Transpose of one step: returns (channel values, propagated costate)."""
        y = self.lu.solve(s, trans="T")
        return y[self.bc_rows], self.a_plus_t @ y

    def transpose_step_state(self, s):
        """Transpose of the homogeneous step, costate propagation only."""
        return self.a_plus_t @ self.lu.solve(s, trans="T")


_FWD_CACHE = {}
_ADJ_CACHE = {}


def _forward_stepper(p, g):
    key = (p, g)
    if key not in _FWD_CACHE:
        if len(_FWD_CACHE) > 16:
            _FWD_CACHE.clear()
        _FWD_CACHE[key] = _Stepper(p, g, adjoint=False)
    return _FWD_CACHE[key]


def _adjoint_stepper(p, g):
    key = (p, g)
    if key not in _ADJ_CACHE:
        if len(_ADJ_CACHE) > 16:
            _ADJ_CACHE.clear()
        _ADJ_CACHE[key] = _Stepper(p, g, adjoint=True)
    return _ADJ_CACHE[key]


def _split(w, n):
    return StatePair(w[:n].copy(), w[n:].copy())


def solve_linear_forward(
    p: ValidatedParams,
    g: SpaceTimeGrid,
    init: StatePair,
    bd: BoundaryData,
    src: SourcePair | None = None,
) -> Trajectory:
    """March the linear system from t=0 to t=T under the given boundary data.

    Boundary rows enforce u_xx(0)=h0, u_x(L)=h1, u_xx(L)=h2 and the
    v-analogues at the new time level of every step; the transport term
    r*v_x sits inside the implicit operator.
    """
    n = g.nx + 1
    if init.u.size != n:
        raise ShapeMismatch("initial state does not match grid")
    if bd.h0.size != g.nt + 1:
        raise ShapeMismatch("boundary series length must be nt+1")
    st = _forward_stepper(p, g)
    q = bd.as_array()
    w = np.concatenate([init.u, init.v])
    states = [_split(w, n)]
    fs = None
    if src is not None:
        f = np.asarray(src.f, dtype=float)
        sv = np.asarray(src.s, dtype=float)
        if f.shape != (g.nt + 1, n) or sv.shape != (g.nt + 1, n):
            raise ShapeMismatch("source arrays must have shape (nt+1, nx+1)")
        fs = np.hstack([f, sv])
    for m in range(g.nt):
        extra = None
        if fs is not None:
            extra = 0.5 * g.dt * (fs[m] + fs[m + 1]) * st.eq_mask
        w = st.step(w, bc_next=q[:, m + 1], extra_eq_rhs=extra)
        states.append(_split(w, n))
    return Trajectory(states, g.t)


def _nonlinear_terms(w, p, g, include_self_advection):
    """Quadratic right-hand sides -(u u_x + a1 v v_x + a2 (uv)_x) and
    -(1/c)(v v_x + a2 b u u_x + a1 b (uv)_x) on the interior nodes."""
    n = g.nx + 1
    u, v = w[:n], w[n:]
    inv2dx = 0.5 / g.dx
    ux = np.zeros(n)
    vx = np.zeros(n)
    uvx = np.zeros(n)
    ux[1:-1] = (u[2:] - u[:-2]) * inv2dx
    vx[1:-1] = (v[2:] - v[:-2]) * inv2dx
    uv = u * v
    uvx[1:-1] = (uv[2:] - uv[:-2]) * inv2dx
    sa = 1.0 if include_self_advection else 0.0
    fu = -(sa * u * ux + p.a1 * v * vx + p.a2 * uvx)
    fv = -(sa * v * vx + p.a2 * p.b * u * ux + p.a1 * p.b * uvx) / p.c
    return np.concatenate([fu, fv])


def solve_nonlinear_forward(
    p: ValidatedParams,
    g: SpaceTimeGrid,
    init: StatePair,
    bd: BoundaryData,
    include_self_advection: bool = True,
    picard_tol: float = 1e-10,
    picard_maxit: int = 50,
) -> Trajectory:
    """IMEX march of the full quadratic system.

    The linear part is treated exactly as in solve_linear_forward; the
    quadratic terms enter through a per-step Picard iteration on the
    Crank-Nicolson average, converged to picard_tol in the max norm.
    include_self_advection=False drops the u*u_x and v*v_x terms (the
    reduced right-hand sides some well-posedness statements use).
    """
    n = g.nx + 1
    if init.u.size != n:
        raise ShapeMismatch("initial state does not match grid")
    st = _forward_stepper(p, g)
    q = bd.as_array()
    w = np.concatenate([init.u, init.v])
    states = [_split(w, n)]
    mask = st.eq_mask
    for m in range(g.nt):
        f_old = _nonlinear_terms(w, p, g, include_self_advection)
        guess = w
        converged = False
        resid = np.inf
        for _ in range(picard_maxit):
            with np.errstate(over="ignore", invalid="ignore"):
                f_new = _nonlinear_terms(guess, p, g, include_self_advection)
                extra = 0.5 * g.dt * (f_old + f_new) * mask
                if not np.all(np.isfinite(extra)):
                    break
                w_next = st.step(w, bc_next=q[:, m + 1], extra_eq_rhs=extra)
                resid = float(np.max(np.abs(w_next - guess)))
            guess = w_next
            if not np.isfinite(resid):
                resid = np.inf
                break
            if resid <= picard_tol * max(1.0, float(np.max(np.abs(w_next)))):
                converged = True
                break
        if not converged:
            raise PicardDivergence(m + 1, resid)
        w = guess
        states.append(_split(w, n))
    return Trajectory(states, g.t)


def _extract_traces(states, g: SpaceTimeGrid) -> AdjointTraces:
    nx, dx = g.nx, g.dx
    phi = np.stack([s.u for s in states])  # (nt+1, nx+1), forward time order
    psi = np.stack([s.v for s in states])

    def d1_right(z):
        return (3.0 * z[:, nx] - 4.0 * z[:, nx - 1] + z[:, nx - 2]) / (2.0 * dx)

    def d2_left(z):
        return (2.0 * z[:, 0] - 5.0 * z[:, 1] + 4.0 * z[:, 2] - z[:, 3]) / dx ** 2

    def d2_right(z):
        return (2.0 * z[:, nx] - 5.0 * z[:, nx - 1] + 4.0 * z[:, nx - 2] - z[:, nx - 3]) / dx ** 2

    return AdjointTraces(
        phi0=phi[:, 0].copy(),
        psi0=psi[:, 0].copy(),
        phiL=phi[:, nx].copy(),
        psiL=psi[:, nx].copy(),
        dphiL=d1_right(phi),
        dpsiL=d1_right(psi),
        d2phi0=d2_left(phi),
        d2psi0=d2_left(psi),
        d2phiL=d2_right(phi),
        d2psiL=d2_right(psi),
    )


def solve_adjoint_backward(p: ValidatedParams, g: SpaceTimeGrid, final: StatePair):
    """Integrate the adjoint pair from its data at t=T back to t=0.

    The boundary rows enforce phi_x(0)=psi_x(0)=0 and the four
    second-derivative combinations at x=0 and x=L at every step.
    Returns the trajectory in forward time order together with the
    boundary traces, extracted with one-sided second-order stencils.
    """
    n = g.nx + 1
    if final.u.size != n:
        raise ShapeMismatch("final state does not match grid")
    st = _adjoint_stepper(p, g)
    w = np.concatenate([final.u, final.v])
    rev = [_split(w, n)]
    for _ in range(g.nt):
        w = st.step(w)
        rev.append(_split(w, n))
    states = rev[::-1]
    traj = Trajectory(states, g.t)
    return traj, _extract_traces(states, g)


class DiscreteControlMap:
    """Control-to-final-state map of the forward scheme and its exact
    algebraic transpose under the trapezoid space/time pairings.

    forward() reproduces solve_linear_forward from zero data bit for bit;
    transpose() satisfies <forward(q), z>_l2 == <q, transpose(z)>_t to
    rounding, which makes any Gramian assembled from the pair exactly
    symmetric.
    """

    def __init__(self, p: ValidatedParams, g: SpaceTimeGrid, cfg: ControlConfig | None = None):
        self.p, self.g, self.cfg = p, g, cfg
        self._st = _forward_stepper(p, g)
        self._wx = g.trapz_weights()
        self._wt = g.time_weights()
        self._mask = np.ones(6, dtype=bool) if cfg is None else cfg.mask()

    def forward(self, q: np.ndarray) -> StatePair:
        """Final state at t=T driven by the (masked) boundary inputs, zero init."""
        n = self.g.nx + 1
        if q.shape != (6, self.g.nt + 1):
            raise ShapeMismatch("control array must have shape (6, nt+1)")
        qm = np.where(self._mask[:, None], q, 0.0)
        w = np.zeros(2 * n)
        for m in range(self.g.nt):
            w = self._st.step(w, bc_next=qm[:, m + 1])
        return _split(w, n)

    def transpose(self, z: StatePair) -> np.ndarray:
        """Exact transpose applied to a state, returned as six time series."""
        out = np.zeros((6, self.g.nt + 1))
        s = np.concatenate([z.u * self._wx, z.v * self._wx])
        for m in range(self.g.nt, 0, -1):
            vals, s = self._st.step_transpose(s)
            out[:, m] = vals
        out /= self._wt[None, :]
        out[~self._mask] = 0.0
        return out


def build_discrete_adjoint(p: ValidatedParams, g: SpaceTimeGrid, cfg: ControlConfig | None = None):
    """Handle holding the forward control map and its exact transpose."""
    return DiscreteControlMap(p, g, cfg)


def hidden_regularity_estimate(
    p: ValidatedParams,
    g: SpaceTimeGrid,
    samples: int,
    seed: int = 0,
) -> float:
    """Empirical sharp-trace constant of the adjoint flow.

    Draws random final data normalized in the weighted norm, solves the
    adjoint system, and records the largest H^((1-k)/3)(0,T) norm over
    the value traces (k=0) and the x=L derivative traces (k=1).  The
    running maximum is nondecreasing in the sample count for a fixed seed.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = g.nx + 1
    best = 0.0
    for _ in range(samples):
        s = StatePair(rng.standard_normal(n), rng.standard_normal(n))
        nrm = x_norm(s, p, g)
        if nrm == 0.0:
            continue
        s = s * (1.0 / nrm)
        _, tr = solve_adjoint_backward(p, g, s)
        for series in (tr.phi0, tr.psi0, tr.phiL, tr.psiL):
            best = max(best, sobolev_norm(TimeSeries(series, g.T), 1.0 / 3.0))
        for series in (tr.dphiL, tr.dpsiL):
            best = max(best, sobolev_norm(TimeSeries(series, g.T), 0.0))
    return best


def trajectory_to_csv(traj: Trajectory, g: SpaceTimeGrid, path, stride: int = 1):
    """Write (t, x, u, v) rows for every stride-th stored time level."""
    x = g.x
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "x", "u", "v"])
        for k in range(0, len(traj.states), stride):
            s = traj.states[k]
            t = traj.times[k]
            for j in range(x.size):
                wr.writerow([repr(float(t)), repr(float(x[j])), repr(float(s.u[j])), repr(float(s.v[j]))])


def trajectory_summary(traj: Trajectory, p: ValidatedParams, g: SpaceTimeGrid) -> dict:
    """Small JSON-ready digest: weighted norm history and extrema."""
    norms = [x_norm(s, p, g) for s in traj.states]
    return {
        "t_first": float(traj.times[0]),
        "t_last": float(traj.times[-1]),
        "steps": len(traj.states) - 1,
        "x_norm_initial": norms[0],
        "x_norm_final": norms[-1],
        "x_norm_max": max(norms),
        "u_absmax": float(max(np.max(np.abs(s.u)) for s in traj.states)),
        "v_absmax": float(max(np.max(np.abs(s.v)) for s in traj.states)),
    }
