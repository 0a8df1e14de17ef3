"""Critical spatial lengths: enumeration, membership tests and verification.

Two generator families produce lengths at which the two-boundary control
placements lose observability:

  F1:  2*pi*k*sqrt((1-a^2 b)/r),                     k >= 1
  F2:  pi*sqrt((1-a^2 b)*alpha(k,l,m,n,s)/(3 r)),    all indices >= 1

with alpha the 15-term quadratic form below.  Both trace back to a
degenerate steady eigenfunction of the adjoint boundary system whose
characteristic polynomial P must share its roots with a shifted
exponential; root_sharing_oracle checks that condition directly and is
the ground-truth test.
"""

import csv
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import ValidatedParams

__all__ = [
    "Family",
    "GeneratorTuple",
    "CriticalLength",
    "CriticalSet",
    "RootConditioning",
    "alpha_quadratic",
    "enumerate_critical_lengths",
    "is_critical",
    "verify_tuple",
    "root_sharing_oracle",
    "ode_kernel_scan",
    "critical_set_to_csv",
]


class RootConditioning(RuntimeError):
    """Companion-matrix root solve left a residual above threshold."""


class Family(Enum):
    F1 = "F1"
    F2 = "F2"


@dataclass(frozen=True)
class GeneratorTuple:
    family: Family
    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        n_expected = 1 if self.family is Family.F1 else 5
        if len(idx) != n_expected:
            raise ValueError(f"{self.family.value} takes {n_expected} indices, got {len(idx)}")
        if any(i < 1 for i in idx):
            raise ValueError("all indices must be >= 1")
        object.__setattr__(self, "indices", idx)


@dataclass(frozen=True)
class CriticalLength:
    value: float
    gen: GeneratorTuple
    xi0: float | None = None
    p: complex | None = None
    residuals: dict | None = None


@dataclass(frozen=True)
class CriticalSet:
    lengths: tuple

    def values(self):
        return np.array([c.value for c in self.lengths])


def alpha_quadratic(k, l, m, n, s):
    """The 15-term integer quadratic form attached to the F2 family.

    alpha = 5k^2 + 8l^2 + 9m^2 + 8n^2 + 5s^2 + 8kl + 6km + 4kn + 2ks
            + 12ml + 8ln + 3ls + 12mn + 6ms + 8ns
    """
    for v in (k, l, m, n, s):
        if v < 1 or int(v) != v:
            raise ValueError("indices must be positive integers")
    k, l, m, n, s = int(k), int(l), int(m), int(n), int(s)
    return (
        5 * k * k + 8 * l * l + 9 * m * m + 8 * n * n + 5 * s * s
        + 8 * k * l + 6 * k * m + 4 * k * n + 2 * k * s
        + 12 * m * l + 8 * l * n + 3 * l * s + 12 * m * n + 6 * m * s + 8 * n * s
    )


def _f1_value(p: ValidatedParams, k: int) -> float:
    return 2.0 * np.pi * k * np.sqrt(p.one_minus_a2b / p.r)


def _f2_value(p: ValidatedParams, alpha) -> float:
    return np.pi * np.sqrt(p.one_minus_a2b * alpha / (3.0 * p.r))


def _ladder_offsets(indices):
    # cumulative integer offsets of the six roots: 0, k, k+l, ...
    k, l, m, n, s = indices
    return np.array([0, k, k + l, k + l + m, k + l + m + n, k + l + m + n + s])


def _xi_ladder(indices, L):
    """Roots xi_j = xi0 + 2*pi*c_j/L with xi0 fixed by a zero root sum."""
    c = _ladder_offsets(indices)
    xi0 = -np.pi / (3.0 * L) * (5 * indices[0] + 4 * indices[1] + 3 * indices[2]
                                + 2 * indices[3] + indices[4])
    return xi0 + 2.0 * np.pi / L * c


def enumerate_critical_lengths(p: ValidatedParams, Lmax: float) -> CriticalSet:
    """All critical lengths up to Lmax, sorted and deduplicated.

    F2 enumeration is bounded through alpha <= 3 r Lmax^2 / ((1-a^2b) pi^2);
    the form increases strictly in every index, so nested loops with early
    break are exhaustive.  Generators mapping to equal values within 1e-9
    relative are merged onto one record.
    """
    if Lmax <= 0:
        raise ValueError("Lmax must be positive")
    found = []
    k = 1
    while True:
        val = _f1_value(p, k)
        if val > Lmax:
            break
        found.append(CriticalLength(val, GeneratorTuple(Family.F1, (k,))))
        k += 1
    alpha_max = 3.0 * p.r * Lmax ** 2 / (p.one_minus_a2b * np.pi ** 2)

    def rec(prefix):
        depth = len(prefix)
        if depth == 5:
            alpha = alpha_quadratic(*prefix)
            if alpha <= alpha_max:
                L = _f2_value(p, alpha)
                gen = GeneratorTuple(Family.F2, tuple(prefix))
                xi = _xi_ladder(prefix, L)
                pv = _p_from_roots(p, xi)
                found.append(CriticalLength(L, gen, xi0=float(xi[0]), p=pv))
            return
        i = 1
        while True:
            trial = prefix + [i] + [1] * (4 - depth)
            if alpha_quadratic(*trial) > alpha_max:
                break
            rec(prefix + [i])
            i += 1

    rec([])
    found.sort(key=lambda c: c.value)
    merged = []
    for c in found:
        if merged and abs(c.value - merged[-1].value) <= 1e-9 * max(abs(merged[-1].value), 1e-300):
            continue
        merged.append(c)
    return CriticalSet(tuple(merged))


def is_critical(p: ValidatedParams, L: float, rel_tol: float):
    """Generator of the nearest critical length within rel_tol, else None."""
    if L <= 0:
        raise ValueError("L must be positive")
    cs = enumerate_critical_lengths(p, L * (1.0 + 2.0 * rel_tol) + 1e-12)
    best = None
    for c in cs.lengths:
        d = abs(c.value - L)
        if best is None or d < best[0]:
            best = (d, c)
    if best is not None and best[0] <= rel_tol * best[1].value:
        return best[1].gen
    return None


def _p_from_roots(p: ValidatedParams, xi):
    """Spectral parameter from the root product, principal square root."""
    prod = complex(np.prod(xi.astype(complex)))
    return complex(np.sqrt(p.one_minus_a2b * prod / p.c))


def _poly_coeffs(p: ValidatedParams, pval):
    """Descending coefficients of the degree-6 boundary-system polynomial
    (1-a^2b) xi^6 - r xi^4 - (c+1) p xi^3 + r p xi + c p^2."""
    return np.array([
        p.one_minus_a2b,
        0.0,
        -p.r,
        -(p.c + 1.0) * pval,
        0.0,
        p.r * pval,
        p.c * pval ** 2,
    ], dtype=complex)


def verify_tuple(p: ValidatedParams, gen: GeneratorTuple) -> CriticalLength:
    """Rebuild an F2 root ladder and report its symmetric-function residuals.

    The ladder is anchored by the two constraints the derivation enforces
    exactly: zero root sum (fixes xi0) and the second symmetric function
    equal to -r/(1-a^2b) (fixes L); p then comes from the root product.
    The roots are (pi/(3L)) times integers, so the symmetric functions are
    evaluated in exact integer arithmetic: the e1 and e2 residuals come
    out identically zero, e6 vanishes by the definition of p, and e3, e4,
    e5 measure how far the tuple is from a genuine degenerate eigensystem.
    Residuals are reported, never judged.

    The printed 15-term form used by the enumeration disagrees with the
    ladder-consistent value of the l*s cross coefficient (3 vs 4); the
    record carries both lengths in its diagnostics.
    """
    if gen.family is not Family.F2:
        raise ValueError("verify_tuple takes an F2 generator")
    idx = gen.indices
    c = _ladder_offsets(idx)
    S = int(5 * idx[0] + 4 * idx[1] + 3 * idx[2] + 2 * idx[3] + idx[4])
    e2_offsets = sum(int(c[i]) * int(c[j]) for i in range(6) for j in range(i + 1, 6))
    # second symmetric function of the ladder = (2 pi / L)^2 (e2c - 5 S^2/12);
    # matching -r/(1-a^2b) pins L^2 = pi^2 (1-a^2b) (5 S^2 - 12 e2c) / (3 r)
    alpha_ladder = 5 * S * S - 12 * e2_offsets
    L = _f2_value(p, alpha_ladder)
    xi = _xi_ladder(idx, L)
    pval = _p_from_roots(p, xi)

    # integer root multipliers: xi_j = (pi/(3L)) * m_j with m_j = 6 c_j - S
    m = [6 * int(cj) - S for cj in c]
    esym = [1, 0, 0, 0, 0, 0, 0]  # elementary symmetric functions, exact
    for mj in m:
        for j in range(6, 0, -1):
            esym[j] = esym[j] + mj * esym[j - 1]
    scale = np.pi / (3.0 * L)
    om = p.one_minus_a2b
    e = [esym[j] * scale ** j for j in range(1, 7)]
    # e2 residual in exact integers: e2(m) + 3*alpha_ladder == 0 identically
    e2_int = esym[2] + 3 * alpha_ladder
    e6_val = e[5]
    pval = complex(np.sqrt(complex(om * e6_val / p.c)))  # same as from the root product
    residuals = {
        "e1": complex(float(esym[1]) * scale),
        "e2": complex(float(e2_int) * p.r / (om * 3.0 * alpha_ladder)),
        "e3": complex(e[2] - (p.c + 1.0) * pval / om),
        "e4": complex(e[3]),
        "e5": complex(e[4] + p.r * pval / om),
        "e6": complex(e6_val - p.c * pval ** 2 / om),
        "p_imag": float(pval.imag),
        "p_other_branch": -pval,
        "alpha_printed_form": alpha_quadratic(*idx),
        "alpha_ladder": alpha_ladder,
        "length_printed_form": _f2_value(p, alpha_quadratic(*idx)),
    }
    return CriticalLength(L, gen, xi0=float(xi[0]), p=pval, residuals=residuals)


def root_sharing_oracle(p: ValidatedParams, pval: complex, L: float, tol: float) -> bool:
    """Ground-truth degeneracy test at spectral parameter i*pval.

    Finds the six polynomial roots (companion-matrix eigenvalues) and
    returns True iff they are simple (pairwise gap > tol) and the values
    exp(-i L xi_j) all coincide within tol, i.e. some nonzero (alpha, beta)
    satisfies alpha + beta exp(-i L xi_j) = 0 at every root.  For pval = 0
    the polynomial degenerates to xi^4 ((1-a^2b) xi^2 - r); only the
    reduced root set {0, +-sqrt(r/(1-a^2b))} is tested.
    """
    if L <= 0:
        raise ValueError("L must be positive")
    if abs(pval) == 0.0:
        roots = np.array([0.0, np.sqrt(p.r / p.one_minus_a2b), -np.sqrt(p.r / p.one_minus_a2b)],
                         dtype=complex)
    else:
        coeffs = _poly_coeffs(p, complex(pval))
        roots = np.roots(coeffs)
        scale = np.max(np.abs(coeffs)) * np.maximum(1.0, np.abs(roots)) ** 6
        resid = np.abs(np.polyval(coeffs, roots)) / scale
        if np.any(resid > 1e-7):
            raise RootConditioning(f"root residual {np.max(resid):.2e} above threshold")
    for i in range(len(roots)):
        for j in range(i + 1, len(roots)):
            if abs(roots[i] - roots[j]) <= tol:
                return False
    phases = np.exp(-1j * L * roots)
    return bool(np.max(np.abs(phases - phases[0])) <= tol)


def _stencil_weights(offsets, order):
    """Finite-difference weights for the derivative order on integer offsets
    (to be scaled by dx^-order); solves the small Vandermonde system."""
    import math

    offs = np.asarray(offsets, dtype=float)
    m = offs.size
    V = np.vander(offs, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


def _kernel_matrix(p: ValidatedParams, L: float, lam: complex, nx: int, variant: str):
    """Rectangular discretization of the steady two-point boundary system.

    variant "cascade" pins value, slope and curvature of both components at
    x=0 (expected trivial kernel for every L); variant "coupled" applies
    the ten coupled end conditions whose solvability defines criticality.
    Rows are unit-normalized so the smallest singular value is comparable
    across lam.
    """
    n = nx + 1
    dx = L / nx
    rows = []

    def row():
        return np.zeros(2 * n, dtype=complex)

    def add_deriv(r, base, j, order, scale):
        width = order + 3  # two orders above for second-order accuracy
        lo = int(np.clip(j - width // 2, 0, n - width))
        offs = np.arange(lo, lo + width) - j
        w = _stencil_weights(offs, order) / dx ** order
        r[base + j + offs] += scale * w

    # interior equations at every node
    for j in range(n):
        r = row()
        r[j] += lam
        add_deriv(r, 0, j, 3, 1.0)
        add_deriv(r, n, j, 3, p.ab_over_c)
        rows.append(r)
        r = row()
        r[n + j] += lam
        add_deriv(r, n, j, 1, p.r / p.c)
        add_deriv(r, 0, j, 3, p.a)
        add_deriv(r, n, j, 3, 1.0 / p.c)
        rows.append(r)

    def bc(base_phi, j, spec_list):
        r = row()
        for base, order, scale in spec_list:
            if order == 0:
                r[base + j] += scale
            else:
                add_deriv(r, base, j, order, scale)
        rows.append(r)

    if variant == "cascade":
        for order in (0, 1, 2):
            bc(0, 0, [(0, order, 1.0)])
            bc(0, 0, [(n, order, 1.0)])
    elif variant == "coupled":
        for j in (0, nx):
            bc(0, j, [(0, 0, p.a), (n, 0, 1.0 / p.c)])
            bc(0, j, [(0, 1, 1.0)])
            bc(0, j, [(n, 1, 1.0)])
            bc(0, j, [(0, 2, 1.0), (n, 2, p.ab_over_c)])
            bc(0, j, [(0, 2, p.a), (n, 2, 1.0 / p.c), (n, 0, p.r / p.c)])
    else:
        raise ValueError(f"unknown variant {variant!r}")

    A = np.array(rows)
    norms = np.linalg.norm(A, axis=1)
    norms[norms == 0] = 1.0
    return A / norms[:, None]


def ode_kernel_scan(p: ValidatedParams, L: float, lambda_grid, nx: int = 96,
                    variant: str = "coupled"):
    """Smallest singular value of the steady boundary system along a grid of
    spectral parameters; dips toward zero flag a nontrivial kernel."""
    if nx < 64:
        raise ValueError("nx must be >= 64 for the kernel scan")
    out = []
    for lam in lambda_grid:
        A = _kernel_matrix(p, L, complex(lam), nx, variant)
        smin = float(np.linalg.svd(A, compute_uv=False)[-1])
        out.append((complex(lam), smin))
    return out


def critical_set_to_csv(cs: CriticalSet, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["value", "family", "k", "l", "m", "n", "s"])
        for c in cs.lengths:
            idx = list(c.gen.indices) + [""] * (5 - len(c.gen.indices))
            wr.writerow([repr(float(c.value)), c.gen.family.value] + idx)
