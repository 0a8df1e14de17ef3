"""Fractional powers of -d^2/dt^2 and Sobolev norms on boundary time series.

Operators act on uniformly sampled series on [0, T] through an even
(mirror) extension to a 2*nt periodic grid followed by a Fourier
multiplier.  The mirror extension avoids the endpoint jumps a periodic
wrap would create; on the extended grid the cosine modes
cos(pi*k*t/T) are exact eigenfunctions with eigenvalue (pi*k/T)^(2*gamma).
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["TimeSeries", "frac_neg_laplacian", "sobolev_norm", "l2t_inner", "l2t_norm"]


@dataclass(frozen=True)
class TimeSeries:
    """Real series sampled at t_n = n*T/nt, n = 0..nt."""

    values: np.ndarray
    T: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("values must be 1-d with at least two samples")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def nt(self):
        return self.values.size - 1

    @property
    def dt(self):
        return self.T / self.nt


def _mirror_extend(v):
    # [v0..vn] -> [v0..vn, v(n-1)..v1], length 2n, even around both ends
    return np.concatenate([v, v[-2:0:-1]])


def _omega(nt, T):
    # rfft mode k of the 2*nt periodic extension has frequency pi*k/T
    return np.pi * np.arange(nt + 1) / T


def frac_neg_laplacian(ts: TimeSeries, gamma: float) -> TimeSeries:
    """Apply the multiplier |omega|^(2*gamma) on the mirror extension.

    gamma = 0 returns the input unchanged.  The constant (zero-frequency)
    component is annihilated for gamma > 0, as the multiplier dictates.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    if gamma == 0.0:
        return ts
    v = ts.values
    ext = _mirror_extend(v)
    coef = np.fft.rfft(ext)
    coef *= _omega(ts.nt, ts.T) ** (2.0 * gamma)
    out = np.fft.irfft(coef, n=2 * ts.nt)
    return TimeSeries(out[: ts.nt + 1].copy(), ts.T)


def sobolev_norm(ts: TimeSeries, s: float) -> float:
    """Norm ||(1 + omega^2)^(s/2) g^||, Parseval-scaled on the extension.

    At s = 0 this reproduces the trapezoidal L^2(0, T) norm exactly.
    """
    if not -1.0 <= s <= 1.0:
        raise ValueError(f"s must lie in [-1, 1], got {s}")
    nt = ts.nt
    ext = _mirror_extend(ts.values)
    coef = np.fft.rfft(ext)
    mult = (1.0 + _omega(nt, ts.T) ** 2) ** s
    # real-input Parseval: interior rfft bins count twice, DC and Nyquist once
    w = np.full(nt + 1, 2.0)
    w[0] = 1.0
    if 2 * nt % 2 == 0:
        w[-1] = 1.0
    total = np.dot(w * mult, np.abs(coef) ** 2)
    return float(np.sqrt(ts.dt / (2.0 * 2 * nt) * total))


def l2t_inner(f: TimeSeries, h: TimeSeries) -> float:
    """Trapezoidal inner product on [0, T]."""
    if f.nt != h.nt or f.T != h.T:
        raise ValueError("series must share sampling")
    w = np.full(f.nt + 1, f.dt)
    w[0] = w[-1] = 0.5 * f.dt
    return float(np.dot(w, f.values * h.values))


def l2t_norm(f: TimeSeries) -> float:
    return np.sqrt(max(l2t_inner(f, f), 0.0))
