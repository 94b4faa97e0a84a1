"""Spectrum of the cluster-density kernel and the critical radius of the ridge estimator.

For the cluster density with band half-width eps, the eigenvalues are
gamma = 1 / x^2 where x > 0 solves

    tan(eps x / sqrt(b)) * tan((1 - eps) x / sqrt(a)) = (b / a)^(3/2).

The left side has period P = pi sqrt(b) / eps in x (through the first
factor) up to the near-integer ratio between the two tangent periods.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.optimize import brentq

from plap.density import DensityModel, PiecewiseConstant1D, Uniform

__all__ = [
    "Spectrum",
    "RateReport",
    "BracketError",
    "kernel_k",
    "kernel_gram",
    "equation_residual",
    "period_ratio",
    "eigenvalues",
    "eigen_bound",
    "decay_bounds",
    "critical_radius",
    "rate_bounds",
    "export_spectrum",
    "export_rates",
]


class BracketError(RuntimeError):
    pass


# -- the kernel -------------------------------------------------------------------

def _inverse_square_mass(density: DensityModel):
    """Return M with M(x) = int_{-1}^x mu(t)^-2 dt, vectorized."""
    if density.dim != 1:
        raise ValueError("kernel needs a one-dimensional density")
    if isinstance(density, (PiecewiseConstant1D, Uniform)):
        if isinstance(density, Uniform):
            bp = np.array([density.low[0], density.high[0]])
            vals = np.array([1.0 / density.volume])
        else:
            bp = np.asarray(density.breakpoints)
            vals = np.asarray(density.values)
        if bp[0] > -1 or bp[-1] < 1:
            raise ValueError("density must cover [-1, 1]")
        inside = (bp[1:] > -1) & (bp[:-1] < 1)
        if np.any(vals[inside] <= 0):
            raise ValueError("density vanishes on part of [-1, 1]")
        slopes = np.where(vals > 0, vals, np.inf) ** -2.0
        knots = np.concatenate([[0.0], np.cumsum(slopes * np.diff(bp))])
        base = float(np.interp(-1.0, bp, knots))
        return lambda x: np.interp(x, bp, knots) - base

    def mass(x):
        x = np.asarray(x, dtype=float)
        out = [integrate.quad(lambda t: density.pdf(t) ** -2.0, -1.0, float(v),
                              epsabs=1e-12, limit=200)[0] for v in x.ravel()]
        return np.array(out).reshape(x.shape)
    return mass


def _check_interval(*arrays):
    for a in arrays:
        if np.any(np.abs(np.asarray(a, dtype=float)) > 1 + 1e-12):
            raise ValueError("kernel arguments must lie in [-1, 1]")


def kernel_k(density: DensityModel, x, y):
    """K(x, y) = M(1) / 4 - |M(y) - M(x)| / 2 with M(x) = int_{-1}^x mu^-2."""
    _check_interval(x, y)
    M = _inverse_square_mass(density)
    total = float(M(np.array(1.0)))
    out = 0.25 * total - 0.5 * np.abs(M(np.asarray(y, float)) - M(np.asarray(x, float)))
    return float(out) if np.ndim(out) == 0 else out


def kernel_gram(density: DensityModel, xs, ys=None) -> np.ndarray:
    xs = np.asarray(xs, dtype=float).ravel()
    ys = xs if ys is None else np.asarray(ys, dtype=float).ravel()
    _check_interval(xs, ys)
    M = _inverse_square_mass(density)
    total = float(M(np.array(1.0)))
    mx, my = M(xs), M(ys)
    return 0.25 * total - 0.5 * np.abs(mx[:, None] - my[None, :])


# -- eigenvalues ---------------------------------------------------------------------

def _coefficients(epsilon: float):
    if not 0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon!r}")
    b = math.sqrt(epsilon)
    a = (0.5 - epsilon * b) / (1 - epsilon)
    return epsilon / math.sqrt(b), (1 - epsilon) / math.sqrt(a), (b / a) ** 1.5


def equation_residual(epsilon: float, x):
    c1, c2, rhs = _coefficients(epsilon)
    x = np.asarray(x, dtype=float)
    return np.tan(c1 * x) * np.tan(c2 * x) - rhs


def period_ratio(epsilon: float) -> float:
    """Ratio of the period of the first tangent factor to that of the second."""
    c1, c2, _ = _coefficients(epsilon)
    return c2 / c1


@lru_cache(maxsize=256)
def _k0(epsilon: float) -> int:
    ratio = period_ratio(epsilon)
    k0 = int(round(ratio))
    if abs(ratio - k0) > 1e-3:
        warnings.warn(f"period ratio {ratio:.6f} is not an integer; using k0={k0}", stacklevel=2)
    return k0


def _roots(epsilon: float, xmax: float) -> np.ndarray:
    """All roots in (0, xmax], bracketed between consecutive tangent zeros and poles."""
    c1, c2, rhs = _coefficients(epsilon)
    half = np.pi / 2
    marks = np.concatenate([np.arange(0, xmax * c1 / half + 1) * half / c1,
                            np.arange(0, xmax * c2 / half + 1) * half / c2])
    marks = np.unique(marks[marks <= xmax])

    def g(x):
        return math.tan(c1 * x) * math.tan(c2 * x) - rhs

    out = []
    for lo, hi in zip(marks[:-1], marks[1:]):
        w = hi - lo
        # keep clear of the singular endpoints
        left = max(lo + 1e-12 * max(w, lo), np.nextafter(lo, np.inf))
        right = min(hi - 1e-12 * max(w, hi), np.nextafter(hi, -np.inf))
        if right <= left:
            continue
        gl, gr = g(left), g(right)
        if gl * gr < 0:
            try:
                out.append(brentq(g, left, right, xtol=1e-15, rtol=1e-15, maxiter=500))
            except (RuntimeError, ValueError) as exc:
                raise BracketError(f"root bracketing failed on [{left!r}, {right!r}]") from exc
    return np.array(out)


@dataclass(frozen=True)
class Spectrum:
    """Roots and eigenvalues grouped by period window.

    ``gamma[(k, j)]`` is 1/x^2 for the k-th root (ascending) among those in
    [j P, (j + 1) P).
    """

    epsilon: float
    k0: int
    period: float
    period_ratio: float
    roots: np.ndarray
    gamma: dict = field(repr=False)

    @property
    def x0(self) -> float:
        return float(self.roots[0])

    def values(self) -> np.ndarray:
        return 1.0 / self.roots**2

    def residuals(self) -> np.ndarray:
        return np.abs(equation_residual(self.epsilon, self.roots))

    def rows(self):
        """(k, j, gamma, decay bound) sorted by j then k."""
        out = []
        for (k, j), g in sorted(self.gamma.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            bound = eigen_bound(self.epsilon, k, j) if k <= 2 * self.k0 - 1 else float("nan")
            out.append((k, j, g, bound))
        return out


def eigenvalues(epsilon: float, j_max: int) -> Spectrum:
    """Enumerate every root in the windows j = 0..j_max."""
    if j_max < 0:
        raise ValueError("j_max must be nonnegative")
    c1, _, _ = _coefficients(epsilon)
    period = np.pi / c1
    roots = _roots(epsilon, (j_max + 1) * period)
    j = np.floor(roots / period).astype(int)
    gamma = {}
    for jj in range(j_max + 1):
        for k, x in enumerate(roots[j == jj]):
            gamma[(k, jj)] = float(1.0 / x**2)
    return Spectrum(float(epsilon), _k0(epsilon), float(period), period_ratio(epsilon), roots, gamma)


def eigen_bound(epsilon: float, k: int, j: int) -> float:
    """1.26 at k = j = 0, else 1 / ((k / (2 sqrt 2) + j eps^(-3/4))^2 pi^2)."""
    k0 = _k0(epsilon)
    if not 0 <= k <= 2 * k0 - 1 or j < 0:
        raise ValueError(f"index (k={k}, j={j}) out of range for k0={k0}")
    if k == 0 and j == 0:
        return 1.26
    return 1.0 / ((k / (2 * math.sqrt(2)) + j * epsilon**-0.75) ** 2 * math.pi**2)


def decay_bounds(epsilon: float, cutoff: float = 1e-14) -> np.ndarray:
    """All bound values for k in [0, 2 k0 - 1], j >= 0, dropping those below ``cutoff``."""
    k0 = _k0(epsilon)
    k = np.arange(2 * k0)
    head = k / (2 * math.sqrt(2))
    step = epsilon**-0.75
    # the smallest-k entry of window j is the largest; stop once it falls below the cutoff
    j_last = int(math.ceil(1.0 / (math.pi * math.sqrt(cutoff) * step))) + 1
    j = np.arange(j_last + 1)
    with np.errstate(divide="ignore"):
        vals = 1.0 / ((head[None, :] + j[:, None] * step) ** 2 * math.pi**2)
    vals[0, 0] = 1.26
    vals = vals.ravel()
    return vals[vals >= cutoff]


# -- critical radius ------------------------------------------------------------------------

def critical_radius(gammas, n: int, sigma: float, R: float, lo: float = 1e-8, hi: float = 10.0,
                    tol: float = 1e-10) -> float:
    """Smallest delta in [lo, hi] with sqrt(2/n sum min(gamma, delta^2)) <= (R / sigma) delta^2.

    ``gammas`` is a :class:`Spectrum` or any sequence of nonnegative values.
    """
    if n < 1 or sigma <= 0 or R <= 0:
        raise ValueError("need n >= 1, sigma > 0 and R > 0")
    g = gammas.values() if isinstance(gammas, Spectrum) else np.asarray(gammas, dtype=float).ravel()
    g = np.sort(g)
    csum = np.concatenate([[0.0], np.cumsum(g)])

    def holds(delta):
        d2 = delta * delta
        m = np.searchsorted(g, d2)
        total = csum[m] + d2 * (len(g) - m)
        return math.sqrt(2.0 / n * total) <= (R / sigma) * d2

    if holds(lo):
        return lo
    if not holds(hi):
        raise BracketError(f"no critical radius in [{lo}, {hi}]")
    a, b = lo, hi
    while b - a > tol:
        mid = 0.5 * (a + b)
        if holds(mid):
            b = mid
        else:
            a = mid
    return b


@dataclass(frozen=True)
class RateReport:
    n: int
    sigma: float
    epsilon: float
    delta_n: float
    l2_rate: float
    linf_rate: float


def rate_bounds(n: int, sigma: float, epsilon: float, R: float = 2.0) -> RateReport:
    if n < 1 or sigma <= 0 or epsilon <= 0:
        raise ValueError("arguments must be positive")
    delta = float("nan")
    if epsilon < 0.5:
        delta = critical_radius(decay_bounds(epsilon), n, sigma, R)
    return RateReport(int(n), float(sigma), float(epsilon), delta,
                      (sigma**2 / n) ** (2 / 3), (sigma**2 / (epsilon * n)) ** (2 / 3))


# -- export ----------------------------------------------------------------------------------

def export_spectrum(spectrum: Spectrum, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(["k", "j", "gamma", "bound"])
        for k, j, g, bound in spectrum.rows():
            wr.writerow([k, j, repr(g), repr(bound)])


def export_rates(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(["n", "epsilon", "delta_n", "l2_rate", "linf_rate"])
        for r in reports:
            wr.writerow([r.n, repr(r.epsilon), repr(r.delta_n), repr(r.l2_rate), repr(r.linf_rate)])
