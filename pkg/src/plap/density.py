"""Probability densities for vertex generation and the weighted continuum functional.

Three families are supported: a uniform box, a piecewise-constant density on
an interval (used for the low-density "cluster" construction), and an
isotropic Gaussian mixture on all of R^d.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from plap.rng import make_rng

__all__ = [
    "Uniform",
    "PiecewiseConstant1D",
    "GaussianMixture",
    "TargetFunction",
    "ClusterInstance",
    "eval_density",
    "sample",
    "grad_log_density",
    "make_cluster_instance",
    "density_from_dict",
    "density_to_dict",
    "load_density",
]


def _as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce x to an (m, dim) array; report whether a single point was given."""
    arr = np.asarray(x, dtype=float)
    if dim == 1 and arr.ndim <= 1:
        single = arr.ndim == 0
        return arr.reshape(-1, 1), single
    if arr.ndim == 1:
        if arr.shape[0] != dim:
            raise ValueError(f"point has dimension {arr.shape[0]}, model has {dim}")
        return arr.reshape(1, dim), True
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr, False


@dataclass(frozen=True)
class Uniform:
    low: tuple[float, ...]
    high: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.low))
        hi = tuple(float(v) for v in np.atleast_1d(self.high))
        if len(lo) != len(hi) or any(h <= l for l, h in zip(lo, hi)):
            raise ValueError("uniform box needs low < high in every coordinate")
        object.__setattr__(self, "low", lo)
        object.__setattr__(self, "high", hi)

    @classmethod
    def unit(cls, d: int = 1) -> "Uniform":
        return cls((0.0,) * d, (1.0,) * d)

    @property
    def dim(self) -> int:
        return len(self.low)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.high, self.low)))

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.low), np.array(self.high)

    @property
    def max_density(self) -> float:
        return 1.0 / self.volume

    def pdf(self, x):
        pts, single = _as_points(x, self.dim)
        lo, hi = self.bounds
        inside = np.all((pts >= lo) & (pts <= hi), axis=1)
        out = np.where(inside, 1.0 / self.volume, 0.0)
        return float(out[0]) if single else out

    def sample(self, n: int, rng) -> np.ndarray:
        lo, hi = self.bounds
        return lo + (hi - lo) * rng.random((n, self.dim))

    def grad_log(self, x):
        pts, single = _as_points(x, self.dim)
        if np.any(self.pdf(pts) <= 0):
            raise ValueError("grad log density undefined where the density vanishes")
        g = np.zeros_like(pts)
        return g[0] if single else g


@dataclass(frozen=True)
class PiecewiseConstant1D:
    """Density equal to ``values[k]`` on ``[breakpoints[k], breakpoints[k+1])``.

    The support is ``[breakpoints[0], breakpoints[-1]]``; the right endpoint
    belongs to the last cell.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        bp = tuple(float(v) for v in self.breakpoints)
        vals = tuple(float(v) for v in self.values)
        if len(bp) != len(vals) + 1 or len(vals) < 1:
            raise ValueError("need len(breakpoints) == len(values) + 1")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly ascending")
        if any(v < 0 for v in vals):
            raise ValueError("density values must be nonnegative")
        mass = float(np.dot(np.diff(bp), vals))
        if abs(mass - 1.0) > 1e-9:
            raise ValueError(f"density integrates to {mass!r}, not 1")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    dim = 1

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([self.breakpoints[0]]), np.array([self.breakpoints[-1]])

    @property
    def max_density(self) -> float:
        return max(self.values)

    def cell_masses(self) -> np.ndarray:
        return np.diff(self.breakpoints) * np.array(self.values)

    def _cell(self, x: np.ndarray) -> np.ndarray:
        bp = np.asarray(self.breakpoints)
        k = np.searchsorted(bp, x, side="right") - 1
        return np.clip(k, 0, len(self.values) - 1)

    def pdf(self, x):
        pts, single = _as_points(x, 1)
        t = pts[:, 0]
        vals = np.asarray(self.values)[self._cell(t)]
        inside = (t >= self.breakpoints[0]) & (t <= self.breakpoints[-1])
        out = np.where(inside, vals, 0.0)
        return float(out[0]) if single else out

    def cdf(self, t):
        t = np.asarray(t, dtype=float)
        bp = np.asarray(self.breakpoints)
        cum = np.concatenate([[0.0], np.cumsum(self.cell_masses())])
        k = self._cell(np.clip(t, bp[0], bp[-1]))
        tc = np.clip(t, bp[0], bp[-1])
        return cum[k] + (tc - bp[k]) * np.asarray(self.values)[k]

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        bp = np.asarray(self.breakpoints)
        masses = self.cell_masses()
        cum = np.concatenate([[0.0], np.cumsum(masses)])
        k = np.searchsorted(cum, u, side="right") - 1
        k = np.clip(k, 0, len(masses) - 1)
        # zero-mass cells are never selected: searchsorted skips them
        vals = np.asarray(self.values)[k]
        return bp[k] + (u - cum[k]) / np.where(vals > 0, vals, 1.0)

    def sample(self, n: int, rng) -> np.ndarray:
        return self.ppf(rng.random(n)).reshape(n, 1)

    def grad_log(self, x):
        pts, single = _as_points(x, 1)
        t = pts[:, 0]
        if np.any(np.isin(t, self.breakpoints)):
            raise ValueError("grad log density is undefined at a breakpoint")
        if np.any(self.pdf(pts) <= 0):
            raise ValueError("grad log density undefined where the density vanishes")
        g = np.zeros_like(pts)
        return g[0] if single else g


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of isotropic Gaussians ``N(means[k], stddevs[k]^2 I)`` on R^d."""

    means: tuple[tuple[float, ...], ...]
    stddevs: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        if means.ndim == 1:
            means = means.reshape(-1, 1)
        sd = np.asarray(self.stddevs, dtype=float).ravel()
        w = np.asarray(self.weights, dtype=float).ravel()
        if not (len(means) == len(sd) == len(w)) or len(w) == 0:
            raise ValueError("means, stddevs and weights must have equal length")
        if np.any(sd <= 0):
            raise ValueError("stddevs must be positive")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must lie on the simplex")
        object.__setattr__(self, "means", tuple(tuple(float(v) for v in m) for m in means))
        object.__setattr__(self, "stddevs", tuple(float(v) for v in sd))
        object.__setattr__(self, "weights", tuple(float(v) for v in w))

    @property
    def dim(self) -> int:
        return len(self.means[0])

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """A box holding all but a negligible amount of mass (10 sd margin)."""
        m = np.asarray(self.means)
        s = np.max(self.stddevs)
        return m.min(axis=0) - 10 * s, m.max(axis=0) + 10 * s

    @property
    def max_density(self) -> float:
        # evaluating at each mean bounds the sup from below; components rarely overlap enough to matter
        return float(max(self.pdf(np.asarray(self.means))))

    def _component_pdfs(self, pts: np.ndarray) -> np.ndarray:
        m = np.asarray(self.means)
        s = np.asarray(self.stddevs)
        d = self.dim
        sq = ((pts[:, None, :] - m[None, :, :]) ** 2).sum(axis=2)
        norm = (2 * np.pi * s**2) ** (-d / 2)
        return norm * np.exp(-0.5 * sq / s**2)

    def pdf(self, x):
        pts, single = _as_points(x, self.dim)
        out = self._component_pdfs(pts) @ np.asarray(self.weights)
        return float(out[0]) if single else out

    def sample(self, n: int, rng) -> np.ndarray:
        k = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        z = rng.standard_normal((n, self.dim))
        return np.asarray(self.means)[k] + np.asarray(self.stddevs)[k, None] * z

    def grad_log(self, x):
        pts, single = _as_points(x, self.dim)
        comp = self._component_pdfs(pts) * np.asarray(self.weights)
        tot = comp.sum(axis=1)
        if np.any(tot <= 0):
            raise ValueError("grad log density underflowed to a zero-density point")
        m = np.asarray(self.means)
        s2 = np.asarray(self.stddevs) ** 2
        # sum_k r_k * (m_k - x) / s_k^2 with responsibilities r_k
        resp = comp / tot[:, None]
        g = np.einsum("nk,nkd->nd", resp / s2, m[None, :, :] - pts[:, None, :])
        return g[0] if single else g


DensityModel = Uniform | PiecewiseConstant1D | GaussianMixture


@dataclass(frozen=True)
class TargetFunction:
    """Piecewise-linear function through (breakpoints, values), constant outside."""

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]

    def __call__(self, x):
        return np.interp(np.asarray(x, dtype=float), self.breakpoints, self.values)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        bp = np.asarray(self.breakpoints)
        slopes = np.diff(self.values) / np.diff(bp)
        k = np.searchsorted(bp, x, side="right") - 1
        inside = (k >= 0) & (k < len(slopes))
        return np.where(inside, slopes[np.clip(k, 0, len(slopes) - 1)], 0.0)

    @property
    def lipschitz(self) -> float:
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.breakpoints))))


@dataclass(frozen=True)
class ClusterInstance:
    """Low-density band of width 2*epsilon in [-1, 1] carrying the whole transition of f*."""

    density: PiecewiseConstant1D
    target: TargetFunction
    epsilon: float
    a: float
    b: float


def make_cluster_instance(epsilon: float) -> ClusterInstance:
    if not 0.0 < epsilon < 0.5:
        raise ValueError(f"epsilon must lie in (0, 1/2), got {epsilon!r}")
    b = float(np.sqrt(epsilon))
    a = (0.5 - epsilon * b) / (1.0 - epsilon)
    density = PiecewiseConstant1D((-1.0, -epsilon, epsilon, 1.0), (a, b, a))
    target = TargetFunction((-1.0, -epsilon, epsilon, 1.0), (-1.0, -1.0, 1.0, 1.0))
    return ClusterInstance(density=density, target=target, epsilon=float(epsilon), a=a, b=b)


def eval_density(model: DensityModel, x):
    return model.pdf(x)


def sample(model: DensityModel, n: int, seed) -> np.ndarray:
    """Draw ``n`` i.i.d. points as an (n, d) array, deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return model.sample(int(n), make_rng(seed))


def grad_log_density(model: DensityModel, x):
    return model.grad_log(x)


# -- JSON schema -----------------------------------------------------------
#   {"variant": "uniform", "low": [...], "high": [...]}
#   {"variant": "piecewise_constant_1d", "breakpoints": [...], "values": [...]}
#   {"variant": "gaussian_mixture", "means": [[...], ...], "stddevs": [...], "weights": [...]}
#   {"variant": "cluster", "epsilon": 0.1}


def density_to_dict(model: DensityModel) -> dict[str, Any]:
    if isinstance(model, Uniform):
        return {"variant": "uniform", "low": list(model.low), "high": list(model.high)}
    if isinstance(model, PiecewiseConstant1D):
        return {
            "variant": "piecewise_constant_1d",
            "breakpoints": list(model.breakpoints),
            "values": list(model.values),
        }
    if isinstance(model, GaussianMixture):
        return {
            "variant": "gaussian_mixture",
            "means": [list(m) for m in model.means],
            "stddevs": list(model.stddevs),
            "weights": list(model.weights),
        }
    raise TypeError(f"unknown density model {type(model).__name__}")


def density_from_dict(data: dict[str, Any]) -> DensityModel:
    variant = data.get("variant")
    if variant == "uniform":
        return Uniform(tuple(data["low"]), tuple(data["high"]))
    if variant == "piecewise_constant_1d":
        return PiecewiseConstant1D(tuple(data["breakpoints"]), tuple(data["values"]))
    if variant == "gaussian_mixture":
        return GaussianMixture(np.asarray(data["means"], dtype=float),
                               tuple(data["stddevs"]), tuple(data["weights"]))
    if variant == "cluster":
        return make_cluster_instance(float(data["epsilon"])).density
    raise ValueError(f"unknown density variant {variant!r}")


def load_density(path) -> DensityModel:
    with open(path) as fh:
        return density_from_dict(json.load(fh))
