"""Continuum counterparts of the graph energies.

Covers the kernel constant C_p, the weighted Dirichlet integral
int |grad f|^p mu^2, the weighted p-Laplacian residual, the 1-D closed-form
minimizers, the degenerate "spike" families for p <= d, and the isotropic
moment identity behind C_p.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from plap.density import DensityModel, PiecewiseConstant1D, Uniform, _as_points
from plap.graph import EdgeKernel
from plap.rng import make_rng

__all__ = [
    "QuadratureError",
    "ScalarField",
    "QuadratureSpec",
    "QuadResult",
    "linear_field",
    "norm_field",
    "squared_norm_field",
    "sphere_area",
    "ball_volume",
    "isotropic_moment",
    "c_p",
    "i_p",
    "closed_form_1d",
    "el_residual",
    "infinity_laplacian",
    "laplacian",
    "spike_integral",
    "spike_family",
    "tensor_contraction_check",
    "export_field_grid",
]


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalarField:
    """A function R^d -> R, vectorized over an (m, d) array of points.

    ``grad`` and ``hess`` are optional analytic derivatives with the same
    calling convention, returning (m, d) and (m, d, d) arrays. Without them,
    central differences are used with steps proportional to ``scale``.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    dim: int
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    hess: Callable[[np.ndarray], np.ndarray] | None = None
    breakpoints: tuple[float, ...] = ()
    scale: float = 1.0

    def __call__(self, x):
        pts, single = _as_points(x, self.dim)
        out = np.asarray(self.fn(pts), dtype=float)
        return float(out[0]) if single else out

    def without_derivatives(self) -> "ScalarField":
        return ScalarField(self.fn, self.dim, None, None, self.breakpoints, self.scale)

    def gradient(self, x, step: float | None = None):
        pts, single = _as_points(x, self.dim)
        if self.grad is not None and step is None:
            g = np.asarray(self.grad(pts), dtype=float).reshape(len(pts), self.dim)
        else:
            h = 1e-5 * self.scale if step is None else step
            g = np.empty_like(pts)
            for k in range(self.dim):
                e = np.zeros(self.dim)
                e[k] = h
                g[:, k] = (self.fn(pts + e) - self.fn(pts - e)) / (2 * h)
        return g[0] if single else g

    def hessian(self, x, step: float | None = None):
        pts, single = _as_points(x, self.dim)
        if self.hess is not None and step is None:
            H = np.asarray(self.hess(pts), dtype=float).reshape(len(pts), self.dim, self.dim)
        else:
            h = 1e-4 * self.scale if step is None else step
            d = self.dim
            H = np.empty((len(pts), d, d))
            f0 = self.fn(pts)
            eye = np.eye(d) * h
            for i in range(d):
                H[:, i, i] = (self.fn(pts + eye[i]) - 2 * f0 + self.fn(pts - eye[i])) / h**2
                for j in range(i + 1, d):
                    pp = self.fn(pts + eye[i] + eye[j])
                    pm = self.fn(pts + eye[i] - eye[j])
                    mp = self.fn(pts - eye[i] + eye[j])
                    mm = self.fn(pts - eye[i] - eye[j])
                    H[:, i, j] = H[:, j, i] = (pp - pm - mp + mm) / (4 * h * h)
        return H[0] if single else H


def linear_field(c) -> ScalarField:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    d = len(c)
    return ScalarField(lambda x: x @ c, d,
                       grad=lambda x: np.broadcast_to(c, x.shape).copy(),
                       hess=lambda x: np.zeros((len(x), d, d)))


def norm_field(d: int) -> ScalarField:
    """f(x) = ||x||_2, with analytic derivatives away from the origin."""
    def grad(x):
        return x / np.linalg.norm(x, axis=1, keepdims=True)

    def hess(x):
        r = np.linalg.norm(x, axis=1)
        u = x / r[:, None]
        return (np.eye(d)[None] - u[:, :, None] * u[:, None, :]) / r[:, None, None]

    return ScalarField(lambda x: np.linalg.norm(x, axis=1), d, grad, hess)


def squared_norm_field(d: int) -> ScalarField:
    return ScalarField(lambda x: np.sum(x * x, axis=1), d, grad=lambda x: 2 * x,
                       hess=lambda x: np.broadcast_to(2 * np.eye(d), (len(x), d, d)).copy())


# -- constants -------------------------------------------------------------------

def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d, 2 pi^(d/2) / Gamma(d/2)."""
    return float(2 * math.pi ** (d / 2) / math.gamma(d / 2))


def ball_volume(d: int) -> float:
    return sphere_area(d) / d


def isotropic_moment(p: int, d: int) -> float:
    """E[theta_1^p] for theta uniform on the unit sphere in R^d.

    Equal to Gamma(d/2) Gamma((p+1)/2) / (sqrt(pi) Gamma((p+d)/2)) for even p,
    and 0 for odd p. For p = 2 this is 1/d.
    """
    if p % 2:
        return 0.0
    return float(np.exp(gammaln(d / 2) + gammaln((p + 1) / 2) - 0.5 * np.log(np.pi)
                        - gammaln((p + d) / 2)))


def _quad(fn, a, b, abs_tol, points=None, limit=500):
    pts = None
    if points is not None:
        pts = sorted({float(t) for t in points if a < t < b})
        pts = pts or None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        out = integrate.quad(fn, a, b, epsabs=abs_tol, epsrel=1e-10, points=pts, limit=limit,
                             full_output=1)
    if len(out) == 4 and out[1] > max(abs_tol, 1e-8 * abs(out[0])) * 10:
        raise QuadratureError(f"quadrature on [{a}, {b}] did not converge: {out[3]}")
    return float(out[0]), float(out[1])


def c_p(kernel: EdgeKernel, p: int, d: int) -> float:
    """d^(-p/2) |S^(d-1)| int_0^inf r^(p+d-1) phi(r)^p dr."""
    if p < 1 or d < 1:
        raise ValueError("p and d must be positive")
    val, _ = _quad(lambda r: r ** (p + d - 1) * float(kernel(r)) ** p, 0.0, kernel.support, 1e-10)
    return d ** (-p / 2) * sphere_area(d) * val


# -- the weighted Dirichlet integral --------------------------------------------

@dataclass(frozen=True)
class QuadratureSpec:
    """``kind`` is ``adaptive`` (1-D), ``tensor`` (Gauss-Legendre per axis) or
    ``monte_carlo`` (importance sampling from the density)."""

    kind: str = "adaptive"
    abs_tol: float = 1e-8
    points_per_axis: int = 200
    samples: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("adaptive", "tensor", "monte_carlo"):
            raise ValueError(f"unknown quadrature {self.kind!r}")
        if self.abs_tol <= 0 or self.points_per_axis < 2 or self.samples < 2:
            raise ValueError("quadrature tolerances must be positive")

    @classmethod
    def default_for(cls, d: int) -> "QuadratureSpec":
        return cls({1: "adaptive", 2: "tensor"}.get(d, "monte_carlo"))


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float

    def __float__(self):
        return self.value


def _density_breaks(density) -> list[float]:
    if isinstance(density, PiecewiseConstant1D):
        return list(density.breakpoints)
    if isinstance(density, Uniform):
        return [density.low[0], density.high[0]]
    return [float(m[0]) for m in getattr(density, "means", ())]


def _gauss_box(g, lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    axes = [0.5 * (h - l) * x + 0.5 * (h + l) for l, h in zip(lo, hi)]
    wts = [0.5 * (h - l) * w for l, h in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    wgrid = np.prod(np.stack(np.meshgrid(*wts, indexing="ij"), axis=-1).reshape(-1, len(lo)), axis=1)
    return float(np.sum(wgrid * g(grid)))


def i_p(f: ScalarField, density: DensityModel, p: int, quad: QuadratureSpec | None = None
        ) -> QuadResult:
    """int ||grad f||^p mu^2 over the support of mu (without the factor C_p)."""
    d = density.dim
    if f.dim != d:
        raise ValueError("field and density dimensions differ")
    quad = quad or QuadratureSpec.default_for(d)

    def integrand(pts):
        g = f.gradient(pts)
        return np.linalg.norm(g.reshape(len(pts), d), axis=1) ** p * density.pdf(pts) ** 2

    lo, hi = density.bounds
    if quad.kind == "adaptive":
        if d != 1:
            raise ValueError("adaptive quadrature is one-dimensional")
        breaks = _density_breaks(density) + list(f.breakpoints)
        val, err = _quad(lambda t: float(integrand(np.array([[t]]))[0]), float(lo[0]), float(hi[0]),
                         quad.abs_tol, points=breaks)
        return QuadResult(val, err)
    if quad.kind == "tensor":
        n = quad.points_per_axis
        val = _gauss_box(integrand, lo, hi, n)
        coarse = _gauss_box(integrand, lo, hi, max(n // 2, 2))
        return QuadResult(val, abs(val - coarse))
    rng = make_rng(quad.seed)
    pts = density.sample(quad.samples, rng)
    vals = np.linalg.norm(f.gradient(pts).reshape(len(pts), d), axis=1) ** p * density.pdf(pts)
    return QuadResult(float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(len(vals))))


# -- 1-D closed form ----------------------------------------------------------------

def _piecewise_phi(density: PiecewiseConstant1D | Uniform, q: float):
    """Antiderivative of mu^(-q) for a piecewise-constant density: knots and values."""
    if isinstance(density, Uniform):
        bp = np.array([density.low[0], density.high[0]])
        vals = np.array([1.0 / density.volume])
    else:
        bp = np.asarray(density.breakpoints)
        vals = np.asarray(density.values)
    if np.any(vals <= 0):
        raise ValueError("density vanishes on part of its support")
    slopes = vals ** (-q)
    knots = np.concatenate([[0.0], np.cumsum(slopes * np.diff(bp))])
    return bp, knots, slopes


def closed_form_1d(density: DensityModel, labels, p) -> ScalarField:
    """Minimizer of int |f'|^p mu^2 through the labeled points, in one dimension.

    Between consecutive labels the flux mu^2 |f'|^(p-2) f' is constant, so
    f' is proportional to mu^(-2/(p-1)). ``p = inf`` gives linear
    interpolation. Outside the labeled hull the field is constant.
    """
    if density.dim != 1:
        raise ValueError("closed form needs a one-dimensional density")
    pairs = sorted((float(x), float(y)) for x, y in labels)
    if len(pairs) < 2:
        raise ValueError("need at least two labels")
    xs = np.array([a for a, _ in pairs])
    ys = np.array([b for _, b in pairs])
    if np.any(np.diff(xs) <= 0):
        raise ValueError("label locations must be distinct")
    q = 0.0 if math.isinf(p) else 2.0 / (p - 1)
    if np.any(density.pdf(np.linspace(xs[0], xs[-1], 1001)) <= 0):
        raise ValueError("density vanishes on the labeled hull")

    if q == 0.0:
        def phi(t):
            return np.asarray(t, dtype=float)
        breaks: tuple[float, ...] = ()
    elif isinstance(density, (PiecewiseConstant1D, Uniform)):
        bp, knots, _ = _piecewise_phi(density, q)
        def phi(t):
            return np.interp(t, bp, knots)
        breaks = tuple(float(b) for b in bp)
    else:
        grid = np.linspace(xs[0], xs[-1], 40001)
        dens = density.pdf(grid)
        table = integrate.cumulative_simpson(dens ** (-q), x=grid, initial=0.0)
        def phi(t):
            return np.interp(t, grid, table)
        breaks = ()

    phis = phi(xs)
    slopes = np.diff(ys) / np.diff(phis)

    def interval(t):
        return np.clip(np.searchsorted(xs, t, side="right") - 1, 0, len(xs) - 2)

    def fn(pts):
        t = np.clip(pts[:, 0], xs[0], xs[-1])
        k = interval(t)
        return ys[k] + slopes[k] * (phi(t) - phis[k])

    def grad(pts):
        t = pts[:, 0]
        k = interval(t)
        inside = (t >= xs[0]) & (t <= xs[-1])
        g = np.where(inside, slopes[k] * density.pdf(t) ** (-q) if q else slopes[k], 0.0)
        return g.reshape(-1, 1)

    def hess(pts):
        t = pts[:, 0]
        inside = (t > xs[0]) & (t < xs[-1])
        g = grad(pts)[:, 0]
        dlog = np.zeros_like(t)
        if q and np.any(inside):
            dlog[inside] = density.grad_log(t[inside]).ravel()
        return np.where(inside, -q * g * dlog, 0.0).reshape(-1, 1, 1)

    lo, hi = density.bounds
    return ScalarField(fn, 1, grad, hess, breakpoints=breaks + tuple(xs),
                       scale=float(hi[0] - lo[0]))


# -- second-order operators -----------------------------------------------------------

def infinity_laplacian(f: ScalarField, x, fd_step: float | None = None):
    """<grad f, Hess f grad f> / |grad f|^2, taken as 0 where the gradient vanishes."""
    pts, single = _as_points(x, f.dim)
    g = f.gradient(pts, None if fd_step is None else 1e-5 * f.scale)
    H = f.hessian(pts, fd_step)
    g = g.reshape(len(pts), f.dim)
    H = H.reshape(len(pts), f.dim, f.dim)
    gg = np.sum(g * g, axis=1)
    num = np.einsum("ni,nij,nj->n", g, H, g)
    ok = np.sqrt(gg) >= 1e-12 * f.scale
    out = np.where(ok, num / np.where(ok, gg, 1.0), 0.0)
    return float(out[0]) if single else out


def laplacian(f: ScalarField, x, fd_step: float | None = None):
    pts, single = _as_points(x, f.dim)
    H = f.hessian(pts, fd_step).reshape(len(pts), f.dim, f.dim)
    out = np.trace(H, axis1=1, axis2=2)
    return float(out[0]) if single else out


def el_residual(f: ScalarField, density: DensityModel, p, x, fd_step: float | None = None):
    """Delta_2 f + 2 <grad log mu, grad f> + (p - 2) Delta_inf f at x.

    Derivatives are analytic when the field provides them and ``fd_step`` is
    None; otherwise central differences with the given step.
    """
    pts, single = _as_points(x, f.dim)
    if np.any(density.pdf(pts) <= 0):
        raise ValueError("residual undefined where the density vanishes")
    glog = np.asarray(density.grad_log(pts)).reshape(len(pts), f.dim)
    g = f.gradient(pts, None if fd_step is None else 1e-5 * f.scale).reshape(len(pts), f.dim)
    out = (laplacian(f, pts, fd_step) + 2 * np.sum(glog * g, axis=1)
           + (p - 2) * infinity_laplacian(f, pts, fd_step))
    out = np.asarray(out)
    return float(out[0]) if single else out


# -- degenerate families ----------------------------------------------------------------

def _anchor(density: DensityModel) -> np.ndarray:
    lo, hi = density.bounds
    return 0.5 * (np.asarray(lo, float) + np.asarray(hi, float))


def _sphere_directions(d: int, count: int, seed) -> np.ndarray:
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        ang = 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    z = make_rng(seed).standard_normal((count, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _exit_radius(density: DensityModel, c: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Distance from c along each direction to the boundary of the density's bounding box."""
    lo, hi = (np.asarray(v, float) for v in density.bounds)
    with np.errstate(divide="ignore"):
        up = np.where(dirs > 0, (hi - c) / dirs, np.inf)
        down = np.where(dirs < 0, (lo - c) / dirs, np.inf)
    return np.minimum(up, down).min(axis=1)


def _ray_integral(g, density, c, dirs, edges, order):
    """Mean over directions of int_0^R g(r) mu(c + r theta)^2 dr, R the exit radius (capped)."""
    x, w = np.polynomial.legendre.leggauss(order)
    stop = _exit_radius(density, c, dirs)
    a = np.minimum(edges[None, :-1], stop[:, None])  # (dirs, panels)
    b = np.minimum(edges[None, 1:], stop[:, None])
    r = a[..., None] + (b - a)[..., None] * (x + 1) / 2  # (dirs, panels, order)
    wt = (b - a)[..., None] * w / 2
    pts = c + r[..., None] * dirs[:, None, None, :]
    mu2 = density.pdf(pts.reshape(-1, len(c))).reshape(r.shape) ** 2
    return float(np.mean(np.sum(wt * g(r) * mu2, axis=(1, 2))))


def spike_integral(p: int, d: int, epsilon: float, density: DensityModel, family: str = "spike",
                   quad: QuadratureSpec | None = None, directions: int = 1024) -> QuadResult:
    """int ||grad f_eps||^p mu^2 for a radial profile centered at the support's centroid.

    ``spike``: f = min(|x - c| / eps, 1), gradient 1/eps on the ball of radius eps.
    ``log``:   f = log((|x - c|^2 + eps) / eps) / log((1 + eps) / eps) on the unit ball,
    clamped to 1 outside it.

    Each ray from the centroid is integrated up to where it leaves the support
    box with composite Gauss-Legendre panels graded towards the origin; rays
    are equispaced in d = 2 and seeded random directions for d >= 3. The
    error estimate compares against a lower-order rule.
    """
    if density.dim != d:
        raise ValueError("density dimension does not match d")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    quad = quad or QuadratureSpec()
    c = _anchor(density)
    dirs = _sphere_directions(d, directions, quad.seed)
    area = sphere_area(d)
    if family == "spike":
        edges = np.linspace(0.0, epsilon, 9)

        def g(r):
            return epsilon ** (-p) * r ** (d - 1)
    elif family == "log":
        lam = math.log((1 + epsilon) / epsilon)
        s = math.sqrt(epsilon)
        edges = np.unique(np.concatenate([[0.0], np.geomspace(1e-4 * s, 1.0, 120), [1.0]]))
        edges = edges[edges <= 1.0]

        def g(r):
            return (2 * r / ((r * r + epsilon) * lam)) ** p * r ** (d - 1)
    else:
        raise ValueError(f"unknown family {family!r}")
    if d == 1:
        # interior density jumps become panel edges on the rays
        extra = np.abs(np.asarray(_density_breaks(density)) - c[0])
        edges = np.unique(np.concatenate([edges, extra[extra < edges[-1]]]))
    fine = area * _ray_integral(g, density, c, dirs, edges, 16)
    coarse = area * _ray_integral(g, density, c, dirs, edges, 8)
    return QuadResult(fine, abs(fine - coarse))


@dataclass(frozen=True)
class SpikeReport:
    value: float
    stated_bound: float
    corrected_bound: float
    family: str
    error: float = 0.0


def spike_family(p: int, d: int, epsilon: float, density: DensityModel,
                 quad: QuadratureSpec | None = None) -> SpikeReport:
    """Weighted energy of a family whose energy tends to 0 when p <= d.

    For p <= d - 1 the spike family is used with bound mu_max^2 vol(B1) eps^(d-p).
    For p = d the log family is used; ``stated_bound`` is
    d mu_max^2 vol(B1) / (2 log((1+eps)/eps)^(d-1)), and ``corrected_bound``
    restores the factor 2^d from |grad f|^d = (2r / ((r^2 + eps) log))^d.
    """
    if p > d:
        raise ValueError("the families are only degenerate for p <= d")
    mu2 = density.max_density ** 2
    vol = ball_volume(d)
    if p <= d - 1:
        res = spike_integral(p, d, epsilon, density, "spike", quad)
        bound = mu2 * vol * epsilon ** (d - p)
        return SpikeReport(res.value, bound, bound, "spike", res.error)
    res = spike_integral(p, d, epsilon, density, "log", quad)
    lam = math.log((1 + epsilon) / epsilon)
    stated = d * mu2 * vol / (2 * lam ** (d - 1))
    return SpikeReport(res.value, stated, 2.0**d * stated, "log", res.error)


# -- isotropic moment identity -----------------------------------------------------------

@dataclass(frozen=True)
class TensorCheck:
    lhs: float
    rhs: float
    mc_stderr: float
    rhs_exact: float


def tensor_contraction_check(w, p: int, d: int, u, mc_samples: int = 1_000_000, seed=0,
                             radius: float | None = None) -> TensorCheck:
    """Monte Carlo estimate of int w(|z|) <u, z>^p dz against its closed forms.

    ``rhs`` is d^(-p/2) (int w(|z|) |z|^p dz) |u|^p for even p and 0 for odd
    p. ``rhs_exact`` replaces d^(-p/2) by the isotropic moment E[theta_1^p],
    which agrees for p = 2 only. ``w`` is an :class:`EdgeKernel` or a callable
    supported on the ball of the given ``radius``.
    """
    u = np.asarray(u, dtype=float).ravel()
    if u.shape != (d,):
        raise ValueError("u must have dimension d")
    if isinstance(w, EdgeKernel):
        radius = w.support if radius is None else radius
    elif radius is None:
        radius = 1.0
    rng = make_rng(seed)
    z = rng.standard_normal((mc_samples, d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    r = radius * rng.random(mc_samples) ** (1.0 / d)
    z *= r[:, None]
    vals = np.asarray(w(r), dtype=float) * (z @ u) ** p
    vol = ball_volume(d) * radius**d
    lhs = vol * float(vals.mean())
    stderr = vol * float(vals.std(ddof=1)) / math.sqrt(mc_samples)
    radial, _ = _quad(lambda t: float(w(t)) * t ** (p + d - 1), 0.0, radius, 1e-12)
    moment = sphere_area(d) * radial  # int w(|z|) |z|^p dz
    unorm = float(np.linalg.norm(u)) ** p
    if p % 2:
        return TensorCheck(lhs, 0.0, stderr, 0.0)
    return TensorCheck(lhs, d ** (-p / 2) * moment * unorm, stderr,
                       isotropic_moment(p, d) * moment * unorm)


# -- export -------------------------------------------------------------------------------

def export_field_grid(f: ScalarField, path, lo, hi, n: int = 201) -> None:
    """Sample a field on a regular grid (1-D or 2-D) and write it as CSV."""
    lo = np.atleast_1d(np.asarray(lo, float))
    hi = np.atleast_1d(np.asarray(hi, float))
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
    vals = f(grid)
    names = [f"x{k + 1}" for k in range(len(lo))] if len(lo) > 1 else ["x"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(names + ["value"])
        for row, v in zip(grid, np.atleast_1d(vals)):
            wr.writerow([repr(float(t)) for t in row] + [repr(float(v))])
