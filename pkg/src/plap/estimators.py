"""Nonparametric regression on [-1, 1]: kernel ridge regression with the
cluster kernel, and Lipschitz-constrained least squares.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from plap.density import ClusterInstance, DensityModel
from plap.rng import make_rng
from plap.spectrum import kernel_gram

__all__ = [
    "RegressionSample",
    "RKHSModel",
    "LipschitzModel",
    "SymmetrizedModel",
    "CVResult",
    "make_regression_sample",
    "fit_rkhs",
    "fit_lipschitz",
    "project_lipschitz",
    "cross_validate",
    "cross_validate_rkhs",
    "empirical_error",
    "export_cv_curve",
    "export_fit",
]


@dataclass(frozen=True)
class RegressionSample:
    """Design points and responses, stored sorted by x."""

    xs: np.ndarray
    ys: np.ndarray
    sigma: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float).ravel()
        ys = np.asarray(self.ys, dtype=float).ravel()
        if xs.shape != ys.shape:
            raise ValueError("xs and ys must have equal length")
        if len(xs) < 2:
            raise ValueError("need at least two observations")
        order = np.argsort(xs, kind="stable")
        object.__setattr__(self, "xs", xs[order])
        object.__setattr__(self, "ys", ys[order])

    @property
    def n(self) -> int:
        return len(self.xs)

    def subset(self, idx) -> "RegressionSample":
        return RegressionSample(self.xs[idx], self.ys[idx], self.sigma, self.seed)


def make_regression_sample(instance: ClusterInstance, n: int, sigma: float, seed) -> RegressionSample:
    """Draw x from the cluster density and y = f*(x) + sigma * xi with standard normal xi."""
    rng = make_rng(seed)
    xs = instance.density.sample(n, rng)[:, 0]
    ys = instance.target(xs) + sigma * rng.standard_normal(n)
    return RegressionSample(xs, ys, sigma, seed if isinstance(seed, int) else None)


# -- fitted models ------------------------------------------------------------------

@dataclass(frozen=True)
class RKHSModel:
    xs: np.ndarray
    alpha: np.ndarray
    lam: float
    density: DensityModel = field(repr=False)
    seminorm: float = 0.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = kernel_gram(self.density, x.ravel(), self.xs) @ self.alpha
        return out.reshape(x.shape) if x.ndim else float(out[0])


@dataclass(frozen=True)
class LipschitzModel:
    xs: np.ndarray
    values: np.ndarray
    L: float

    def __call__(self, x):
        return np.interp(x, self.xs, self.values)


@dataclass(frozen=True)
class SymmetrizedModel:
    """The odd part x -> (f(x) - f(-x)) / 2 of a fitted model."""

    base: Callable

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * (self.base(x) - self.base(-x))


def fit_rkhs(sample: RegressionSample, lam: float, density: DensityModel) -> RKHSModel:
    """Kernel ridge regression: alpha = (G + n lam I)^-1 y."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    G = kernel_gram(density, sample.xs)
    A = G + sample.n * lam * np.eye(sample.n)
    try:
        alpha = sla.solve(A, sample.ys, assume_a="sym")
    except sla.LinAlgError as exc:
        raise ValueError("ridge system is singular (duplicate design points with lambda = 0?)") from exc
    if not np.all(np.isfinite(alpha)):
        raise ValueError("ridge system is singular")
    return RKHSModel(sample.xs, alpha, float(lam), density, float(alpha @ G @ alpha))


def project_lipschitz(y, caps) -> np.ndarray:
    """Euclidean projection of y onto {f : |f[i+1] - f[i]| <= caps[i]}.

    Dynamic program over i: the derivative of the optimal cost-to-come as a
    function of the current value is piecewise linear and nondecreasing, kept
    as knots. Passing to the next point convolves with the box
    [-caps, caps], which splits the derivative at its root and shifts the two
    halves apart. The fit is read back by clipping each stored minimizer to
    the window allowed by its successor.
    """
    y = np.asarray(y, dtype=float)
    caps = np.asarray(caps, dtype=float)
    n = len(y)
    if caps.shape != (max(n - 1, 0),):
        raise ValueError("need one cap per consecutive pair")
    if np.any(caps < 0):
        raise ValueError("caps must be nonnegative")
    kx = np.array([y[0]])
    kv = np.array([0.0])
    s_left = s_right = 1.0
    argmin = np.empty(n)
    for i in range(n):
        if i > 0:
            c, m = caps[i - 1], argmin[i - 1]
            left, right = kv < 0, kv > 0
            kx = np.concatenate([kx[left] - c, [m - c, m + c], kx[right] + c])
            kv = np.concatenate([kv[left], [0.0, 0.0], kv[right]])
            kv = kv + (kx - y[i])
            s_left += 1.0
            s_right += 1.0
        if kv[0] >= 0:
            argmin[i] = kx[0] - kv[0] / s_left
        elif kv[-1] <= 0:
            argmin[i] = kx[-1] - kv[-1] / s_right
        else:
            j = int(np.searchsorted(kv, 0.0))
            x0, x1, v0, v1 = kx[j - 1], kx[j], kv[j - 1], kv[j]
            argmin[i] = x0 + (x1 - x0) * (-v0) / (v1 - v0) if v1 > v0 else x0
    f = np.empty(n)
    f[-1] = argmin[-1]
    for i in range(n - 2, -1, -1):
        f[i] = min(max(argmin[i], f[i + 1] - caps[i]), f[i + 1] + caps[i])
    return f


def fit_lipschitz(sample: RegressionSample, L: float) -> LipschitzModel:
    """Least squares over L-Lipschitz fits at the sorted design points."""
    if L < 0:
        raise ValueError("L must be nonnegative")
    caps = L * np.diff(sample.xs)
    return LipschitzModel(sample.xs, project_lipschitz(sample.ys, caps), float(L))


# -- model selection ---------------------------------------------------------------------

@dataclass(frozen=True)
class CVResult:
    best_param: float
    cv_curve: list


def cross_validate(fitter: Callable, sample: RegressionSample, param_grid, folds: int = 5,
                   seed=0, more_regularized: str = "larger") -> CVResult:
    """K-fold cross-validated squared prediction error over ``param_grid``.

    ``fitter(train_sample, param)`` returns a callable model. Folds come from a
    seeded permutation of the sorted sample. Among tied minima the most
    regularized parameter wins: the largest one when ``more_regularized`` is
    ``"larger"`` (ridge penalty) and the smallest when ``"smaller"``
    (Lipschitz radius).
    """
    grid = [float(g) for g in param_grid]
    if not grid:
        raise ValueError("empty parameter grid")
    if folds < 2:
        raise ValueError("need at least two folds")
    if sample.n < folds:
        raise ValueError(f"{folds} folds need at least {folds} points, got {sample.n}")
    if more_regularized not in ("larger", "smaller"):
        raise ValueError("more_regularized must be 'larger' or 'smaller'")
    splits = list(_folds(sample.n, folds, seed))
    curve = []
    for g in grid:
        sse = 0.0
        for train, test in splits:
            model = fitter(sample.subset(train), g)
            sse += float(np.sum((model(sample.xs[test]) - sample.ys[test]) ** 2))
        curve.append((g, sse / sample.n))
    return CVResult(_select(grid, [e for _, e in curve], more_regularized), curve)


def _folds(n: int, folds: int, seed):
    perm = make_rng(seed).permutation(n)
    parts = np.array_split(perm, folds)
    for k in range(folds):
        test = np.sort(parts[k])
        train = np.sort(np.concatenate([parts[m] for m in range(folds) if m != k]))
        yield train, test


def _select(grid, errs, more_regularized):
    errs = np.asarray(errs)
    ties = np.flatnonzero(errs <= errs.min() * (1 + 1e-12))
    params = np.asarray(grid)[ties]
    return float(params.max() if more_regularized == "larger" else params.min())


def cross_validate_rkhs(sample: RegressionSample, lam_grid, density: DensityModel, folds: int = 5,
                        seed=0) -> CVResult:
    """Same result as ``cross_validate`` with ``fit_rkhs``, using one eigendecomposition per fold.

    With G = V diag(s) V^T on the training fold, the ridge prediction at the
    test points is K V diag(1 / (s + n lam)) V^T y for every lambda at once.
    """
    grid = [float(g) for g in lam_grid]
    if not grid:
        raise ValueError("empty parameter grid")
    if any(g < 0 for g in grid):
        raise ValueError("lambda must be nonnegative")
    if folds < 2 or sample.n < folds:
        raise ValueError(f"{folds} folds need at least {folds} points, got {sample.n}")
    lams = np.array(grid)
    sse = np.zeros(len(grid))
    for train, test in _folds(sample.n, folds, seed):
        s, V = np.linalg.eigh(kernel_gram(density, sample.xs[train]))
        B = kernel_gram(density, sample.xs[test], sample.xs[train]) @ V
        c = V.T @ sample.ys[train]
        denom = s[:, None] + len(train) * lams[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = c[:, None] / denom
        pred = B @ coef
        sse += np.sum((pred - sample.ys[test][:, None]) ** 2, axis=0)
    errs = np.where(np.isfinite(sse), sse, np.inf) / sample.n
    return CVResult(_select(grid, errs, "larger"), [(g, float(e)) for g, e in zip(grid, errs)])


def empirical_error(model: Callable, target: Callable, xs) -> float:
    """(1/n) sum (model(x_i) - target(x_i))^2."""
    xs = np.asarray(xs, dtype=float)
    return float(np.mean((np.asarray(model(xs)) - np.asarray(target(xs))) ** 2))


# -- export ----------------------------------------------------------------------------------

def export_cv_curve(result: CVResult, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(["param", "cv_error"])
        for g, e in result.cv_curve:
            wr.writerow([repr(g), repr(e)])


def export_fit(model: Callable, xs, path) -> None:
    xs = np.asarray(xs, dtype=float)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(["x", "value"])
        for x, v in zip(xs, np.asarray(model(xs))):
            wr.writerow([repr(float(x)), repr(float(v))])
