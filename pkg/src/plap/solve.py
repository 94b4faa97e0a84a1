"""Interpolation on graphs by p-Laplacian minimization.

All constrained solvers agree with the labels exactly on labeled vertices.
The even-p solver works in label-normalized units (labels mapped onto [0, 1])
so that w^p |df|^p stays in a sane floating-point range for p up to ~32.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components, dijkstra

from plap.graph import GeometricGraph, LabelSet, check_even_p, j_p

__all__ = [
    "SolveOptions",
    "SolveResult",
    "UnlabeledComponentError",
    "solve_p2",
    "solve_even_p",
    "solve_lex",
    "solve_penalized",
    "pcg",
    "export_solution",
    "export_trace",
]

DENSE_MAX = 2000


@dataclass(frozen=True)
class SolveOptions:
    max_iters: int = 500
    rel_tol: float = 1e-9
    smoothing_floor: float = 1e-8
    linear_solver_tol: float = 1e-10
    final_floor: float = 1e-12

    def __post_init__(self):
        for name in ("max_iters", "rel_tol", "smoothing_floor", "linear_solver_tol", "final_floor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class SolveResult:
    f: np.ndarray
    objective: float
    iterations: int
    converged: bool
    gradients: np.ndarray
    trace: list[float] = field(default_factory=list)

    def to_rows(self):
        return [(i, float(v)) for i, v in enumerate(self.f)]


class UnlabeledComponentError(ValueError):
    def __init__(self, component):
        self.component = np.asarray(component)
        head = ", ".join(map(str, self.component[:10]))
        more = "..." if len(self.component) > 10 else ""
        super().__init__(
            f"connected component with {len(self.component)} vertices has no label: [{head}{more}]")


def _check_labels(graph: GeometricGraph, labels: LabelSet) -> None:
    labels.validate(graph.n_vertices)
    ncomp, comp = connected_components(graph.adjacency(), directed=False)
    has_label = np.zeros(ncomp, dtype=bool)
    has_label[comp[labels.indices]] = True
    if not has_label.all():
        bad = int(np.flatnonzero(~has_label)[0])
        raise UnlabeledComponentError(np.flatnonzero(comp == bad))


def pcg(A, b, tol: float = 1e-10, maxiter: int | None = None, x0=None):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Stops when ||r|| <= tol * ||b||. Returns (x, iterations, converged).
    """
    n = b.shape[0]
    maxiter = 10 * n if maxiter is None else maxiter
    diag = A.diagonal() if sp.issparse(A) else np.diag(A)
    minv = 1.0 / np.where(diag > 0, diag, 1.0)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n), 0, True
    z = minv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            return x, it, True
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, False


def _spd_solve(A: sp.csr_matrix, b: np.ndarray, tol: float) -> tuple[np.ndarray, int]:
    if A.shape[0] <= DENSE_MAX:
        dense = A.toarray()
        try:
            return sla.cho_solve(sla.cho_factor(dense), b), 1
        except sla.LinAlgError:
            return sla.lstsq(dense, b)[0], 1
    x, iters, ok = pcg(A, b, tol=tol)
    if not ok:
        raise RuntimeError(f"conjugate gradients did not reach tol={tol} in {iters} iterations")
    return x, iters


def _free_mask(n: int, labels: LabelSet) -> np.ndarray:
    free = np.ones(n, dtype=bool)
    free[labels.indices] = False
    return free


def _harmonic(graph: GeometricGraph, cond: np.ndarray, labels: LabelSet, values: np.ndarray,
              tol: float) -> tuple[np.ndarray, int]:
    """Minimize sum cond_e (f_i - f_j)^2 with f fixed to ``values`` on the labels."""
    n = graph.n_vertices
    f = np.zeros(n)
    f[labels.indices] = values
    free = _free_mask(n, labels)
    if not free.any():
        return f, 0
    L = graph.laplacian(cond)
    Lff = L[free][:, free]
    rhs = -(L[free][:, ~free] @ f[~free])
    f[free], iters = _spd_solve(Lff.tocsr(), rhs, tol)
    return f, iters


def solve_p2(graph: GeometricGraph, labels: LabelSet, opts: SolveOptions | None = None) -> SolveResult:
    """Harmonic extension for the energy sum w_ij^2 (f_i - f_j)^2."""
    opts = opts or SolveOptions()
    _check_labels(graph, labels)
    f, iters = _harmonic(graph, graph.weights**2, labels, labels.values, opts.linear_solver_tol)
    obj = j_p(graph, f, 2)
    return SolveResult(f, obj, iters, True, graph.gradients(f), [obj])


def _line_search(delta: np.ndarray, eta: np.ndarray, coef: np.ndarray, p: int, t_max: float,
                 quad_res: np.ndarray | None = None, quad_dir: np.ndarray | None = None,
                 lam: float = 1.0) -> float:
    """Exact minimizer over [0, t_max] of
    lam * sum coef (delta + t eta)^p + sum (quad_res + t quad_dir)^2.

    The function is a convex polynomial in t, so its derivative is monotone.
    """
    def dphi(t):
        val = lam * p * np.sum(coef * (delta + t * eta) ** (p - 1) * eta)
        if quad_res is not None:
            val += 2.0 * np.sum((quad_res + t * quad_dir) * quad_dir)
        return val

    if dphi(0.0) >= 0:
        return 0.0
    if dphi(t_max) <= 0:
        return t_max
    return brentq(dphi, 0.0, t_max, xtol=1e-15, rtol=1e-14, maxiter=200)


def solve_even_p(graph: GeometricGraph, labels: LabelSet, p, opts: SolveOptions | None = None
                 ) -> SolveResult:
    """Minimize J_p subject to the labels by reweighted least squares.

    Each step solves a weighted-Laplacian system with conductances
    w^p max(|df|, floor)^(p-2) against the true gradient, followed by an exact
    line search on J_p, so the objective never increases. The floor shrinks
    tenfold whenever progress stalls, down to ``final_floor``.
    """
    p = check_even_p(p)
    opts = opts or SolveOptions()
    _check_labels(graph, labels)
    y = labels.values
    lo, span = float(y.min()), float(np.ptp(y))
    if span == 0:
        f = np.full(graph.n_vertices, lo)
        return SolveResult(f, 0.0, 0, True, graph.gradients(f), [0.0])
    ys = (y - lo) / span
    wp = graph.weights**p
    free = _free_mask(graph.n_vertices, labels)

    f, _ = _harmonic(graph, wp, labels, ys, opts.linear_solver_tol)
    obj = float(np.sum(wp * graph.differences(f) ** p))
    trace = [obj * span**p]
    floor = opts.smoothing_floor
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        delta = graph.differences(f)
        true_cond = wp * np.abs(delta) ** (p - 2)
        grad = (graph.laplacian(true_cond) @ f)[free]
        if not free.any() or not np.any(grad):
            converged = True
            break
        cond = wp * np.maximum(np.abs(delta), floor) ** (p - 2)
        Lc = graph.laplacian(cond)[free][:, free].tocsr()
        step, _ = _spd_solve(Lc, -grad, opts.linear_solver_tol)
        d = np.zeros_like(f)
        d[free] = step
        t = _line_search(delta, graph.differences(d), wp, p, 1.0)
        f_new = f + t * d
        obj_new = float(np.sum(wp * graph.differences(f_new) ** p))
        if obj_new <= obj:
            f, gain, obj = f_new, obj - obj_new, obj_new
        else:
            gain = 0.0
        trace.append(obj * span**p)
        if gain <= opts.rel_tol * max(obj, 1e-300):
            if floor > opts.final_floor:
                floor = max(floor * 0.1, opts.final_floor)
                continue
            converged = True
            break
    f_out = lo + span * f
    f_out[labels.indices] = y
    return SolveResult(f_out, j_p(graph, f_out, p), it, converged, graph.gradients(f_out), trace)


def solve_penalized(graph: GeometricGraph, labels: LabelSet, p, lam: float,
                    opts: SolveOptions | None = None) -> SolveResult:
    """Minimize sum_{i in O} (f_i - y_i)^2 + lam * J_p(f) over all vertex values."""
    p = check_even_p(p)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    opts = opts or SolveOptions()
    _check_labels(graph, labels)
    n = graph.n_vertices
    y = labels.values
    lo, span = float(y.min()), float(np.ptp(y))
    if span == 0:
        f = np.full(n, lo)
        return SolveResult(f, 0.0, 0, True, graph.gradients(f), [0.0])
    ys = (y - lo) / span
    lam_s = lam * span ** (p - 2)
    wp = graph.weights**p
    obs = np.zeros(n)
    obs[labels.indices] = 1.0
    target = np.zeros(n)
    target[labels.indices] = ys
    D = sp.diags(2.0 * obs)

    def objective(f):
        return float(np.sum(obs * (f - target) ** 2) + lam_s * np.sum(wp * graph.differences(f) ** p))

    f = np.full(n, 0.5)
    f[labels.indices] = ys
    obj = objective(f)
    trace = [obj * span**2]
    floor = opts.smoothing_floor
    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        delta = graph.differences(f)
        true_cond = wp * np.abs(delta) ** (p - 2)
        grad = 2.0 * obs * (f - target) + lam_s * p * (graph.laplacian(true_cond) @ f)
        if not np.any(grad):
            converged = True
            break
        cond = wp * np.maximum(np.abs(delta), floor) ** (p - 2)
        H = (D + lam_s * p * (p - 1) * graph.laplacian(cond)).tocsr()
        d, _ = _spd_solve(H, -grad, opts.linear_solver_tol)
        t = _line_search(delta, graph.differences(d), wp, p, 4.0,
                         quad_res=(f - target)[obs > 0], quad_dir=d[obs > 0], lam=lam_s)
        f_new = f + t * d
        obj_new = objective(f_new)
        if obj_new <= obj:
            f, gain, obj = f_new, obj - obj_new, obj_new
        else:
            gain = 0.0
        trace.append(obj * span**2)
        if gain <= opts.rel_tol * max(obj, 1e-300):
            if floor > opts.final_floor:
                floor = max(floor * 0.1, opts.final_floor)
                continue
            converged = True
            break
    f_out = lo + span * f
    loss = float(np.sum((f_out[labels.indices] - y) ** 2))
    return SolveResult(f_out, loss + lam * j_p(graph, f_out, p), it, converged,
                       graph.gradients(f_out), trace)


# -- lex-minimal inf-minimizer ------------------------------------------------

def _pack(n, s, t, length, n_super=0):
    """CSR matrix from edges sorted by source; ``n_super`` empty-weight slots form row n."""
    counts = np.bincount(s, minlength=n)
    size = n
    if n_super:
        counts = np.append(counts, n_super)
        t = np.concatenate([t, np.zeros(n_super, dtype=t.dtype)])
        length = np.concatenate([length, np.ones(n_super)])
        size = n + 1
    indptr = np.concatenate([[0], np.cumsum(counts)])
    return sp.csr_matrix((length, t, indptr), shape=(size, size))


class _LexRound:
    """Search graphs for one round of the steepest-path algorithm.

    ``out`` holds edges leaving free vertices (terminals are sinks); ``into``
    holds edges entering free vertices plus a super-source row whose edges to
    the terminals carry per-search offsets.
    """

    def __init__(self, s, t, length, free):
        n = free.shape[0]
        self.n = n
        self.free = free
        m_out = free[s]
        so, to, lo = s[m_out], t[m_out], length[m_out]
        self.out = _pack(n, so, to, lo)
        ff = free[to]
        self.inner = _pack(n, so[ff], to[ff], lo[ff])
        self.fixed_idx = np.flatnonzero(~free)
        m_in = free[t]
        self.into = _pack(n, s[m_in], t[m_in], length[m_in], n_super=len(self.fixed_idx))
        k = len(self.fixed_idx)
        self.into.indices[-k:] = self.fixed_idx

    def offset_distances(self, offsets):
        """min over terminals u of offsets[u] + d(u, x), paths entering only free vertices."""
        k = len(self.fixed_idx)
        self.into.data[-k:] = offsets + 1.0
        return dijkstra(self.into, directed=True, indices=self.n)[: self.n] - 1.0

    def steepest_through(self, values, x):
        """Steepest terminal-to-terminal path with free interior passing through ``x``."""
        dist, pred = dijkstra(self.out, directed=True, indices=x, return_predecessors=True)
        term = np.flatnonzero(~self.free & np.isfinite(dist))
        if len(term) < 2:
            return 0.0, None
        yv, dv = values[term], dist[term]
        num = np.abs(yv[:, None] - yv[None, :])
        den = dv[:, None] + dv[None, :]
        # upper triangle only, so the first argmax is the smallest (u, v) index pair
        ratio = np.where(np.triu(num > 0, k=1), num / den, -np.inf)
        k = int(np.argmax(ratio))
        iu, iv = divmod(k, len(term))
        alpha = float(ratio[iu, iv])
        if not np.isfinite(alpha) or alpha <= 0:
            return 0.0, None
        return alpha, (int(term[iu]), int(term[iv]), dist, pred, x)


def _chain(pred, x, end):
    out = [end]
    while out[-1] != x:
        out.append(int(pred[out[-1]]))
    return out  # end, ..., x


def solve_lex(graph: GeometricGraph, labels: LabelSet, opts: SolveOptions | None = None
              ) -> SolveResult:
    """Lex-minimal inf-minimizer via repeated steepest fixed paths.

    Edge lengths are 1 / w_ij. Each round finds the terminal pair and path
    (with only free interior vertices) of maximal |y_u - y_v| / length, fixes
    the path by linear interpolation in arc length, and repeats. Vertices not
    on any path between terminals of different values take the common value
    of the terminals they can reach.
    """
    _check_labels(graph, labels)
    n = graph.n_vertices
    values = np.zeros(n)
    values[labels.indices] = labels.values
    free = _free_mask(n, labels)
    span = float(np.ptp(labels.values))
    tol = 1e-11 * max(span, 1e-300)
    # directed edge list sorted by source, lengths 1 / w
    es = np.concatenate([graph.src, graph.dst])
    et = np.concatenate([graph.dst, graph.src])
    order = np.lexsort((et, es))
    es, et = es[order], et[order]
    elen = np.concatenate([1.0 / graph.weights, 1.0 / graph.weights])[order]
    trace = []
    rounds = 0

    while free.any():
        rnd = _LexRound(es, et, elen, free)
        # components of the free subgraph and the spread of terminal values around them
        _, comp = connected_components(rnd.inner, directed=False)
        bridge = free[es] & ~free[et]
        cmin = np.full(n, np.inf)
        cmax = np.full(n, -np.inf)
        np.minimum.at(cmin, comp[es[bridge]], values[et[bridge]])
        np.maximum.at(cmax, comp[es[bridge]], values[et[bridge]])
        spread = np.where(free, cmax[comp] - cmin[comp], -np.inf)
        if spread.max() <= tol:
            values[free] = cmin[comp[free]]
            free[:] = False
            break

        x = int(np.argmax(spread))
        alpha, best = rnd.steepest_through(values, x)
        yfix = values[rnd.fixed_idx]
        ymin, ymax = yfix.min(), yfix.max()
        while True:
            d1 = rnd.offset_distances((yfix - ymin) / alpha)
            d2 = rnd.offset_distances((ymax - yfix) / alpha)
            viol = np.where(free, (ymax - ymin) - alpha * (d1 + d2), -np.inf)
            xb = int(np.argmax(viol))
            if viol[xb] <= tol:
                break
            a2, b2 = rnd.steepest_through(values, xb)
            if a2 <= alpha * (1 + 1e-13):
                break
            alpha, best = a2, b2

        rounds += 1
        trace.append(alpha)
        # vertices where the alpha-Lipschitz bounds from above and below meet are
        # forced in every inf-minimizer; fix them together with the steepest path
        vhigh = ymin + alpha * d1
        vlow = ymax - alpha * d2
        tight = free & (viol >= -tol)
        _fix_path(values, free, best)
        tight &= free
        values[tight] = 0.5 * (vlow[tight] + vhigh[tight])
        free[tight] = False

    grads = graph.gradients(values)
    obj = float(grads.max()) if grads.size else 0.0
    return SolveResult(values, obj, rounds, True, grads, trace)


def _fix_path(values, free, best):
    u, v, dist, pred, x = best
    to_u = _chain(pred, x, u)  # u ... x
    to_v = _chain(pred, x, v)  # v ... x
    shared = set(to_u[1:-1]) & set(to_v[1:-1])
    if shared:
        # the two branches meet before x: shortcut through the farthest shared vertex
        c = max(shared, key=lambda k: dist[k])
        to_u = to_u[: to_u.index(c) + 1]
        to_v = to_v[: to_v.index(c) + 1]
        pivot = dist[c]
    else:
        pivot = 0.0
    du, dv = dist[u], dist[v]
    total = du + dv - 2 * pivot
    slope = (values[u] - values[v]) / total
    for k in to_u[1:]:
        values[k] = values[u] - slope * (du - dist[k])
        free[k] = False
    for k in to_v[1:-1]:
        values[k] = values[u] - slope * (du - 2 * pivot + dist[k])
        free[k] = False


# -- export --------------------------------------------------------------------

def export_solution(result: SolveResult, path) -> None:
    """Write ``vertex,value`` rows."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(["vertex", "value"])
        for i, v in enumerate(result.f):
            wr.writerow([i, repr(float(v))])


def export_trace(result: SolveResult, path) -> None:
    """Write the per-iteration objective trace as ``iteration,objective`` rows."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(["iteration", "objective"])
        for i, v in enumerate(result.trace):
            wr.writerow([i, repr(float(v))])
