"""Geometric random graphs with kernel edge weights, and the discrete p-Dirichlet energy."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

__all__ = [
    "EdgeKernel",
    "GeometricGraph",
    "LabelSet",
    "build_graph",
    "j_p",
    "scaled_jp",
    "scaled_degree",
    "check_even_p",
    "export_graph",
    "import_graph",
    "save_points",
    "load_points",
]

BRUTE_FORCE_MAX = 2000


@dataclass(frozen=True)
class EdgeKernel:
    """Radial profile phi: ``indicator`` is 1{z <= 1}; ``gaussian`` is exp(-z^2/2) cut at ``z_cut``."""

    name: str = "indicator"
    z_cut: float = 3.0

    def __post_init__(self):
        if self.name not in ("indicator", "gaussian"):
            raise ValueError(f"unknown kernel {self.name!r}")
        if self.z_cut <= 0:
            raise ValueError("z_cut must be positive")

    @property
    def support(self) -> float:
        return 1.0 if self.name == "indicator" else self.z_cut

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        if self.name == "indicator":
            return (z <= 1.0).astype(float)
        return np.where(z <= self.z_cut, np.exp(-0.5 * z * z), 0.0)

    def to_dict(self) -> dict:
        return {"name": self.name, "z_cut": self.z_cut}


@dataclass(frozen=True)
class GeometricGraph:
    points: np.ndarray
    src: np.ndarray  # edge endpoints with src < dst
    dst: np.ndarray
    weights: np.ndarray
    h: float
    kernel: EdgeKernel
    meta: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_edges(self) -> int:
        return self.src.shape[0]

    def edges(self):
        return zip(self.src.tolist(), self.dst.tolist(), self.weights.tolist())

    def differences(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return f[self.src] - f[self.dst]

    def gradients(self, f) -> np.ndarray:
        """Per-edge w_ij |f_i - f_j|."""
        return self.weights * np.abs(self.differences(f))

    def adjacency(self, edge_values=None) -> sp.csr_matrix:
        vals = self.weights if edge_values is None else np.asarray(edge_values, float)
        n = self.n_vertices
        a = sp.coo_matrix((vals, (self.src, self.dst)), shape=(n, n))
        return (a + a.T).tocsr()

    def laplacian(self, edge_values) -> sp.csr_matrix:
        """Graph Laplacian with conductances ``edge_values`` (one per stored edge)."""
        a = self.adjacency(edge_values)
        deg = np.asarray(a.sum(axis=1)).ravel()
        return (sp.diags(deg) - a).tocsr()


@dataclass(frozen=True)
class LabelSet:
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        val = np.asarray(self.values, dtype=float).ravel()
        if idx.shape != val.shape:
            raise ValueError("indices and values must have equal length")
        if len(np.unique(idx)) != len(idx):
            raise ValueError("label indices must be distinct")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_pairs(cls, pairs) -> "LabelSet":
        pairs = list(pairs)
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    def __len__(self) -> int:
        return len(self.indices)

    def validate(self, n_vertices: int) -> None:
        if len(self) == 0:
            raise ValueError("label set is empty")
        if self.indices.min() < 0 or self.indices.max() >= n_vertices:
            raise ValueError("label index out of range")


def _pairs_brute(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    n = points.shape[0]
    i, j = np.triu_indices(n, k=1)
    dist = np.linalg.norm(points[i] - points[j], axis=1)
    keep = dist <= radius * (1 + 1e-12)
    return i[keep], j[keep]


def _pairs_tree(points: np.ndarray, radius: float) -> tuple[np.ndarray, np.ndarray]:
    pairs = cKDTree(points).query_pairs(radius * (1 + 1e-12), output_type="ndarray")
    if pairs.size == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    pairs = np.sort(pairs, axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    return pairs[:, 0].astype(np.int64), pairs[:, 1].astype(np.int64)


def build_graph(points, kernel: EdgeKernel, h: float, method: str = "auto") -> GeometricGraph:
    """Connect every pair with phi(|x_i - x_j| / h) > 0.

    ``method`` is ``"brute"``, ``"tree"`` or ``"auto"`` (brute force up to
    2000 points). Edges come out sorted by (i, j) whichever method is used.
    """
    if h <= 0:
        raise ValueError(f"bandwidth must be positive, got {h!r}")
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1)
    if pts.shape[0] < 2:
        raise ValueError("need at least two points")
    radius = h * kernel.support
    if method == "auto":
        method = "brute" if pts.shape[0] <= BRUTE_FORCE_MAX else "tree"
    if method == "brute":
        i, j = _pairs_brute(pts, radius)
    elif method == "tree":
        i, j = _pairs_tree(pts, radius)
    else:
        raise ValueError(f"unknown neighbor search {method!r}")
    w = kernel(np.linalg.norm(pts[i] - pts[j], axis=1) / h)
    keep = w > 0
    meta = {"kernel": kernel.to_dict(), "neighbor_search": method}
    return GeometricGraph(pts, i[keep], j[keep], w[keep], float(h), kernel, meta)


def check_even_p(p) -> int:
    if int(p) != p or p < 2 or int(p) % 2:
        raise ValueError(f"p must be an even integer >= 2, got {p!r}")
    return int(p)


def j_p(graph: GeometricGraph, f, p) -> float:
    """Sum over edges of w_ij^p |f_i - f_j|^p (each unordered edge once)."""
    p = check_even_p(p)
    f = np.asarray(f, dtype=float)
    if f.shape != (graph.n_vertices,):
        raise ValueError("vertex function length does not match the graph")
    return float(np.sum(graph.gradients(f) ** p))


def scaled_jp(graph: GeometricGraph, f, p, N: int | None = None, h: float | None = None,
              pairs: str = "ordered") -> float:
    """J_p(f) / (N^2 h^(p+d)).

    With ``pairs="ordered"`` every edge is counted in both directions, i.e. the
    energy is the double sum over ordered pairs whose almost-sure limit is
    C_p * I_p(f). ``pairs="unordered"`` divides :func:`j_p` as it stands.
    """
    N = graph.n_vertices if N is None else N
    h = graph.h if h is None else h
    energy = j_p(graph, f, p)
    if pairs == "ordered":
        energy *= 2.0
    elif pairs != "unordered":
        raise ValueError(f"pairs must be 'ordered' or 'unordered', got {pairs!r}")
    return energy / (N**2 * h ** (p + graph.dim))


def scaled_degree(graph: GeometricGraph, vertex: int, N: int | None = None,
                  h: float | None = None) -> float:
    """(1 / (N h^d)) sum_{j != i} phi(|x_j - x_i| / h)."""
    if not 0 <= vertex < graph.n_vertices:
        raise ValueError("vertex index out of range")
    N = graph.n_vertices if N is None else N
    h = graph.h if h is None else h
    mask = (graph.src == vertex) | (graph.dst == vertex)
    return float(graph.weights[mask].sum() / (N * h**graph.dim))


# -- I/O ---------------------------------------------------------------------

def export_graph(graph: GeometricGraph, stem) -> tuple[Path, Path]:
    """Write ``<stem>.csv`` (``i,j,w`` rows) and ``<stem>.json`` (N, d, h, kernel)."""
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    with open(csv_path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(["i", "j", "w"])
        for i, j, w in graph.edges():
            wr.writerow([i, j, repr(float(w))])
    header = {"N": graph.n_vertices, "d": graph.dim, "h": graph.h,
              "kernel": graph.kernel.to_dict()}
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def import_graph(stem, points) -> GeometricGraph:
    stem = Path(stem)
    header = json.loads(stem.with_suffix(".json").read_text())
    rows = np.loadtxt(stem.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
    pts = np.asarray(points, dtype=float).reshape(header["N"], header["d"])
    kernel = EdgeKernel(**header["kernel"])
    if rows.size == 0:
        rows = np.zeros((0, 3))
    return GeometricGraph(pts, rows[:, 0].astype(np.int64), rows[:, 1].astype(np.int64),
                          rows[:, 2], float(header["h"]), kernel)


def save_points(points, path) -> None:
    pts = np.asarray(points, dtype=float)
    pts = pts.reshape(pts.shape[0], -1)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        for row in pts:
            wr.writerow([repr(float(v)) for v in row])


def load_points(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)
