"""Graph p-Laplacian interpolation in the sparse-label regime."""

__version__ = "0.1.0"
