"""Random Riemannian first-passage percolation: fields, metrics, distances, shapes."""

__version__ = "0.1.0"
