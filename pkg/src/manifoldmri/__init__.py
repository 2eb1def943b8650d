"""Manifold-regularized dynamic MRI from navigator-estimated graph Laplacians."""

__version__ = "0.1.0"
