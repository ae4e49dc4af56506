"""Coordinate-descent primal-dual splitting and asynchronous distributed optimization."""

__version__ = "0.1.0"
