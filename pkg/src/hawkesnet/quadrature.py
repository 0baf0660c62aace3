"""Trapezoidal quadrature on geometrically spaced nodes, the integration
rule used for kernel norms and for the integral term of the estimation
equation.  A log-spaced grid concentrates nodes at short delays where the
kernels vary fastest."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hawkesnet.errors import ArgumentError


@dataclass(frozen=True)
class QuadratureGrid:
    """Integration nodes in (0, T] with positive trapezoid weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        n = np.ascontiguousarray(self.nodes, dtype=np.float64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if n.ndim != 1 or n.shape != w.shape or n.size < 2:
            raise ArgumentError("nodes and weights must be matching 1-d arrays with >= 2 entries")
        if np.any(np.diff(n) <= 0):
            raise ArgumentError("quadrature nodes must be strictly increasing")
        if np.any(w <= 0):
            raise ArgumentError("quadrature weights must be positive")
        object.__setattr__(self, "nodes", n)
        object.__setattr__(self, "weights", w)

    def integrate(self, values: np.ndarray):
        """Contract sampled integrand values (last axis = nodes) with weights."""
        return np.asarray(values) @ self.weights


def build_quadrature(Q: int, t_lo: float, T: float) -> QuadratureGrid:
    """Q geometric nodes on [t_lo, T] with trapezoidal weights."""
    if Q < 2:
        raise ArgumentError("at least 2 quadrature nodes are required")
    if not 0 < t_lo < T:
        raise ArgumentError("need 0 < t_lo < T")
    nodes = np.geomspace(t_lo, T, Q)
    nodes[0], nodes[-1] = t_lo, T  # exact endpoints
    weights = np.empty(Q)
    gaps = np.diff(nodes)
    weights[0] = gaps[0] / 2
    weights[-1] = gaps[-1] / 2
    weights[1:-1] = (gaps[:-1] + gaps[1:]) / 2
    return QuadratureGrid(nodes, weights)
