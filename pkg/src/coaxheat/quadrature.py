"""Gauss-Legendre rules on the unit interval."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Nodes in (0, 1) and positive weights summing to 1."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape != weights.shape or nodes.ndim != 1:
            raise ValueError("nodes and weights must be 1-D arrays of equal length")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.nodes.size

    def integrate(self, values) -> np.ndarray:
        """Apply the rule along the last axis of ``values``."""
        return np.asarray(values, dtype=float) @ self.weights


def gauss_rule(n: int) -> QuadratureRule:
    """n-point Gauss-Legendre rule mapped from (-1, 1) to (0, 1)."""
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w)


def reference_rule(m: int) -> QuadratureRule:
    """Rule used for all Galerkin integrals with m modes per region."""
    return gauss_rule(max(64, 2 * m + 16))
