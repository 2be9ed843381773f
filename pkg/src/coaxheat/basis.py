"""Trigonometric spectral bases for the four regions.

Each region gets an L2(0,1)-orthonormal family that satisfies the essential
boundary condition of its trial space:

* ``f``: psi_k(x) = sqrt(2) sin((k - 1/2) pi x), vanishing at x = 0
* ``g``: psi_k(x) = sqrt(2) sin((k - 1/2) pi (1 - x)), vanishing at x = 1
* ``s``, ``p``: psi_1 = 1, psi_k(x) = sqrt(2) cos((k - 1) pi x)

The natural (zero-flux) conditions at the remaining ends hold pointwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from .expr import Expression, as_expression, evaluate
from .quadrature import QuadratureRule, reference_rule

REGIONS = ("f", "s", "g", "p")
_SQRT2 = np.sqrt(2.0)


def _frequencies(region: str, m: int) -> np.ndarray:
    k = np.arange(1, m + 1, dtype=float)
    if region in ("f", "g"):
        return (k - 0.5) * np.pi
    return (k - 1.0) * np.pi


@dataclass(frozen=True)
class BasisFamily:
    """First ``size`` modes of the family attached to ``region``."""

    region: str
    size: int

    def __post_init__(self):
        if self.region not in REGIONS:
            raise ValueError(f"region must be one of {REGIONS}, got {self.region!r}")
        if int(self.size) != self.size or self.size < 1:
            raise ValueError(f"basis size must be a positive integer, got {self.size}")

    @property
    def frequencies(self) -> np.ndarray:
        return _frequencies(self.region, self.size)

    def values(self, x, order: int = 0) -> np.ndarray:
        """All modes (or their derivatives) at points ``x``; shape ``(size, len(x))``."""
        if order not in (0, 1, 2):
            raise ValueError(f"derivative order must be 0, 1 or 2, got {order}")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        w = self.frequencies[:, None]
        if self.region == "f":
            arg = w * x[None, :]
            out = (np.sin(arg), w * np.cos(arg), -(w**2) * np.sin(arg))[order]
            return _SQRT2 * out
        if self.region == "g":
            arg = w * (1.0 - x)[None, :]
            out = (np.sin(arg), -w * np.cos(arg), -(w**2) * np.sin(arg))[order]
            return _SQRT2 * out
        arg = w * x[None, :]
        out = _SQRT2 * (np.cos(arg), -w * np.sin(arg), -(w**2) * np.cos(arg))[order]
        # the constant mode is 1, not sqrt(2)
        out[0] = 1.0 if order == 0 else 0.0
        return out

    def function(self, i: int, order: int = 0):
        """Callable evaluating mode ``i`` (1-based)."""
        self._check_index(i)
        return partial(eval_basis, self, i, derivative_order=order)

    @property
    def functions(self) -> list:
        return [self.function(i) for i in range(1, self.size + 1)]

    def _check_index(self, i):
        if not 1 <= i <= self.size:
            raise IndexError(f"mode index {i} outside 1..{self.size}")


def build_basis(region: str, m: int) -> BasisFamily:
    """The m-mode family for ``region``."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return BasisFamily(region, int(m))


def eval_basis(family: BasisFamily, i: int, x, derivative_order: int = 0):
    """Value of psi_i (or a derivative) at ``x``; scalar in, scalar out."""
    family._check_index(i)
    if derivative_order not in (0, 1, 2):
        raise ValueError(f"derivative order must be 0, 1 or 2, got {derivative_order}")
    scalar = np.ndim(x) == 0
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0.0) | (xa > 1.0)):
        raise ValueError(f"x outside [0, 1]: {xa[(xa < 0.0) | (xa > 1.0)].ravel()[0]}")
    row = BasisFamily(family.region, i).values(x, derivative_order)[i - 1]
    return float(row[0]) if scalar else row


def weighted_gram(rows: np.ndarray, cols: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``G[i, j] = sum_q weights[q] * rows[i, q] * cols[j, q]``."""
    return (rows * weights[None, :]) @ cols.T


@dataclass(frozen=True, eq=False)
class CrossGram:
    """``entries[i, j] = <K psi_j^(source), psi_i^(target)>``."""

    source: str
    target: str
    weight: Expression
    entries: np.ndarray


def _weight_on_nodes(K, nodes):
    values = evaluate(as_expression(K), nodes, 0.0)
    values = np.broadcast_to(values, nodes.shape)
    if not np.all(np.isfinite(values)):
        raise ArithmeticError(f"weight {K} is not finite on the quadrature nodes")
    return values


def cross_gram(source: BasisFamily, target: BasisFamily, K, quad: QuadratureRule | None = None) -> CrossGram:
    """Weighted cross-Gram matrix between two families."""
    if source.size != target.size:
        raise ValueError(f"family sizes differ: {source.size} vs {target.size}")
    quad = quad or reference_rule(source.size)
    K = as_expression(K)
    x = quad.nodes
    w = quad.weights * _weight_on_nodes(K, x)
    entries = weighted_gram(target.values(x), source.values(x), w)
    return CrossGram(source.region, target.region, K, entries)


def check_orthonormality(family: BasisFamily, quad: QuadratureRule | None = None) -> float:
    """Largest entry of |Gram - I| under ``quad``."""
    quad = quad or reference_rule(family.size)
    v = family.values(quad.nodes)
    gram = weighted_gram(v, v, quad.weights)
    return float(np.max(np.abs(gram - np.eye(family.size))))


def change_of_basis_block(
    source: BasisFamily,
    target: BasisFamily,
    K,
    truncation: int,
    quad: QuadratureRule | None = None,
) -> np.ndarray:
    """Coupling block computed through a truncated change of basis.

    Each source mode is expanded in the first ``truncation`` target modes with
    coefficients ``<psi_j^(source), psi_k^(target)>``; the weighted target Gram
    is then applied to the expansion.  Converges to the direct
    :func:`cross_gram` entries as ``truncation`` grows.
    """
    m = source.size
    if truncation < m:
        raise ValueError("truncation must be at least the block size")
    quad = quad or reference_rule(truncation)
    x = quad.nodes
    wide = BasisFamily(target.region, truncation).values(x)
    coeffs = weighted_gram(wide, source.values(x), quad.weights)  # (truncation, m)
    kw = quad.weights * _weight_on_nodes(K, x)
    target_gram = weighted_gram(wide[:m], wide, kw)  # (m, truncation)
    return target_gram @ coeffs
