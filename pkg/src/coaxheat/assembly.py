"""Galerkin system assembly.

With alpha = (f, s, g, p) the stacked mode coefficients, the semi-discrete
problem is d(alpha)/dt + A alpha = S(t).  Block (a, b) of ``A`` tests with the
basis of region ``a`` and expands the trial function in the basis of region
``b``; entry (i, j) is form(trial psi_j, test psi_i).  Diagonal blocks come
from the region bilinear forms, off-diagonal blocks from the exchange terms
of K(x), entered with a minus sign because they sit on the right-hand side of
the weak form.  The mass matrix is the identity (orthonormal bases).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .basis import REGIONS, BasisFamily, build_basis, weighted_gram
from .expr import EvaluationError, as_expression, evaluate
from .model import COUPLINGS, HomogeneousProblem
from .quadrature import QuadratureRule, gauss_rule, reference_rule

__all__ = [
    "QuadratureRule",
    "gauss_rule",
    "GalerkinSystem",
    "assemble_diag_block",
    "assemble_coupling_block",
    "assemble_system",
    "project_field",
    "dump_debug_csv",
]

SIGN_CONVENTIONS = ("weak-form", "plus-coupling")


def _on_nodes(expr, x: np.ndarray, what: str) -> np.ndarray:
    try:
        values = evaluate(as_expression(expr), x, 0.0)
    except EvaluationError as exc:
        raise EvaluationError(f"{what} failed on the quadrature nodes: {exc}") from exc
    return np.broadcast_to(values, x.shape)


def assemble_diag_block(
    region: str,
    basis: BasisFamily,
    problem: HomogeneousProblem,
    quad: QuadratureRule | None = None,
) -> np.ndarray:
    """Stiffness block ``a_region(psi_j, psi_i)``.

    a_f = <E u', v'> + f_f <u', v> + <K1 u, v>, a_g has -f_g on the
    convection term and K4 + K5 as reaction, a_s and a_p have no convection.
    """
    if basis.region != region:
        raise ValueError(f"basis is for region {basis.region!r}, not {region!r}")
    quad = quad or reference_rule(basis.size)
    x, w = quad.nodes, quad.weights
    v = basis.values(x)
    dv = basis.values(x, 1)
    E = _on_nodes(problem.E[region], x, f"E_{region}")
    block = weighted_gram(dv, dv, w * E) + weighted_gram(v, v, w * problem.reaction_weight(region, x))
    speed = {"f": problem.f_f, "g": -problem.f_g}.get(region, 0.0)
    if speed:
        block += speed * weighted_gram(v, dv, w)
    return block


def assemble_coupling_block(
    pair: tuple[str, str],
    weight,
    bases: Mapping[str, BasisFamily],
    quad: QuadratureRule | None = None,
) -> np.ndarray:
    """``<K psi_j^(trial), psi_i^(test)>`` for ``pair = (test, trial)``."""
    test, trial = pair
    if pair not in {(a, b) for a, b, _ in COUPLINGS}:
        raise ValueError(f"{pair} is not a coupled pair")
    quad = quad or reference_rule(bases[test].size)
    x = quad.nodes
    K = _on_nodes(weight, x, f"weight of block {test}{trial}")
    return weighted_gram(bases[test].values(x), bases[trial].values(x), quad.weights * K)


def project_field(field, basis: BasisFamily, quad: QuadratureRule | None = None) -> np.ndarray:
    """Coefficients ``<field, psi_i>``; the L2-best approximation in the span."""
    quad = quad or reference_rule(basis.size)
    values = _on_nodes(field, quad.nodes, "field")
    return basis.values(quad.nodes) @ (quad.weights * values)


@dataclass(frozen=True, eq=False)
class GalerkinSystem:
    """Data of d(alpha)/dt + A alpha = S(t), alpha(0) = alpha0."""

    m: int
    A: np.ndarray
    alpha0: np.ndarray
    bases: Mapping[str, BasisFamily]
    v_grams: Mapping[str, np.ndarray]
    problem: HomogeneousProblem
    quad: QuadratureRule
    sign_convention: str = "weak-form"

    def slice(self, region: str) -> slice:
        k = REGIONS.index(region)
        return slice(k * self.m, (k + 1) * self.m)

    def block(self, test: str, trial: str) -> np.ndarray:
        return self.A[self.slice(test), self.slice(trial)]

    def source_on_nodes(self, t) -> dict:
        """Shifted source per region at the quadrature nodes; arrays (nq, nt)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = self.quad.nodes[:, None]
        out = {}
        for a in REGIONS:
            vals = evaluate(self.problem.source[a], x, t[None, :])
            out[a] = np.broadcast_to(vals, (x.shape[0], t.size))
        return out

    def source(self, t) -> np.ndarray:
        """Projected source; shape (4m,) for scalar t, (4m, nt) for arrays."""
        scalar = np.ndim(t) == 0
        nodal = self.source_on_nodes(t)
        w = self.quad.weights[:, None]
        out = np.concatenate([self.bases[a].values(self.quad.nodes) @ (w * nodal[a]) for a in REGIONS])
        return out[:, 0] if scalar else out


def _v_gram(region, basis, problem, quad):
    x, w = quad.nodes, quad.weights
    v = basis.values(x)
    dv = basis.values(x, 1)
    E = _on_nodes(problem.E[region], x, f"E_{region}")
    return weighted_gram(dv, dv, w * E) + weighted_gram(v, v, w * problem.reaction_weight(region, x))


def assemble_system(
    problem: HomogeneousProblem,
    m: int,
    quad: QuadratureRule | None = None,
    sign_convention: str = "weak-form",
) -> GalerkinSystem:
    """Assemble the 4m x 4m Galerkin system.

    ``sign_convention="plus-coupling"`` enters the coupling blocks with a plus
    sign instead; it exists only for sensitivity comparisons.
    """
    if sign_convention not in SIGN_CONVENTIONS:
        raise ValueError(f"sign_convention must be one of {SIGN_CONVENTIONS}")
    quad = quad or reference_rule(m)
    bases = {a: build_basis(a, m) for a in REGIONS}
    A = np.zeros((4 * m, 4 * m))
    sl = {a: slice(k * m, (k + 1) * m) for k, a in enumerate(REGIONS)}
    for a in REGIONS:
        A[sl[a], sl[a]] = assemble_diag_block(a, bases[a], problem, quad)
    sign = -1.0 if sign_convention == "weak-form" else 1.0
    for test, trial, j in COUPLINGS:
        A[sl[test], sl[trial]] = sign * assemble_coupling_block((test, trial), problem.K[j], bases, quad)
    alpha0 = np.concatenate([project_field(problem.U0[a], bases[a], quad) for a in REGIONS])
    v_grams = {a: _v_gram(a, bases[a], problem, quad) for a in REGIONS}
    for arr in (A, alpha0, *v_grams.values()):
        arr.setflags(write=False)
    return GalerkinSystem(m, A, alpha0, bases, v_grams, problem, quad, sign_convention)


def dump_debug_csv(system: GalerkinSystem, directory, times=(0.0,)) -> list[Path]:
    """Write A, alpha0 and source samples as (row, col, value) triples.

    For the source the column is the index into ``times``.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sources = system.source(np.asarray(times, dtype=float))
    tables = {
        "A.csv": system.A,
        "alpha0.csv": system.alpha0[:, None],
        "source.csv": sources,
    }
    written = []
    for name, matrix in tables.items():
        path = directory / name
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "value"])
            for (i, j), value in np.ndenumerate(matrix):
                writer.writerow([i, j, repr(float(value))])
        written.append(path)
    return written
