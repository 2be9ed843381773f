"""Problem data for the four-region exchanger and the inlet shift.

Regions are ``f`` (fluid), ``s`` (separating wall), ``g`` (gas) and ``p``
(insulating wall).  Temperatures ``T`` satisfy

    dT/dt = d/dx(E dT/dx) - F dT/dx + K(x) T + S

on (0, 1) with inlet values ``T_f(0) = f_0``, ``T_g(1) = g_0`` and zero flux at
the other ends.  Subtracting ``(f_0, 0, g_0, 0)`` gives a problem for
``U = T - (f_0, 0, g_0, 0)`` with homogeneous inlet conditions and a modified
source; that is the form the Galerkin solver works on.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .basis import REGIONS
from .expr import BinOp, EvaluationError, Expression, ExpressionLike, Num, as_expression, evaluate

log = logging.getLogger(__name__)

# (test region, trial region, index into K) for each off-diagonal entry of K(x)
COUPLINGS = (
    ("f", "s", 0),
    ("s", "f", 1),
    ("s", "g", 2),
    ("g", "s", 3),
    ("g", "p", 4),
    ("p", "g", 5),
)
# K indices summed on the diagonal of K(x), per region
REACTION_TERMS = {"f": (0,), "s": (1, 2), "g": (3, 4), "p": (5,)}

PROBLEM_KEYS = (
    *(f"E_{a}" for a in REGIONS),
    "f_f",
    "f_g",
    *(f"K_{j}" for j in range(1, 7)),
    *(f"S_{a}" for a in REGIONS),
    "f_0",
    "g_0",
    *(f"T0_{a}" for a in REGIONS),
    "horizon",
)


class ProblemError(ValueError):
    """Missing data or a violated hypothesis on the coefficients."""


def _frozen(mapping):
    return MappingProxyType(dict(mapping))


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """Full data of the unshifted system."""

    E: Mapping[str, Expression]
    f_f: float
    f_g: float
    K: tuple
    S: Mapping[str, Expression]
    f_0: float
    g_0: float
    T0: Mapping[str, Expression]
    horizon: float


@dataclass(frozen=True, eq=False)
class HomogeneousProblem:
    """Shifted problem with homogeneous inlet conditions.

    ``source`` holds the four shifted source components as expressions in
    ``x`` and ``t``; ``U0`` the shifted initial fields.  ``f_0`` and ``g_0`` are
    kept so solutions can be mapped back to temperatures.
    """

    E: Mapping[str, Expression]
    f_f: float
    f_g: float
    K: tuple
    source: Mapping[str, Expression]
    U0: Mapping[str, Expression]
    f_0: float = 0.0
    g_0: float = 0.0
    horizon: float = 1.0
    warnings: tuple = field(default=())

    def __post_init__(self):
        for name in ("E", "source", "U0"):
            mapping = getattr(self, name)
            missing = [a for a in REGIONS if a not in mapping]
            if missing:
                raise ProblemError(f"{name} is missing regions {missing}")
            object.__setattr__(self, name, _frozen({a: as_expression(mapping[a]) for a in REGIONS}))
        if len(self.K) != 6:
            raise ProblemError(f"expected 6 exchange coefficients, got {len(self.K)}")
        object.__setattr__(self, "K", tuple(as_expression(k) for k in self.K))
        if self.f_f < 0 or self.f_g < 0:
            raise ProblemError("convection speeds must be non-negative")

    def reaction_weight(self, region: str, x) -> np.ndarray:
        """Diagonal reaction coefficient of ``region`` (e.g. K_2 + K_3 for s)."""
        x = np.asarray(x, dtype=float)
        return sum(np.broadcast_to(evaluate(self.K[j], x, 0.0), x.shape) for j in REACTION_TERMS[region])

    def with_source(self, source: Mapping[str, ExpressionLike]) -> "HomogeneousProblem":
        return HomogeneousProblem(
            self.E, self.f_f, self.f_g, self.K, source, self.U0, self.f_0, self.g_0, self.horizon, self.warnings
        )


def validation_grid(points: int = 257) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


def _sample(name: str, expr: Expression, x, t=0.0) -> np.ndarray:
    try:
        values = evaluate(expr, x, t)
    except EvaluationError as exc:
        raise ProblemError(f"{name} cannot be evaluated on the validation grid: {exc}") from exc
    values = np.broadcast_to(values, np.broadcast_shapes(np.shape(x), np.shape(t)))
    if not np.all(np.isfinite(values)):
        raise ProblemError(f"{name} is not finite on the validation grid")
    return values


def _first_violation(name, values, x, relation, bound, t=None):
    bad = np.argwhere(~relation(values, bound))
    if bad.size:
        idx = tuple(bad[0])
        where = f"x = {float(np.broadcast_to(x, values.shape)[idx]):g}"
        if t is not None:
            where += f", t = {float(np.broadcast_to(t, values.shape)[idx]):g}"
        raise ProblemError(f"{name} = {values[idx]:g} violates {name} {relation.__name__} {bound:g} at {where}")


def _ge(a, b):
    return a >= b


_ge.__name__ = ">="


def build_problem(config: Mapping[str, object], eps_E: float = 1e-8, grid_points: int = 257) -> ProblemSpec:
    """Build and validate a :class:`ProblemSpec` from flat key/value config.

    Values are numbers or expression strings.  Hypotheses are checked by
    sampling on ``grid_points`` uniform points in [0, 1] (and 65 times in
    [0, horizon] for the sources).

    Raises
    ------
    ProblemError
        On unknown or missing keys, or a violated hypothesis; the message
        names the coefficient and the first offending grid point.
    """
    unknown = sorted(set(config) - set(PROBLEM_KEYS))
    if unknown:
        raise ProblemError(f"unknown problem keys: {unknown}")
    missing = [k for k in PROBLEM_KEYS if k not in config]
    if missing:
        raise ProblemError(f"missing problem keys: {missing}")

    def expr(key):
        try:
            return as_expression(config[key])
        except (ValueError, TypeError) as exc:
            raise ProblemError(f"{key}: {exc}") from exc

    def positive(key):
        try:
            value = float(config[key])
        except (TypeError, ValueError) as exc:
            raise ProblemError(f"{key} must be a number, got {config[key]!r}") from exc
        if not value > 0:
            raise ProblemError(f"{key} must be > 0, got {value:g}")
        return value

    x = validation_grid(grid_points)
    E = {a: expr(f"E_{a}") for a in REGIONS}
    for a, e in E.items():
        _first_violation(f"E_{a}", _sample(f"E_{a}", e, x), x, _ge, eps_E)
    K = tuple(expr(f"K_{j}") for j in range(1, 7))
    for j, k in enumerate(K, start=1):
        _first_violation(f"K_{j}", _sample(f"K_{j}", k, x), x, _ge, 0.0)
    horizon = positive("horizon")
    tt = np.linspace(0.0, horizon, 65)[None, :]
    xx = x[:, None]
    S = {a: expr(f"S_{a}") for a in REGIONS}
    for a, s in S.items():
        _first_violation(f"S_{a}", _sample(f"S_{a}", s, xx, tt), xx, _ge, 0.0, t=tt)
    T0 = {a: expr(f"T0_{a}") for a in REGIONS}
    for a, e in T0.items():
        _first_violation(f"T0_{a}", _sample(f"T0_{a}", e, x), x, _ge, 0.0)
    return ProblemSpec(
        E=_frozen(E),
        f_f=positive("f_f"),
        f_g=positive("f_g"),
        K=K,
        S=_frozen(S),
        f_0=positive("f_0"),
        g_0=positive("g_0"),
        T0=_frozen(T0),
        horizon=horizon,
    )


def _plus(a, b):
    return BinOp("+", a, b)


def _times(c, e):
    return BinOp("*", Num(float(c)), e)


def shift_to_homogeneous(p: ProblemSpec, tol: float = 1e-10) -> HomogeneousProblem:
    """Subtract the inlet temperatures and build the shifted source.

    A mismatch between the initial fields and the inlet values is recorded in
    ``HomogeneousProblem.warnings`` rather than raised.
    """
    K1, K2, K3, K4, K5, K6 = p.K
    source = {
        "f": _plus(_times(-p.f_0, K1), p.S["f"]),
        "s": _plus(_plus(_times(p.f_0, K2), _times(p.g_0, K3)), p.S["s"]),
        "g": _plus(_times(-p.g_0, _plus(K4, K5)), p.S["g"]),
        "p": _plus(_times(p.g_0, K6), p.S["p"]),
    }
    U0 = {
        "f": BinOp("-", p.T0["f"], Num(p.f_0)),
        "s": p.T0["s"],
        "g": BinOp("-", p.T0["g"], Num(p.g_0)),
        "p": p.T0["p"],
    }
    notes = []
    for region, edge in (("f", 0.0), ("g", 1.0)):
        value = evaluate(U0[region], edge, 0.0)
        if abs(value) > tol:
            inlet = "f_0" if region == "f" else "g_0"
            msg = f"T0_{region}({edge:g}) differs from {inlet} by {value:g}; initial data incompatible with the inlet"
            log.warning(msg)
            notes.append(msg)
    return HomogeneousProblem(
        E=p.E,
        f_f=p.f_f,
        f_g=p.f_g,
        K=p.K,
        source=source,
        U0=U0,
        f_0=p.f_0,
        g_0=p.g_0,
        horizon=p.horizon,
        warnings=tuple(notes),
    )


def unshift(U_values: Mapping[str, np.ndarray], p) -> dict:
    """Map shifted fields back to temperatures: add f_0 to f and g_0 to g."""
    offsets = {"f": p.f_0, "s": 0.0, "g": p.g_0, "p": 0.0}
    return {a: np.asarray(U_values[a], dtype=float) + offsets[a] for a in REGIONS}
