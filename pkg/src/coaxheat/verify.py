"""Independent correctness checks for the Galerkin solver.

* manufactured solutions: pick exact fields, derive the source that makes
  them solve the shifted system,
* a finite-difference method-of-lines solver used as a second discretisation,
* convergence studies in the number of modes and in the time step.
"""

from __future__ import annotations

import csv
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import trapezoid

from .assembly import assemble_system
from .basis import REGIONS
from .expr import BinOp, Expression, Neg, Num, differentiate, evaluate, parse, substitute
from .integrate import SolutionField, reconstruct, solve_trajectory
from .model import COUPLINGS, REACTION_TERMS, HomogeneousProblem


def solver_threads() -> int:
    """Worker cap for parameter sweeps, from ``SOLVER_THREADS``."""
    value = os.environ.get("SOLVER_THREADS")
    if value:
        try:
            return max(1, int(value))
        except ValueError:
            pass
    return os.cpu_count() or 1


# --------------------------------------------------------------------------
# Manufactured solutions


@dataclass(frozen=True, eq=False)
class ManufacturedCase:
    name: str
    exact_U: Mapping[str, Expression]
    problem: HomogeneousProblem

    def exact_field(self, x, times) -> dict:
        """Exact shifted fields, arrays (n_times, n_x)."""
        x = np.asarray(x, dtype=float)[None, :]
        t = np.asarray(times, dtype=float)[:, None]
        return {a: np.broadcast_to(evaluate(self.exact_U[a], x, t), (t.size, x.size)).copy() for a in REGIONS}


def _sum(terms):
    terms = [t for t in terms if not (isinstance(t, Num) and t.value == 0.0)]
    if not terms:
        return Num(0.0)
    out = terms[0]
    for t in terms[1:]:
        out = BinOp("+", out, t)
    return out


def manufactured_source(U: Mapping[str, Expression], E, f_f, f_g, K) -> dict:
    """Source making ``U`` an exact solution of the shifted system.

    S_a = dU_a/dt - d/dx(E_a dU_a/dx) + (F dU/dx)_a - (K(x) U)_a, with
    F = diag(f_f, 0, -f_g, 0).
    """
    speed = {"f": f_f, "s": 0.0, "g": -f_g, "p": 0.0}
    source = {}
    for a in REGIONS:
        ux = differentiate(U[a], "x")
        terms = [differentiate(U[a], "t"), Neg(differentiate(BinOp("*", E[a], ux), "x"))]
        if speed[a]:
            terms.append(BinOp("*", Num(speed[a]), ux))
        for j in REACTION_TERMS[a]:
            terms.append(BinOp("*", K[j], U[a]))
        for test, trial, j in COUPLINGS:
            if test == a:
                terms.append(Neg(BinOp("*", K[j], U[trial])))
        source[a] = _sum(terms)
    return source


_TRIG = {
    "f": "exp(-t)*sin(pi*x/2)",
    "s": "exp(-t)*cos(pi*x)",
    "g": "exp(-t)*sin(pi*(1-x)/2)",
    "p": "exp(-t)*cos(pi*x)",
}

_CATALOG = {
    "decoupled-heat": dict(
        U={"f": "0", "s": "exp(-pi^2*t)*cos(pi*x)", "g": "0", "p": "0"},
        E="1",
        K="0",
        speed=0.0,
    ),
    "coupled-trig": dict(U=_TRIG, E="1", K="1", speed=1.0),
    "variable-E": dict(U=_TRIG, E="1 + x*(1-x)/2", K="1", speed=1.0),
    # fields outside every finite span, so errors fall with m
    "coupled-poly": dict(
        U={
            "f": "exp(-t)*x*(2-x)",
            "s": "exp(-t)*x^2*(3-2*x)",
            "g": "exp(-t)*(1-x^2)",
            "p": "exp(-t)*(1 + x^2*(1-x)^2)",
        },
        E="1 + x*(1-x)/2",
        K="1",
        speed=1.0,
    ),
}

CASES = tuple(_CATALOG)


def build_manufactured(case_id: str, horizon: float = 1.0) -> ManufacturedCase:
    """Shipped manufactured case by name (see :data:`CASES`)."""
    try:
        spec = _CATALOG[case_id]
    except KeyError:
        raise KeyError(f"unknown manufactured case {case_id!r}; known: {list(CASES)}") from None
    U = {a: parse(spec["U"][a]) for a in REGIONS}
    E = {a: parse(spec["E"]) for a in REGIONS}
    K = tuple(parse(spec["K"]) for _ in range(6))
    speed = spec["speed"]
    source = manufactured_source(U, E, speed, speed, K)
    U0 = {a: substitute(U[a], "t", 0.0) for a in REGIONS}
    problem = HomogeneousProblem(E=E, f_f=speed, f_g=speed, K=K, source=source, U0=U0, horizon=horizon)
    return ManufacturedCase(case_id, U, problem)


def _fd4_first(f, z, h):
    return (f(z - 2 * h) - 8 * f(z - h) + 8 * f(z + h) - f(z + 2 * h)) / (12 * h)


def _fd4_second(f, z, h):
    return (-f(z - 2 * h) + 16 * f(z - h) - 30 * f(z) + 16 * f(z + h) - f(z + 2 * h)) / (12 * h * h)


def manufactured_residual(case: ManufacturedCase, x, t, h: float = 1e-3) -> np.ndarray:
    """Pointwise residual of the shifted PDE for the exact fields.

    Derivatives are taken by fourth-order finite differences, independent of
    the symbolic path that built the source.  Returns (4, n_points).
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    p = case.problem
    U = case.exact_U
    speed = {"f": p.f_f, "s": 0.0, "g": -p.f_g, "p": 0.0}
    out = []
    for a in REGIONS:
        u = lambda z, tt=t, e=U[a]: evaluate(e, z, tt)
        ut = _fd4_first(lambda s, e=U[a]: evaluate(e, x, s), t, h)
        ux = _fd4_first(u, x, h)
        uxx = _fd4_second(u, x, h)
        E = evaluate(p.E[a], x, t)
        Ex = _fd4_first(lambda z, e=p.E[a]: evaluate(e, z, t), x, h)
        rhs = E * uxx + Ex * ux - speed[a] * ux + evaluate(p.source[a], x, t)
        for j in REACTION_TERMS[a]:
            rhs = rhs - evaluate(p.K[j], x, t) * evaluate(U[a], x, t)
        for test, trial, j in COUPLINGS:
            if test == a:
                rhs = rhs + evaluate(p.K[j], x, t) * evaluate(U[trial], x, t)
        out.append(ut - rhs)
    return np.array(out)


# --------------------------------------------------------------------------
# Finite-difference oracle


def fd_operator(problem: HomogeneousProblem, n: int):
    """Sparse M with dU/dt = M U + s(t) on n+1 uniform nodes per region.

    Unknowns are stacked region by region.  Diffusion is conservative with
    face values of E; zero-flux ends use a mirrored ghost node; the inlet
    nodes (f at x=0, g at x=1) are pinned to zero.
    """
    if n < 8:
        raise ValueError(f"need at least 8 grid intervals, got {n}")
    h = 1.0 / n
    x = np.linspace(0.0, 1.0, n + 1)
    faces = 0.5 * (x[:-1] + x[1:])
    N = n + 1
    blocks = [[None] * 4 for _ in range(4)]
    pinned = {"f": 0, "g": n}
    speed = {"f": problem.f_f, "s": 0.0, "g": -problem.f_g, "p": 0.0}
    for k, a in enumerate(REGIONS):
        Ef = np.broadcast_to(evaluate(problem.E[a], faces, 0.0), faces.shape)
        emin = float(np.min(np.broadcast_to(evaluate(problem.E[a], x, 0.0), x.shape)))
        if speed[a] and abs(speed[a]) * h / (2 * emin) > 1:
            warnings.warn(f"cell Peclet number above 1 in region {a}; central convection may oscillate")
        lower = np.zeros(N - 1)  # coefficient of u_{i-1} in row i  (rows 1..n)
        upper = np.zeros(N - 1)  # coefficient of u_{i+1} in row i  (rows 0..n-1)
        diag = np.zeros(N)
        # interior rows
        lower[:] = Ef / h**2
        upper[:] = Ef / h**2
        diag[1:-1] = -(Ef[1:] + Ef[:-1]) / h**2
        # mirrored ends
        upper[0] = 2 * Ef[0] / h**2
        diag[0] = -2 * Ef[0] / h**2
        lower[-1] = 2 * Ef[-1] / h**2
        diag[-1] = -2 * Ef[-1] / h**2
        if speed[a]:
            c = speed[a] / (2 * h)
            # -speed * du/dx, central; zero at mirrored ends
            lower[:-1] += c
            upper[1:] -= c
        diag -= problem.reaction_weight(a, x)
        D = sp.diags([lower, diag, upper], [-1, 0, 1], shape=(N, N), format="lil")
        if a in pinned:
            D[pinned[a], :] = 0.0
        blocks[k][k] = D.tocsr()
    for test, trial, j in COUPLINGS:
        kv = np.broadcast_to(evaluate(problem.K[j], x, 0.0), x.shape).copy()
        if test in pinned:
            kv[pinned[test]] = 0.0
        blocks[REGIONS.index(test)][REGIONS.index(trial)] = sp.diags(kv)
    M = sp.bmat(blocks, format="csc")
    return M, x, pinned


def fd_oracle_solve(problem: HomogeneousProblem, n: int, dt: float, T: float, store_every: int = 1) -> SolutionField:
    """Method-of-lines reference solution with Crank-Nicolson in time."""
    M, x, pinned = fd_operator(problem, n)
    N = n + 1
    u0 = np.concatenate([np.broadcast_to(evaluate(problem.U0[a], x, 0.0), x.shape) for a in REGIONS]).astype(float)
    for a, i in pinned.items():
        u0[REGIONS.index(a) * N + i] = 0.0
    mask = np.ones(4 * N)
    for a, i in pinned.items():
        mask[REGIONS.index(a) * N + i] = 0.0

    def source(ts):
        vals = [np.broadcast_to(evaluate(problem.source[a], x[:, None], ts[None, :]), (N, ts.size)) for a in REGIONS]
        return np.concatenate(vals) * mask[:, None]

    n_steps = max(1, int(round(T / dt)))
    h = T / n_steps
    eye = sp.identity(4 * N, format="csc")
    solve = spla.factorized((eye - 0.5 * h * M).tocsc())
    explicit = (eye + 0.5 * h * M).tocsr()
    mids = h * (np.arange(n_steps) + 0.5)
    stored_t, stored_u = [0.0], [u0.copy()]
    u = u0
    chunk = 512
    for start in range(0, n_steps, chunk):
        src = source(mids[start : start + chunk])
        for k in range(src.shape[1]):
            u = solve(explicit @ u + h * src[:, k])
            step = start + k + 1
            if step % store_every == 0 or step == n_steps:
                stored_t.append(step * h if step < n_steps else T)
                stored_u.append(u.copy())
    U = np.array(stored_u)
    values = {a: U[:, k * N : (k + 1) * N] for k, a in enumerate(REGIONS)}
    return SolutionField(x, np.array(stored_t), values, shifted=True)


# --------------------------------------------------------------------------
# Field comparison and convergence


def _space_time_l2(sq, x, t):
    """sqrt of the trapezoid integral of ``sq`` over (t, x); space-only if one time."""
    inner = trapezoid(sq, x, axis=1)
    if len(t) < 2:
        return math.sqrt(float(inner.sum()))
    return math.sqrt(float(trapezoid(inner, t)))


def field_norm(a: SolutionField) -> float:
    sq = sum(np.asarray(a.values[r]) ** 2 for r in REGIONS)
    return _space_time_l2(sq, a.x_grid, a.times)


def compare_fields(a: SolutionField, b: SolutionField) -> tuple[float, float]:
    """Space-time L2 (trapezoid, summed over regions) and max-abs discrepancy."""
    if a.x_grid.shape != b.x_grid.shape or not np.allclose(a.x_grid, b.x_grid, rtol=0, atol=1e-14):
        raise ValueError("x grids differ; resample upstream")
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("time grids differ; resample upstream")
    diff = {r: np.asarray(a.values[r]) - np.asarray(b.values[r]) for r in REGIONS}
    sq = sum(d**2 for d in diff.values())
    linf = max(float(np.max(np.abs(d))) for d in diff.values())
    return _space_time_l2(sq, a.x_grid, a.times), linf


@dataclass
class ConvergenceTable:
    """Rows of (parameter, error, observed rate); the first rate is None."""

    param_name: str
    params: list
    errors: list
    rates: list = field(default_factory=list)
    reference: str = "exact"

    def __post_init__(self):
        if not self.rates:
            self.rates = observed_rates(self.params, self.errors, self.param_name)

    @property
    def rows(self):
        return list(zip(self.params, self.errors, self.rates))

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["param", "error", "rate"])
            for p, e, r in self.rows:
                writer.writerow([repr(p), repr(float(e)), "" if r is None else repr(float(r))])
        return path

    def to_text(self) -> str:
        lines = [f"{self.param_name:>10}  {'error':>12}  {'rate':>6}"]
        for p, e, r in self.rows:
            rate = "" if r is None else f"{r:6.2f}"
            lines.append(f"{p!s:>10}  {e:12.4e}  {rate:>6}")
        return "\n".join(lines)


def observed_rates(params, errors, param_name="m"):
    """Rate between consecutive rows, log(e_k/e_{k+1}) / log(refinement)."""
    rates = [None]
    for k in range(1, len(params)):
        refine = params[k] / params[k - 1] if param_name == "m" else params[k - 1] / params[k]
        e0, e1 = errors[k - 1], errors[k]
        if e0 > 0 and e1 > 0 and refine != 1:
            rates.append(math.log(e0 / e1) / math.log(refine))
        else:
            rates.append(float("nan"))
    return rates


def _eval_stride(n_steps: int, n_eval: int) -> int:
    if n_steps > n_eval and n_steps % n_eval == 0:
        return n_steps // n_eval
    return 1


def galerkin_field(problem, m, dt, T, scheme, x, n_eval_times=50):
    system = assemble_system(problem, m)
    traj = solve_trajectory(system, T, dt, scheme)
    stride = _eval_stride(len(traj) - 1, n_eval_times)
    traj = type(traj)(traj.times[::stride], traj.states[::stride], traj.scheme, traj.dt, system)
    return reconstruct(traj, system, x)


def convergence_study(
    case,
    m_list,
    dt_list,
    reference: str = "exact",
    scheme: str = "crank-nicolson",
    T: float | None = None,
    n_eval_x: int = 201,
    n_eval_times: int = 50,
    oracle_n: int = 256,
    vary: str | None = None,
) -> ConvergenceTable:
    """Space-time L2 error of Galerkin solutions against a reference.

    ``case`` is a case id or :class:`ManufacturedCase`; with
    ``reference="oracle"`` a :class:`HomogeneousProblem` is accepted too.  If
    ``m_list`` has one entry the study runs over ``dt_list``; if ``dt_list``
    has one entry it runs over ``m_list``; otherwise the lists are paired.
    ``vary="m"`` or ``vary="dt"`` forces the study parameter when both lists
    have one entry.
    """
    if isinstance(case, str):
        case = build_manufactured(case)
    problem = case.problem if isinstance(case, ManufacturedCase) else case
    if reference == "exact" and not isinstance(case, ManufacturedCase):
        raise ValueError("an exact reference needs a manufactured case")
    if reference not in ("exact", "oracle"):
        raise ValueError("reference must be 'exact' or 'oracle'")
    m_list, dt_list = list(m_list), list(dt_list)
    if not m_list or not dt_list:
        raise ValueError("m_list and dt_list must be non-empty")
    T = problem.horizon if T is None else T
    if vary == "m" and len(dt_list) == 1:
        name, runs = "m", [(m, dt_list[0]) for m in m_list]
    elif len(m_list) == 1:
        name, runs = "dt", [(m_list[0], dt) for dt in dt_list]
    elif len(dt_list) == 1:
        name, runs = "m", [(m, dt_list[0]) for m in m_list]
    else:
        if len(m_list) != len(dt_list):
            raise ValueError("paired studies need lists of equal length")
        name, runs = "m", list(zip(m_list, dt_list))

    if reference == "oracle":
        x = np.linspace(0.0, 1.0, oracle_n + 1)
    else:
        x = np.linspace(0.0, 1.0, n_eval_x)

    def run(md):
        m, dt = md
        approx = galerkin_field(problem, m, dt, T, scheme, x, n_eval_times)
        if reference == "exact":
            exact = SolutionField(x, approx.times, case.exact_field(x, approx.times))
        else:
            n_steps = max(1, int(round(T / dt)))
            exact = fd_oracle_solve(problem, oracle_n, dt, T, store_every=_eval_stride(n_steps, n_eval_times))
        return compare_fields(approx, exact)[0]

    with ThreadPoolExecutor(max_workers=min(solver_threads(), len(runs))) as pool:
        errors = list(pool.map(run, runs))
    params = [r[0] if name == "m" else r[1] for r in runs]
    return ConvergenceTable(name, params, errors, reference=reference)


# bands for observed temporal rates, per scheme
RATE_BANDS = {"crank-nicolson": (1.8, 2.2), "backward-euler": (0.8, 1.2)}
# errors below this are at the time-step floor of an m-study
PLATEAU_FLOOR = 1e-8


def assess_table(table: ConvergenceTable, scheme: str) -> tuple[bool, str]:
    """Pass/fail verdict for a convergence table.

    An m-study passes when every error is below its predecessor or already
    at :data:`PLATEAU_FLOOR` (exactly representable fields stall at the
    time-discretisation error).  A dt-study passes when every observed rate
    lies in the band of :data:`RATE_BANDS`; the exponential scheme has no
    band and is reported only.  Tables with one row pass with no rate.
    """
    if len(table.errors) < 2:
        return True, "single row, no rate"
    errs = table.errors
    if table.param_name == "m":
        stalled = [k for k in range(1, len(errs)) if not errs[k] < errs[k - 1]]
        bad = [k for k in stalled if errs[k] > PLATEAU_FLOOR]
        if bad:
            return False, f"error does not decrease at m={table.params[bad[0]]}"
        if stalled:
            return True, f"plateau below {PLATEAU_FLOOR:g} from m={table.params[stalled[0]]}"
        return True, "strictly decreasing"
    band = RATE_BANDS.get(scheme)
    rates = [r for r in table.rates[1:]]
    if band is None:
        return True, "rates reported only for " + scheme
    outside = [r for r in rates if not band[0] <= r <= band[1]]
    if outside:
        return False, f"rate {outside[0]:.3f} outside [{band[0]}, {band[1]}]"
    return True, f"rates within [{band[0]}, {band[1]}]"
