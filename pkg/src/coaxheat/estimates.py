"""Norms, explicit constants and discrete checks of the a priori estimates.

The constants are the ones produced by the Young-inequality bookkeeping of
the energy argument, with sup-norms of the exchange coefficients:

    M1 = max(K1, K2 + K3, K4 + K5, K6),   M2 = M3 = 1/2,
    C1 = 2 (M1 + M2),   C2 = 2 M3,   kappa = 2 M1.

The coercivity constants are beta = 1, gamma = 0 for every region, because on
the trial spaces <u', u> = u(1)^2 / 2 for the fluid and -<w', w> = w(0)^2 / 2
for the gas.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .basis import REGIONS, weighted_gram
from .expr import differentiate, evaluate
from .model import HomogeneousProblem, validation_grid
from .quadrature import QuadratureRule


@dataclass(frozen=True)
class EnergyConstants:
    beta_f: float
    beta_g: float
    gamma_f: float
    gamma_g: float
    M1: float
    M2: float
    M3: float
    C1: float
    C2: float
    kappa: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class EnergyReport:
    times: np.ndarray
    h2_norm_sq: np.ndarray
    v_norm_sq: np.ndarray
    source_norm_sq: np.ndarray
    dissipation_residual: np.ndarray | None = None
    dissipation_bound: np.ndarray | None = None
    gronwall_bound: np.ndarray | None = None
    gronwall_margin: float | None = None
    weak_residual: float | None = None
    # series at step midpoints, from the averaged states; length n_times - 1
    mid_h2_norm_sq: np.ndarray | None = None
    mid_v_norm_sq: np.ndarray | None = None
    mid_source_norm_sq: np.ndarray | None = None

    def to_csv(self, path) -> Path:
        """Columns ``t, h2_norm_sq, v_norm_sq, source_norm_sq, dissipation_residual``.

        The residual is undefined at t = 0 and left empty there.
        """
        path = Path(path)
        res = self.dissipation_residual
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "h2_norm_sq", "v_norm_sq", "source_norm_sq", "dissipation_residual"])
            for n, t in enumerate(self.times):
                r = "" if res is None or not np.isfinite(res[n]) else repr(float(res[n]))
                writer.writerow(
                    [repr(float(t)), repr(float(self.h2_norm_sq[n])), repr(float(self.v_norm_sq[n])),
                     repr(float(self.source_norm_sq[n])), r]
                )
        return path


def derive_constants(problem: HomogeneousProblem, quad: QuadratureRule | None = None, grid_points: int = 257) -> EnergyConstants:
    """Explicit constants from sup-norms of K_j on the validation grid.

    If a quadrature rule is given its nodes are sampled too, so the sup covers
    every point the assembled matrices see.
    """
    x = validation_grid(grid_points)
    if quad is not None:
        x = np.concatenate([x, quad.nodes])
    sup = [float(np.max(np.broadcast_to(evaluate(k, x, 0.0), x.shape))) for k in problem.K]
    sup = [max(s, 0.0) for s in sup]
    M1 = max(sup[0], sup[1] + sup[2], sup[3] + sup[4], sup[5])
    M2 = M3 = 0.5
    return EnergyConstants(
        beta_f=1.0,
        beta_g=1.0,
        gamma_f=0.0,
        gamma_g=0.0,
        M1=M1,
        M2=M2,
        M3=M3,
        C1=2.0 * (M1 + M2),
        C2=2.0 * M3,
        kappa=2.0 * M1,
    )


def _v_norm_sq(states, system):
    total = np.zeros(states.shape[0])
    for a in REGIONS:
        c = states[:, system.slice(a)]
        total += np.einsum("ni,ij,nj->n", c, system.v_grams[a], c)
    return total


def source_norm_sq(system, times) -> np.ndarray:
    """||S(., t)||^2 summed over regions, by the system's quadrature rule."""
    nodal = system.source_on_nodes(times)
    return sum(system.quad.weights @ (nodal[a] ** 2) for a in REGIONS)


def _sq_norms(states) -> np.ndarray:
    # row-wise dot, the same reduction used for alpha0, so t = 0 margins are exact
    return np.array([float(row @ row) for row in states])


def norms(traj, system) -> EnergyReport:
    """Norm series of a trajectory: H2 (= |alpha|^2), V and source norms."""
    states = np.asarray(traj.states)
    if states.ndim != 2 or states.shape[1] != 4 * system.m:
        raise ValueError(f"states of shape {states.shape} do not match a system with m={system.m}")
    times = np.asarray(traj.times, dtype=float)
    mid = 0.5 * (states[1:] + states[:-1])
    return EnergyReport(
        times=times,
        h2_norm_sq=_sq_norms(states),
        v_norm_sq=_v_norm_sq(states, system),
        source_norm_sq=source_norm_sq(system, times),
        mid_h2_norm_sq=np.einsum("ni,ni->n", mid, mid),
        mid_v_norm_sq=_v_norm_sq(mid, system),
        mid_source_norm_sq=source_norm_sq(system, 0.5 * (times[1:] + times[:-1])),
    )


def check_energy_inequality(
    report: EnergyReport,
    constants: EnergyConstants,
    dt: float | None = None,
    stencil: str = "backward",
) -> float:
    """Minimum over steps of C1 h2 + C2 |S|^2 - (dh2/dt + |U|_V^2).

    With ``stencil="backward"`` the time derivative is a backward difference
    and every other term is taken at the new time level; backward-Euler
    trajectories satisfy this step by step.  ``stencil="midpoint"`` takes the
    norms of the averaged state and the source at the step midpoint, the
    level at which Crank-Nicolson satisfies it.  Fills
    ``report.dissipation_residual`` (NaN at t = 0).

    Returns
    -------
    float
        The smallest residual; ``report.dissipation_bound`` holds the
        matching right-hand sides for a relative tolerance.
    """
    t = report.times
    if dt is None:
        dt = float(t[1] - t[0])
    h2 = report.h2_norm_sq
    if stencil == "backward":
        v, src, level = report.v_norm_sq[1:], report.source_norm_sq[1:], h2[1:]
    elif stencil == "midpoint":
        if report.mid_h2_norm_sq is None:
            raise ValueError("report has no midpoint series")
        v, src, level = report.mid_v_norm_sq, report.mid_source_norm_sq, report.mid_h2_norm_sq
    else:
        raise ValueError(f"stencil must be 'backward' or 'midpoint', got {stencil!r}")
    bound = np.full(t.size, np.nan)
    bound[1:] = constants.C1 * level + constants.C2 * src
    residual = np.full(t.size, np.nan)
    residual[1:] = bound[1:] - (np.diff(h2) / dt + v)
    report.dissipation_residual = residual
    report.dissipation_bound = bound
    return float(np.min(residual[1:]))


def stencil_for(scheme: str) -> str:
    """Energy-check stencil under which ``scheme`` satisfies the inequality."""
    return "midpoint" if scheme == "crank-nicolson" else "backward"


def gronwall_envelope(report: EnergyReport, constants: EnergyConstants, h2_initial: float) -> np.ndarray:
    """exp(C1 t) (||U(0)||^2 + C2 int_0^t ||S||^2), integral by trapezoid."""
    t = report.times
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (report.source_norm_sq[1:] + report.source_norm_sq[:-1]))])
    return np.exp(constants.C1 * t) * (h2_initial + constants.C2 * integral)


def check_gronwall_bound(report: EnergyReport, constants: EnergyConstants, alpha0=None, T: float | None = None) -> float:
    """Minimum over [0, T] of the Gronwall envelope minus ||U(t)||^2."""
    alpha0 = None if alpha0 is None else np.asarray(alpha0, dtype=float)
    h2_initial = float(alpha0 @ alpha0) if alpha0 is not None else float(report.h2_norm_sq[0])
    bound = gronwall_envelope(report, constants, h2_initial)
    keep = slice(None) if T is None else report.times <= T * (1 + 1e-12)
    margin = float(np.min((bound - report.h2_norm_sq)[keep]))
    report.gronwall_bound = bound
    report.gronwall_margin = margin
    return margin


def contraction_series(trajA, trajB, constants: EnergyConstants):
    """(t, d(t), exp(kappa t) d(0)) for the squared state distance d."""
    if trajA.system is not None and trajB.system is not None and trajA.system is not trajB.system:
        raise ValueError("trajectories come from different Galerkin systems")
    if trajA.times.shape != trajB.times.shape or not np.array_equal(trajA.times, trajB.times):
        raise ValueError("trajectories have different time grids")
    if trajA.states.shape != trajB.states.shape:
        raise ValueError("trajectories have different state sizes")
    diff = trajA.states - trajB.states
    d = np.einsum("ni,ni->n", diff, diff)
    bound = np.exp(constants.kappa * trajA.times) * d[0]
    return trajA.times, d, bound


def check_contraction(trajA, trajB, constants: EnergyConstants) -> float:
    """Minimum over t of exp(kappa t) d(0) - d(t)."""
    _, d, bound = contraction_series(trajA, trajB, constants)
    return float(np.min(bound - d))


def weak_residual(traj, system) -> float:
    """max_n |(a_{n+1} - a_n)/dt + A (a_n + a_{n+1})/2 - S(t_{n+1/2})|."""
    states = traj.states
    t = traj.times
    if states.shape[0] < 2:
        return 0.0
    dt = np.diff(t)
    mids = 0.5 * (t[1:] + t[:-1])
    avg = 0.5 * (states[1:] + states[:-1])
    res = np.diff(states, axis=0) / dt[:, None] + avg @ system.A.T - system.source(mids).T
    return float(np.max(np.linalg.norm(res, axis=1)))


@dataclass(frozen=True)
class RegularityReport:
    sup_v_norm: float
    dt_l2_h2: float
    h2_space_l2_time: float
    source_l2: float
    initial_v_norm: float
    rhs: float
    ratio: float

    def as_dict(self) -> dict:
        return asdict(self)


def initial_v_norm(problem: HomogeneousProblem, quad: QuadratureRule) -> float:
    """V-norm of the exact shifted initial fields."""
    x, w = quad.nodes, quad.weights
    total = 0.0
    for a in REGIONS:
        u = np.broadcast_to(evaluate(problem.U0[a], x, 0.0), x.shape)
        ux = np.broadcast_to(evaluate(differentiate(problem.U0[a], "x"), x, 0.0), x.shape)
        E = np.broadcast_to(evaluate(problem.E[a], x, 0.0), x.shape)
        total += float(w @ (E * ux**2 + problem.reaction_weight(a, x) * u**2))
    return math.sqrt(total)


def h2_grams(system) -> dict:
    """Per region, Gram of the full H2(0,1) norm ||u||^2 + ||u'||^2 + ||u''||^2."""
    x, w = system.quad.nodes, system.quad.weights
    out = {}
    for a in REGIONS:
        b = system.bases[a]
        out[a] = sum(weighted_gram(b.values(x, k), b.values(x, k), w) for k in (0, 1, 2))
    return out


def regularity_report(traj, system, problem: HomogeneousProblem | None = None, quad=None) -> RegularityReport:
    """Norms in the gain-of-regularity estimate.

    ``dt_l2_h2`` uses d(alpha)/dt = -A alpha + S(t) from the ODE;
    ``ratio`` is the left-hand side over ||S||_{L2(0,T;H2)} + ||U0||_V and is
    reported, not bounded.
    """
    problem = problem or system.problem
    quad = quad or system.quad
    states = traj.states
    t = traj.times
    sup_v = math.sqrt(float(np.max(_v_norm_sq(states, system))))
    rate = -states @ system.A.T + system.source(t).T
    dt_l2 = math.sqrt(float(trapezoid(np.einsum("ni,ni->n", rate, rate), t)))
    grams = h2_grams(system)
    h2_series = sum(np.einsum("ni,ij,nj->n", states[:, system.slice(a)], grams[a], states[:, system.slice(a)]) for a in REGIONS)
    h2_l2 = math.sqrt(float(trapezoid(h2_series, t)))
    src_l2 = math.sqrt(float(trapezoid(source_norm_sq(system, t), t)))
    v0 = initial_v_norm(problem, quad)
    rhs = src_l2 + v0
    lhs = sup_v + h2_l2 + dt_l2
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    return RegularityReport(sup_v, dt_l2, h2_l2, src_l2, v0, rhs, ratio)
