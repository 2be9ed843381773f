"""Fixed-step integration of d(alpha)/dt + A alpha = S(t) and field reconstruction."""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
import scipy.linalg as sla

from .basis import REGIONS
from .model import unshift as _unshift

SCHEMES = ("backward-euler", "crank-nicolson", "exponential")

# 4-point Gauss-Legendre on (0, 1) for the variation-of-constants integral
_G4_NODES, _G4_WEIGHTS = np.polynomial.legendre.leggauss(4)
_G4_NODES = 0.5 * (_G4_NODES + 1.0)
_G4_WEIGHTS = 0.5 * _G4_WEIGHTS


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class CoefficientTrajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, 4m)
    scheme: str
    dt: float
    system: object = None

    def __len__(self):
        return self.times.size


@dataclass(frozen=True, eq=False)
class SolutionField:
    x_grid: np.ndarray
    times: np.ndarray
    values: Mapping[str, np.ndarray]  # region -> (n_times, n_x)
    shifted: bool = True

    def to_csv(self, path) -> Path:
        """Rows ``t, x, T_f, T_s, T_g, T_p`` in time-major order."""
        path = Path(path)
        names = ["t", "x"] + [f"T_{a}" for a in REGIONS]
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for n, t in enumerate(self.times):
                for k, x in enumerate(self.x_grid):
                    row = [t, x] + [self.values[a][n, k] for a in REGIONS]
                    writer.writerow([repr(float(v)) for v in row])
        return path

    def to_json(self, path) -> Path:
        path = Path(path)
        payload = {
            "t": self.times.tolist(),
            "x": self.x_grid.tolist(),
            "shifted": self.shifted,
            "values": {f"T_{a}": self.values[a].tolist() for a in REGIONS},
        }
        path.write_text(json.dumps(payload))
        return path


def _step_count(T: float, dt: float) -> int:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if T < dt * (1 - 1e-12):
        raise ValueError(f"horizon T={T} is shorter than one step dt={dt}")
    return max(1, int(round(T / dt)))


def _check_finite(state, n):
    if not np.all(np.isfinite(state)):
        raise IntegrationError(f"non-finite state at step {n}")


def _lu(matrix, dt):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(matrix, check_finite=True)
    if np.any(np.abs(np.diag(lu)) <= np.finfo(float).eps * np.abs(lu).max() * matrix.shape[0]):
        raise IntegrationError(f"step matrix is singular for dt={dt}")
    return lu, piv


def solve_linear(A, source, alpha0, T: float, dt: float, scheme: str = "crank-nicolson"):
    """Integrate d(alpha)/dt + A alpha = source(t) from alpha(0) = alpha0.

    ``source`` maps an array of times to an array (n, len(times)); ``None``
    means zero.  Returns ``(times, states)``.  The effective step is
    T / round(T / dt).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    alpha0 = np.atleast_1d(np.asarray(alpha0, dtype=float))
    n_steps = _step_count(T, dt)
    h = T / n_steps
    times = h * np.arange(n_steps + 1)
    times[-1] = T
    size = alpha0.size
    eye = np.eye(size)

    def sources_at(ts):
        if source is None:
            return np.zeros((size, ts.size))
        return np.asarray(source(ts), dtype=float).reshape(size, ts.size)

    states = np.empty((n_steps + 1, size))
    states[0] = alpha0

    if scheme == "backward-euler":
        lu = _lu(eye + h * A, h)
        rhs_src = h * sources_at(times[1:])
        for n in range(n_steps):
            states[n + 1] = sla.lu_solve(lu, states[n] + rhs_src[:, n], check_finite=False)
            _check_finite(states[n + 1], n + 1)
    elif scheme == "crank-nicolson":
        lu = _lu(eye + 0.5 * h * A, h)
        explicit = eye - 0.5 * h * A
        rhs_src = h * sources_at(times[:-1] + 0.5 * h)
        for n in range(n_steps):
            states[n + 1] = sla.lu_solve(lu, explicit @ states[n] + rhs_src[:, n], check_finite=False)
            _check_finite(states[n + 1], n + 1)
    else:
        propagator = sla.expm(-h * A)
        # exp(-(h - tau_q) A) for each Gauss node tau_q
        kernels = [sla.expm(-(1.0 - c) * h * A) for c in _G4_NODES]
        tq = (times[:-1, None] + h * _G4_NODES[None, :]).ravel()
        src = sources_at(tq).reshape(size, n_steps, 4)
        forcing = np.zeros((size, n_steps))
        for q in range(4):
            forcing += h * _G4_WEIGHTS[q] * (kernels[q] @ src[:, :, q])
        for n in range(n_steps):
            states[n + 1] = propagator @ states[n] + forcing[:, n]
            _check_finite(states[n + 1], n + 1)
    return times, states


def solve_trajectory(system, T: float, dt: float, scheme: str = "crank-nicolson", alpha0=None) -> CoefficientTrajectory:
    """Integrate the Galerkin system over [0, T].

    Schemes: backward-euler, crank-nicolson (source at the exact step
    midpoint) and exponential (exact propagator, 4-node Gauss on the forcing
    integral).  ``alpha0`` overrides the system's projected initial vector.
    """
    start = system.alpha0 if alpha0 is None else np.asarray(alpha0, dtype=float)
    times, states = solve_linear(system.A, system.source, start, T, dt, scheme)
    return CoefficientTrajectory(times, states, scheme, T / (times.size - 1), system)


def reconstruct(traj: CoefficientTrajectory, system, x_grid, unshift: bool = False, problem=None) -> SolutionField:
    """Evaluate sum_j alpha_j(t) psi_j(x) per region on ``x_grid``.

    With ``unshift`` the inlet temperatures of ``problem`` (default: the
    system's problem) are added back.
    """
    x = np.asarray(x_grid, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise ValueError("x_grid must lie in [0, 1]")
    values = {a: traj.states[:, system.slice(a)] @ system.bases[a].values(x) for a in REGIONS}
    if unshift:
        values = _unshift(values, problem if problem is not None else system.problem)
    return SolutionField(x, traj.times.copy(), values, shifted=not unshift)
