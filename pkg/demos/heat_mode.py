"""Decay of a single heat mode in the s region under the three time schemes.

With no coupling and no source, U_s(x, 0) = cos(pi x) decays as
exp(-pi^2 t) cos(pi x).  The script compares the three schemes at a few step
sizes: backward Euler loses accuracy at first order, Crank-Nicolson shows its
small phase error, and the exponential propagator is exact up to rounding.
"""

import math

import numpy as np

from coaxheat import HomogeneousProblem, assemble_system, reconstruct, solve_trajectory
from coaxheat.basis import REGIONS

T = 0.1
problem = HomogeneousProblem(
    E={a: "1" for a in REGIONS},
    f_f=0.0,
    f_g=0.0,
    K=["0"] * 6,
    source={a: "0" for a in REGIONS},
    U0={"f": "0", "s": "cos(pi*x)", "g": "0", "p": "0"},
)
system = assemble_system(problem, 4)
x = np.linspace(0.0, 1.0, 401)
exact = math.exp(-math.pi**2 * T) * np.cos(math.pi * x)

print(f"relative L2 error of U_s at t={T}")
print(f"{'dt':>8} {'backward-euler':>16} {'crank-nicolson':>16} {'exponential':>14}")
for dt in (1e-2, 1e-3, 1e-4):
    row = []
    for scheme in ("backward-euler", "crank-nicolson", "exponential"):
        field = reconstruct(solve_trajectory(system, T, dt, scheme), system, x)
        err = np.sqrt(np.trapezoid((field.values["s"][-1] - exact) ** 2, x) / np.trapezoid(exact**2, x))
        row.append(err)
    print(f"{dt:8.0e} {row[0]:16.3e} {row[1]:16.3e} {row[2]:14.3e}")

z = math.pi**2 * 1e-3
print(f"\nCrank-Nicolson amplification per step at dt=1e-3: {(1 - z / 2) / (1 + z / 2):.12f}")
print(f"exact decay factor per step:                      {math.exp(-z):.12f}")
print(f"predicted relative error after 100 steps: 100 z^3 / 12 = {100 * z**3 / 12:.3e}")
