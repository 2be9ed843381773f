"""Energy bookkeeping for the shipped fully coupled configuration.

Loads ``coupled.ini``, integrates it, and prints the energy constants, the
dissipation inequality margin, the Gronwall envelope and a contraction
experiment with a perturbed initial state.
"""

import numpy as np

from coaxheat import estimates as es
from coaxheat import assemble_system, solve_trajectory
from coaxheat.cli import load_config, shipped_config

cfg = load_config(shipped_config("coupled"))
system = assemble_system(cfg.problem, cfg.m)
traj = solve_trajectory(system, cfg.problem.horizon, cfg.dt, cfg.scheme)
constants = es.derive_constants(cfg.problem, system.quad)

print(f"coupled.ini: m={cfg.m}, dt={cfg.dt}, scheme={cfg.scheme}")
for name, value in constants.as_dict().items():
    print(f"  {name:>6} = {value:.6g}")

report = es.norms(traj, system)
margin = es.check_energy_inequality(report, constants, traj.dt, stencil=es.stencil_for(cfg.scheme))
gronwall = es.check_gronwall_bound(report, constants, system.alpha0, cfg.problem.horizon)
print(f"\nmin dissipation margin over all steps: {margin:.4e}")
print(f"min Gronwall margin:                   {gronwall:.4e}")

stride = max(1, (len(traj) - 1) // 5)
envelope = es.gronwall_envelope(report, constants, float(system.alpha0 @ system.alpha0))
print(f"\n{'t':>6} {'|U|_H^2':>12} {'envelope':>12}")
for n in range(0, len(traj), stride):
    print(f"{report.times[n]:6.3f} {report.h2_norm_sq[n]:12.5e} {envelope[n]:12.5e}")

rng = np.random.default_rng(0)
e = rng.standard_normal(system.alpha0.size)
other = solve_trajectory(system, cfg.problem.horizon, cfg.dt, cfg.scheme, alpha0=system.alpha0 + 1e-3 * e / np.linalg.norm(e))
t, d, bound = es.contraction_series(traj, other, constants)
print(f"\nperturbation of size 1e-3: d(0) = {d[0]:.3e}, d(T) = {d[-1]:.3e}, d(T)/bound(T) = {d[-1] / bound[-1]:.3e}")
