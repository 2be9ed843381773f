"""Convergence of the Galerkin solver on a manufactured coupled solution.

Prints a spatial study, temporal studies for two schemes, and a comparison
with the finite-difference reference solver on matching refinements.
"""

from coaxheat.verify import (
    build_manufactured,
    compare_fields,
    convergence_study,
    fd_oracle_solve,
    field_norm,
    galerkin_field,
)

CASE = "coupled-trig"

print("spatial study, dt=1e-3")
print(convergence_study(CASE, [1, 2, 4, 8], [1e-3], scheme="crank-nicolson").to_text())
print()
for scheme in ("crank-nicolson", "backward-euler"):
    print(f"temporal study, m=32, {scheme}")
    print(convergence_study(CASE, [32], [0.02, 0.01, 0.005], scheme=scheme).to_text())
    print()

case = build_manufactured(CASE)
print(f"{'m':>4} {'n':>5} {'relative L2 vs finite differences':>36}")
for m, n in ((8, 64), (16, 128), (32, 256)):
    oracle = fd_oracle_solve(case.problem, n, 1e-4, 1.0, store_every=200)
    galerkin = galerkin_field(case.problem, m, 1e-4, 1.0, "crank-nicolson", oracle.x_grid)
    print(f"{m:4d} {n:5d} {compare_fields(galerkin, oracle)[0] / field_norm(oracle):36.3e}")
