import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coaxheat import estimates as es
from coaxheat.assembly import assemble_system
from coaxheat.integrate import CoefficientTrajectory, solve_trajectory
from helpers import homogeneous

SMOOTH_U0 = {"f": "x*(2-x)", "s": "1 + 0.5*cos(pi*x)", "g": "1-x^2", "p": "1"}


# ---------------------------------------------------------------- constants

def test_constants_zero_exchange():
    c = es.derive_constants(homogeneous())
    assert (c.M1, c.C1, c.kappa) == (0.0, 1.0, 0.0)
    assert (c.beta_f, c.beta_g, c.gamma_f, c.gamma_g) == (1.0, 1.0, 0.0, 0.0)
    assert c.M2 == c.M3 == 0.5 and c.C2 == 1.0


def test_constants_unit_exchange():
    c = es.derive_constants(homogeneous(K="1"))
    assert (c.M1, c.C1, c.kappa) == (2.0, 5.0, 4.0)


def test_constants_use_sup_of_each_rate():
    # sups 2, 1 + 1, 0.5 + 3, 1: the gas row dominates
    c = es.derive_constants(homogeneous(K=["2*x", "1", "x", "3 - 2*x", "0.5", "1"]))
    assert c.M1 == pytest.approx(3.5)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 10.0))
def test_constants_homogeneous_in_K(scale):
    K = ["1 + x", "0.5", "x^2", "2", "1", "exp(-x)"]
    base = es.derive_constants(homogeneous(K=K))
    scaled = es.derive_constants(homogeneous(K=[f"{scale!r}*({k})" for k in K]))
    assert scaled.M1 == pytest.approx(scale * base.M1, rel=1e-12)
    assert scaled.kappa == pytest.approx(scale * base.kappa, rel=1e-12)


# ---------------------------------------------------------------- norms

def _traj(states, times=None, system=None):
    states = np.atleast_2d(states)
    times = np.linspace(0, 1, len(states)) if times is None else times
    return CoefficientTrajectory(times, states, "backward-euler", times[1] - times[0] if len(times) > 1 else 0.0, system)


def test_zero_trajectory_norms():
    sysm = assemble_system(homogeneous(K="1"), 3)
    r = es.norms(_traj(np.zeros((4, 12))), sysm)
    for series in (r.h2_norm_sq, r.v_norm_sq, r.source_norm_sq):
        np.testing.assert_array_equal(series, 0.0)


def test_constant_wall_mode_v_norm():
    # V_s inner product on constants is <(K2 + K3) 1, 1>
    sysm = assemble_system(homogeneous(K=["0", "1 + x", "x^2", "0", "0", "0"]), 4)
    state = np.zeros(16)
    state[sysm.slice("s").start] = 3.0
    r = es.norms(_traj(np.tile(state, (2, 1))), sysm)
    assert r.v_norm_sq[0] == pytest.approx(9.0 * (1.5 + 1 / 3), rel=1e-12)


def test_unit_vector_h2_norm_and_identity():
    sysm = assemble_system(homogeneous(), 5)
    rng = np.random.default_rng(0)
    states = rng.standard_normal((6, 20))
    states[0] = np.eye(20)[7]
    r = es.norms(_traj(states), sysm)
    assert r.h2_norm_sq[0] == 1.0
    # reconstruction in L2 matches the coefficient norm
    x, w = sysm.quad.nodes, sysm.quad.weights
    field_sq = sum(w @ ((states[:, sysm.slice(a)] @ sysm.bases[a].values(x)) ** 2).T for a in "fsgp")
    np.testing.assert_allclose(r.h2_norm_sq, field_sq, rtol=1e-12)


def test_dimension_mismatch():
    sysm = assemble_system(homogeneous(), 3)
    with pytest.raises(ValueError):
        es.norms(_traj(np.zeros((3, 8))), sysm)


# ---------------------------------------------------------------- energy inequality

def test_pure_dissipation_positive_residuals():
    p = homogeneous(E="1 + x", f_f=1, f_g=2, U0=SMOOTH_U0)
    sysm = assemble_system(p, 8)
    traj = solve_trajectory(sysm, 1.0, 1e-2, "backward-euler")
    r = es.norms(traj, sysm)
    assert es.check_energy_inequality(r, es.derive_constants(p), traj.dt) >= 0.0


def test_zero_solution_residual_is_source_term():
    p = homogeneous()
    sysm = assemble_system(p, 2)
    r = es.norms(_traj(np.zeros((5, 8))), sysm)
    r.source_norm_sq = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
    c = es.derive_constants(p)
    assert es.check_energy_inequality(r, c, 0.25) == pytest.approx(c.C2 * 1.0)
    assert math.isnan(r.dissipation_residual[0])
    np.testing.assert_allclose(r.dissipation_residual[1:], c.C2 * r.source_norm_sq[1:])


def test_single_mode_closed_form_residual():
    # one wall mode with eigenvalue lam under backward Euler: a_n = (1 + lam dt)^(-n),
    # so (a_n^2 - a_{n+1}^2)/dt = a_{n+1}^2 (2 lam + lam^2 dt) and |U|_V^2 = lam a^2;
    # the residual reduces to a_{n+1}^2 (C1 + lam + lam^2 dt)
    p = homogeneous(U0={"f": "0", "s": "sqrt(2)*cos(pi*x)", "g": "0", "p": "0"})
    sysm = assemble_system(p, 2)
    dt = 0.01
    traj = solve_trajectory(sysm, 0.5, dt, "backward-euler")
    r = es.norms(traj, sysm)
    c = es.derive_constants(p)
    es.check_energy_inequality(r, c, dt)
    lam = math.pi**2
    a = (1 + lam * dt) ** -np.arange(1, 51)
    expected = a**2 * (c.C1 + lam + lam**2 * dt)
    np.testing.assert_allclose(r.dissipation_residual[1:], expected, rtol=1e-9)


@pytest.mark.parametrize("scheme", ["backward-euler", "crank-nicolson"])
def test_energy_inequality_coupled(scheme):
    p = homogeneous(K="1 + 0.5*sin(pi*x)", f_f=1, f_g=1, U0=SMOOTH_U0, source={a: "1 + t" for a in "fsgp"})
    sysm = assemble_system(p, 12)
    traj = solve_trajectory(sysm, 1.0, 1e-3, scheme)
    r = es.norms(traj, sysm)
    margin = es.check_energy_inequality(r, es.derive_constants(p), traj.dt, es.stencil_for(scheme))
    assert margin >= -1e-8 * (1 + np.nanmax(r.dissipation_bound))


def test_unknown_stencil():
    p = homogeneous()
    sysm = assemble_system(p, 2)
    with pytest.raises(ValueError):
        es.check_energy_inequality(es.norms(_traj(np.zeros((3, 8))), sysm), es.derive_constants(p), 0.5, "forward")


def test_energy_csv(tmp_path):
    p = homogeneous(K="1", U0=SMOOTH_U0)
    sysm = assemble_system(p, 4)
    traj = solve_trajectory(sysm, 0.1, 0.05)
    r = es.norms(traj, sysm)
    es.check_energy_inequality(r, es.derive_constants(p), traj.dt)
    rows = list(csv.reader((r.to_csv(tmp_path / "energy.csv")).open()))
    assert rows[0] == ["t", "h2_norm_sq", "v_norm_sq", "source_norm_sq", "dissipation_residual"]
    assert rows[1][4] == "" and float(rows[2][4]) == r.dissipation_residual[1]
    assert float(rows[3][1]) == r.h2_norm_sq[2]


# ---------------------------------------------------------------- Gronwall

def test_gronwall_pure_decay():
    p = homogeneous(U0=SMOOTH_U0)
    sysm = assemble_system(p, 6)
    traj = solve_trajectory(sysm, 1.0, 0.01, "backward-euler")
    r = es.norms(traj, sysm)
    c = es.derive_constants(p)
    margin = es.check_gronwall_bound(r, c, sysm.alpha0, 1.0)
    assert margin == 0.0  # attained at t = 0
    np.testing.assert_allclose(r.gronwall_bound, np.exp(c.C1 * r.times) * (sysm.alpha0 @ sysm.alpha0))
    assert np.all((r.gronwall_bound - r.h2_norm_sq)[1:] > 0)


def test_gronwall_zero_data():
    p = homogeneous()
    sysm = assemble_system(p, 3)
    r = es.norms(solve_trajectory(sysm, 1.0, 0.1), sysm)
    assert es.check_gronwall_bound(r, es.derive_constants(p), sysm.alpha0, 1.0) == 0.0
    np.testing.assert_array_equal(r.gronwall_bound, 0.0)


def test_gronwall_single_mode_fully_coupled():
    p = homogeneous(K="1", U0={a: "1" for a in "fsgp"})
    sysm = assemble_system(p, 1)
    traj = solve_trajectory(sysm, 1.0, 1e-3, "crank-nicolson")
    r = es.norms(traj, sysm)
    assert es.check_gronwall_bound(r, es.derive_constants(p), sysm.alpha0, 1.0) >= 0.0


@settings(max_examples=20, deadline=None)
@given(st.floats(1.0, 10.0))
def test_gronwall_envelope_monotone_in_source(factor):
    p = homogeneous(K="1", U0=SMOOTH_U0, source={a: "1 + x*t" for a in "fsgp"})
    sysm = assemble_system(p, 4)
    r = es.norms(solve_trajectory(sysm, 1.0, 0.05), sysm)
    c = es.derive_constants(p)
    base = es.gronwall_envelope(r, c, 1.0)
    r.source_norm_sq = r.source_norm_sq * factor**2
    assert np.all(es.gronwall_envelope(r, c, 1.0) >= base)


# ---------------------------------------------------------------- contraction

def test_identical_initial_data_zero_difference():
    p = homogeneous(K="1", U0=SMOOTH_U0, source={a: "1" for a in "fsgp"})
    sysm = assemble_system(p, 6)
    a = solve_trajectory(sysm, 1.0, 0.01)
    b = solve_trajectory(sysm, 1.0, 0.01)
    _, d, _ = es.contraction_series(a, b, es.derive_constants(p))
    assert np.all(d == 0.0)
    assert es.check_contraction(a, b, es.derive_constants(p)) == 0.0


def test_zero_exchange_difference_non_increasing():
    p = homogeneous(f_f=1, f_g=1, U0=SMOOTH_U0)
    sysm = assemble_system(p, 8)
    a = solve_trajectory(sysm, 1.0, 0.01)
    b = solve_trajectory(sysm, 1.0, 0.01, alpha0=sysm.alpha0 + 1e-3)
    c = es.derive_constants(p)
    _, d, _ = es.contraction_series(a, b, c)
    assert c.kappa == 0.0 and np.all(np.diff(d) <= 0)
    assert es.check_contraction(a, b, c) >= 0.0


def test_random_perturbation_coupled():
    p = homogeneous(K="1 + 0.5*cos(pi*x)", f_f=1, f_g=1, U0=SMOOTH_U0)
    sysm = assemble_system(p, 8)
    c = es.derive_constants(p)
    e = np.random.default_rng(5).standard_normal(32)
    a = solve_trajectory(sysm, 1.0, 0.01)
    b = solve_trajectory(sysm, 1.0, 0.01, alpha0=sysm.alpha0 + 1e-3 * e / np.linalg.norm(e))
    assert es.check_contraction(a, b, c) >= 0.0


def test_contraction_rejects_mismatch():
    p = homogeneous()
    s1, s2 = assemble_system(p, 2), assemble_system(p, 2)
    c = es.derive_constants(p)
    with pytest.raises(ValueError, match="different Galerkin systems"):
        es.check_contraction(solve_trajectory(s1, 1, 0.1), solve_trajectory(s2, 1, 0.1), c)
    with pytest.raises(ValueError, match="time grids"):
        es.check_contraction(solve_trajectory(s1, 1, 0.1), solve_trajectory(s1, 1, 0.2), c)


# ---------------------------------------------------------------- weak residual and regularity

def test_weak_residual_by_scheme():
    p = homogeneous(K="1", f_f=1, f_g=1, U0=SMOOTH_U0, source={a: "1 + sin(t)" for a in "fsgp"})
    sysm = assemble_system(p, 8)
    cn = solve_trajectory(sysm, 1.0, 0.01, "crank-nicolson")
    scale = 1 + np.linalg.norm(cn.states, axis=1).max()
    assert es.weak_residual(cn, sysm) <= 1e-10 * scale
    r1 = es.weak_residual(solve_trajectory(sysm, 1.0, 0.01, "backward-euler"), sysm)
    r2 = es.weak_residual(solve_trajectory(sysm, 1.0, 0.005, "backward-euler"), sysm)
    assert 1.6 <= r1 / r2 <= 2.4  # O(dt)
    zero = assemble_system(homogeneous(), 3)
    assert es.weak_residual(solve_trajectory(zero, 1.0, 0.1), zero) == 0.0


def test_regularity_zero_data():
    p = homogeneous()
    sysm = assemble_system(p, 4)
    rep = es.regularity_report(solve_trajectory(sysm, 1.0, 0.1), sysm)
    assert rep.sup_v_norm == rep.dt_l2_h2 == rep.h2_space_l2_time == rep.rhs == 0.0
    assert rep.ratio == 0.0


@pytest.mark.parametrize("k", [1, 2, 3, 5])
def test_h2_norm_single_wall_mode(k):
    sysm = assemble_system(homogeneous(), 6)
    grams = es.h2_grams(sysm)
    w = (k - 1) * math.pi
    assert grams["s"][k - 1, k - 1] == pytest.approx(1 + w**2 + w**4, rel=1e-11)


def test_regularity_bounded_under_refinement():
    p = homogeneous(E="1 + x/2", K="1", f_f=1, f_g=1, U0=SMOOTH_U0, source={a: "1 + t" for a in "fsgp"})
    reps = []
    for m in (16, 32):
        sysm = assemble_system(p, m)
        reps.append(es.regularity_report(solve_trajectory(sysm, 1.0, 1e-3), sysm))
    for name in ("sup_v_norm", "dt_l2_h2", "h2_space_l2_time"):
        ratio = getattr(reps[1], name) / getattr(reps[0], name)
        assert 0.5 <= ratio <= 2
    assert math.isfinite(reps[1].ratio)
