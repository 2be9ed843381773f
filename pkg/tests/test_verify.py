import math
import warnings

import numpy as np
import pytest

from coaxheat.expr import evaluate
from coaxheat.integrate import SolutionField
from coaxheat.verify import (
    CASES,
    ConvergenceTable,
    assess_table,
    build_manufactured,
    compare_fields,
    convergence_study,
    fd_oracle_solve,
    field_norm,
    manufactured_residual,
    observed_rates,
    solver_threads,
)
from helpers import homogeneous


def test_catalog_contains_required_cases():
    assert {"decoupled-heat", "coupled-trig", "variable-E"} <= set(CASES)
    with pytest.raises(KeyError):
        build_manufactured("nope")


@pytest.mark.parametrize("case_id", CASES)
def test_manufactured_residual_small(case_id):
    case = build_manufactured(case_id)
    rng = np.random.default_rng(11)
    x, t = rng.uniform(0.01, 0.99, 200), rng.uniform(0.01, 0.99, 200)
    assert np.abs(manufactured_residual(case, x, t)).max() <= 1e-8


@pytest.mark.parametrize("case_id", CASES)
def test_manufactured_boundary_conditions(case_id):
    case = build_manufactured(case_id)
    t = np.linspace(0, 1, 11)
    U = case.exact_U
    np.testing.assert_allclose(evaluate(U["f"], 0.0, t), 0.0, atol=1e-15)
    np.testing.assert_allclose(evaluate(U["g"], 1.0, t), 0.0, atol=1e-15)
    # zero flux at the other ends, by central differences
    h = 1e-6
    for a, ends in (("f", [1.0]), ("g", [0.0]), ("s", [0.0, 1.0]), ("p", [0.0, 1.0])):
        for z in ends:
            slope = (evaluate(U[a], z + h, t) - evaluate(U[a], z - h, t)) / (2 * h)
            np.testing.assert_allclose(slope, 0.0, atol=1e-6)


def test_decoupled_heat_source_vanishes():
    case = build_manufactured("decoupled-heat")
    x, t = np.meshgrid(np.linspace(0, 1, 9), np.linspace(0, 1, 9))
    for a in "fsgp":
        np.testing.assert_allclose(evaluate(case.problem.source[a], x, t), 0.0, atol=1e-12)


def test_coupled_trig_fields():
    U = build_manufactured("coupled-trig").exact_U
    x, t = 0.3, 0.4
    assert evaluate(U["f"], x, t) == pytest.approx(math.exp(-t) * math.sin(math.pi * x / 2))
    assert evaluate(U["g"], x, t) == pytest.approx(math.exp(-t) * math.sin(math.pi * (1 - x) / 2))


# ---------------------------------------------------------------- FD oracle

def test_fd_zero_data():
    field = fd_oracle_solve(homogeneous(K="1", f_f=1, f_g=1), 16, 0.01, 0.1)
    for a in "fsgp":
        np.testing.assert_array_equal(field.values[a], 0.0)


def test_fd_decoupled_heat_accuracy():
    case = build_manufactured("decoupled-heat")
    field = fd_oracle_solve(case.problem, 128, 1e-4, 0.1, store_every=1000)
    exact = math.exp(-math.pi**2 * 0.1) * np.cos(math.pi * field.x_grid)
    assert np.abs(field.values["s"][-1] - exact).max() <= 5e-4


@pytest.mark.parametrize("case_id", ["coupled-trig", "variable-E", "coupled-poly"])
def test_fd_self_convergence_second_order(case_id):
    case = build_manufactured(case_id)
    errs = []
    for n in (16, 32, 64):
        field = fd_oracle_solve(case.problem, n, 2e-4, 0.5, store_every=2500)
        exact = case.exact_field(field.x_grid, field.times)
        ref = SolutionField(field.x_grid, field.times, exact)
        errs.append(compare_fields(field, ref)[0])
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.4 <= r <= 4.6 for r in ratios), ratios


def test_fd_guards():
    with pytest.raises(ValueError):
        fd_oracle_solve(homogeneous(), 4, 0.1, 1.0)
    with pytest.warns(UserWarning, match="Peclet"):
        fd_oracle_solve(homogeneous(E="1e-3", f_f=1.0), 8, 0.1, 0.1)


# ---------------------------------------------------------------- comparison and tables

def _field(values, x=None, t=None):
    x = np.linspace(0, 1, 5) if x is None else x
    t = np.linspace(0, 1, 3) if t is None else t
    return SolutionField(x, t, {a: np.full((t.size, x.size), values.get(a, 0.0)) for a in "fsgp"})


def test_compare_fields_examples():
    a = _field({"f": 1.0, "s": 2.0})
    assert compare_fields(a, a) == (0.0, 0.0)
    l2, linf = compare_fields(a, _field({"f": 1.0, "s": 2.5}))
    assert linf == pytest.approx(0.5) and l2 == pytest.approx(0.5)
    with pytest.raises(ValueError):
        compare_fields(a, _field({}, x=np.linspace(0, 1, 6)))
    with pytest.raises(ValueError):
        compare_fields(a, _field({}, t=np.linspace(0, 2, 3)))
    assert field_norm(_field({"p": 3.0})) == pytest.approx(3.0)


def test_observed_rates():
    rates = observed_rates([4, 8, 16], [1.0, 0.25, 0.0625])
    assert rates[0] is None and rates[1:] == pytest.approx([2.0, 2.0])
    rates = observed_rates([0.1, 0.05], [1e-2, 1e-3], "dt")
    assert rates[1] == pytest.approx(math.log2(10))


def test_table_exports(tmp_path):
    table = ConvergenceTable("m", [2, 4], [0.1, 0.01])
    lines = table.to_csv(tmp_path / "c.csv").read_text().splitlines()
    assert lines[:2] == ["param,error,rate", "2,0.1,"]
    p, e, r = lines[2].split(",")
    assert (p, e) == ("4", "0.01") and float(r) == table.rates[1]
    assert "3.32" in table.to_text()


def test_assess_table():
    ok, _ = assess_table(ConvergenceTable("m", [2, 4, 8], [1e-2, 1e-4, 1e-6]), "crank-nicolson")
    assert ok
    ok, note = assess_table(ConvergenceTable("m", [2, 4, 8], [1e-9, 1e-9, 1e-9]), "crank-nicolson")
    assert ok and "plateau" in note
    ok, _ = assess_table(ConvergenceTable("m", [2, 4], [1e-3, 2e-3]), "crank-nicolson")
    assert not ok
    ok, _ = assess_table(ConvergenceTable("dt", [0.1, 0.05], [4e-3, 1e-3]), "crank-nicolson")
    assert ok
    ok, _ = assess_table(ConvergenceTable("dt", [0.1, 0.05], [4e-3, 1e-3]), "backward-euler")
    assert not ok
    assert assess_table(ConvergenceTable("m", [1], [0.5]), "backward-euler") == (True, "single row, no rate")


def test_decoupled_heat_m_study_plateau():
    table = convergence_study("decoupled-heat", [2, 4, 8], [1e-3], T=0.2)
    assert max(table.errors) < 1e-6
    assert max(table.errors) / min(table.errors) < 1.01


def test_coupled_poly_spectral_decrease():
    table = convergence_study("coupled-poly", [2, 4, 8, 16], [1e-4])
    assert all(b < a for a, b in zip(table.errors, table.errors[1:]))


def test_dt_study_crank_nicolson_rate():
    table = convergence_study("coupled-trig", [16], [0.04, 0.02, 0.01])
    assert all(1.8 <= r <= 2.2 for r in table.rates[1:])


def test_oracle_reference_study():
    problem = homogeneous(K="1", f_f=1, f_g=1, U0={"f": "x*(2-x)", "s": "1", "g": "1-x^2", "p": "1"})
    table = convergence_study(problem, [8, 16], [1e-3], reference="oracle", T=0.2, oracle_n=64)
    assert table.reference == "oracle" and all(e < 1e-2 for e in table.errors)
    with pytest.raises(ValueError):
        convergence_study(problem, [8], [1e-3])


def test_study_argument_checks():
    with pytest.raises(ValueError):
        convergence_study("coupled-trig", [], [1e-3])
    with pytest.raises(ValueError):
        convergence_study("coupled-trig", [2, 4], [1e-3, 1e-4, 1e-5])
    assert convergence_study("coupled-trig", [1], [1e-2], T=0.1, vary="m").param_name == "m"


def test_solver_threads(monkeypatch):
    monkeypatch.setenv("SOLVER_THREADS", "3")
    assert solver_threads() == 3
    monkeypatch.setenv("SOLVER_THREADS", "junk")
    assert solver_threads() >= 1
