"""Command-line driver: ``solve``, ``energy``, ``contract`` and ``verify``.

Configs are INI files with three sections::

    [problem]          every problem key, or ``case = <manufactured id>``
    [discretization]   m, dt, scheme, quadrature_nodes, x_points, sign_convention
    [run]              out, seed, energy_tol, gronwall_tol, contraction_tol

Values are numbers or expression strings (optionally quoted).  Unknown keys
are errors.  Exit codes: 0 success, 2 an inequality check failed, 1 any other
error.  Floats in CSV are written in shortest round-trip form.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import estimates
from .assembly import SIGN_CONVENTIONS, assemble_system
from .expr import ExpressionError
from .integrate import SCHEMES, IntegrationError, reconstruct, solve_trajectory
from .model import PROBLEM_KEYS, HomogeneousProblem, ProblemError, build_problem, shift_to_homogeneous
from .quadrature import gauss_rule, reference_rule
from .verify import CASES, assess_table, build_manufactured, convergence_study

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2
M_RANGE = (1, 256)

_DISCRETIZATION_KEYS = ("m", "dt", "scheme", "quadrature_nodes", "x_points", "sign_convention")
_RUN_KEYS = ("out", "seed", "energy_tol", "gronwall_tol", "contraction_tol")
_DEFAULTS = {
    "m": 16,
    "dt": 1e-3,
    "scheme": "backward-euler",
    "quadrature_nodes": None,
    "x_points": 101,
    "sign_convention": "weak-form",
    "out": ".",
    "seed": 0,
    "energy_tol": 1e-8,
    "gronwall_tol": 0.0,
    "contraction_tol": 1e-10,
}


def shipped_config(name: str) -> Path:
    """Path of a config shipped with the package, e.g. ``"coupled"``."""
    from importlib.resources import files

    path = Path(str(files("coaxheat") / "configs" / f"{name}.ini"))
    if not path.is_file():
        raise FileNotFoundError(f"no shipped config named {name!r}")
    return path


class ConfigError(ValueError):
    """Invalid config; the message carries the path and, if known, the line."""


@dataclass
class RunConfig:
    path: Path
    problem: HomogeneousProblem
    case: str | None
    m: int
    dt: float
    scheme: str
    quadrature_nodes: int | None
    x_points: int
    sign_convention: str
    run: dict = field(default_factory=dict)

    def quadrature(self):
        return gauss_rule(self.quadrature_nodes) if self.quadrature_nodes else reference_rule(self.m)


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        head = re.fullmatch(r"\[([^\]]+)\]", stripped)
        if head:
            current = head.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", stripped, re.IGNORECASE):
            return n
    return None


def _unquote(value: str) -> str:
    value = value.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
        return value[1:-1]
    return value


def load_config(path) -> RunConfig:
    """Parse and validate a run config.

    Raises
    ------
    ConfigError
        Unreadable file, syntax error, unknown section or key, or a value
        outside its range.  Problem-data violations are re-raised as
        ConfigError with the path prefixed.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror or exc}") from exc
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    def fail(section, key, message):
        line = _line_of(text, section, key)
        where = f"{path}:{line}" if line else str(path)
        return ConfigError(f"{where}: [{section}] {key}: {message}")

    allowed = {"problem": None, "discretization": _DISCRETIZATION_KEYS, "run": _RUN_KEYS}
    for section in parser.sections():
        if section not in allowed:
            line = next((n for n, ln in enumerate(text.splitlines(), 1) if ln.strip() == f"[{section}]"), "?")
            raise ConfigError(f"{path}:{line}: unknown section [{section}] (expected problem, discretization, run)")
        keys = allowed[section]
        for key in parser[section]:
            if keys is not None and key not in keys:
                raise fail(section, key, f"unknown key (expected one of {', '.join(keys)})")
    if "problem" not in parser:
        raise ConfigError(f"{path}: missing [problem] section")

    raw = {k: _unquote(v) for k, v in parser["problem"].items()}
    case = raw.pop("case", None)
    if case is not None:
        extra = sorted(set(raw) - {"horizon"})
        if extra:
            raise fail("problem", extra[0], "only 'horizon' may accompany 'case'")
        if case not in CASES:
            raise fail("problem", "case", f"unknown case {case!r} (known: {', '.join(CASES)})")
        try:
            horizon = float(raw.get("horizon", 1.0))
        except ValueError as exc:
            raise fail("problem", "horizon", f"not a number: {raw['horizon']!r}") from exc
        if not horizon > 0:
            raise fail("problem", "horizon", "must be > 0")
        problem = build_manufactured(case, horizon).problem
    else:
        for key in raw:
            if key not in PROBLEM_KEYS:
                raise fail("problem", key, "unknown key")
        try:
            problem = shift_to_homogeneous(build_problem(raw))
        except (ProblemError, ExpressionError) as exc:
            culprit = str(exc).split(":", 1)[0].split()[0]
            line = _line_of(text, "problem", culprit)
            raise ConfigError(f"{path}:{line}: {exc}" if line else f"{path}: {exc}") from exc

    values = dict(_DEFAULTS)
    for section in ("discretization", "run"):
        if section in parser:
            values.update({k: _unquote(v) for k, v in parser[section].items()})

    def number(section, key, kind):
        try:
            return kind(values[key])
        except (TypeError, ValueError) as exc:
            raise fail(section, key, f"expected {kind.__name__}, got {values[key]!r}") from exc

    m = number("discretization", "m", int)
    if not M_RANGE[0] <= m <= M_RANGE[1]:
        raise fail("discretization", "m", f"must lie in [{M_RANGE[0]}, {M_RANGE[1]}], got {m}")
    dt = number("discretization", "dt", float)
    if not (dt > 0 and math.isfinite(dt)):
        raise fail("discretization", "dt", f"must be positive, got {dt:g}")
    if dt > problem.horizon:
        raise fail("discretization", "dt", f"exceeds the horizon {problem.horizon:g}")
    scheme = str(values["scheme"])
    if scheme not in SCHEMES:
        raise fail("discretization", "scheme", f"must be one of {', '.join(SCHEMES)}")
    nodes = None
    if values["quadrature_nodes"] not in (None, ""):
        nodes = number("discretization", "quadrature_nodes", int)
        if nodes < 1:
            raise fail("discretization", "quadrature_nodes", "must be >= 1")
    x_points = number("discretization", "x_points", int)
    if x_points < 2:
        raise fail("discretization", "x_points", "must be >= 2")
    sign = str(values["sign_convention"])
    if sign not in SIGN_CONVENTIONS:
        raise fail("discretization", "sign_convention", f"must be one of {', '.join(SIGN_CONVENTIONS)}")
    run = {
        "out": str(values["out"]),
        "seed": number("run", "seed", int),
        **{k: number("run", k, float) for k in ("energy_tol", "gronwall_tol", "contraction_tol")},
    }
    return RunConfig(path, problem, case, m, dt, scheme, nodes, x_points, sign, run)


# --------------------------------------------------------------------------
# commands


def _out_dir(cfg_out: str, override: str | None) -> Path:
    """``--out`` wins over the config's ``[run] out``; relative to the cwd."""
    out = Path(override or cfg_out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _energy_run(cfg: RunConfig):
    system = assemble_system(cfg.problem, cfg.m, cfg.quadrature(), cfg.sign_convention)
    traj = solve_trajectory(system, cfg.problem.horizon, cfg.dt, cfg.scheme)
    constants = estimates.derive_constants(cfg.problem, system.quad)
    report = estimates.norms(traj, system)
    stencil = estimates.stencil_for(cfg.scheme)
    energy_margin = estimates.check_energy_inequality(report, constants, traj.dt, stencil)
    gronwall_margin = estimates.check_gronwall_bound(report, constants, system.alpha0, cfg.problem.horizon)
    report.weak_residual = estimates.weak_residual(traj, system)
    energy_scale = 1.0 + float(np.nanmax(report.dissipation_bound))
    gronwall_scale = 1.0 + float(np.max(report.gronwall_bound))
    flags = {
        "energy_ok": bool(energy_margin >= -cfg.run["energy_tol"] * energy_scale),
        "gronwall_ok": bool(gronwall_margin >= -cfg.run["gronwall_tol"] * gronwall_scale),
    }
    summary = {
        "config": str(cfg.path),
        "case": cfg.case,
        "m": cfg.m,
        "dt": traj.dt,
        "scheme": cfg.scheme,
        "sign_convention": cfg.sign_convention,
        "quadrature_nodes": system.quad.size,
        "horizon": cfg.problem.horizon,
        "energy_stencil": stencil,
        "constants": constants.as_dict(),
        "margins": {
            "energy": energy_margin,
            "energy_bound_max": energy_scale - 1.0,
            "gronwall": gronwall_margin,
            "gronwall_bound_max": gronwall_scale - 1.0,
        },
        "weak_residual": report.weak_residual,
        "regularity": estimates.regularity_report(traj, system).as_dict(),
        "flags": flags,
        "warnings": list(cfg.problem.warnings),
    }
    return system, traj, report, summary


def cmd_solve(cfg: RunConfig, out: Path, write_solution: bool = True) -> int:
    system, traj, report, summary = _energy_run(cfg)
    if write_solution:
        x = np.linspace(0.0, 1.0, cfg.x_points)
        reconstruct(traj, system, x, unshift=True).to_csv(out / "solution.csv")
    report.to_csv(out / "energy.csv")
    _write_json(out / "summary.json", summary)
    ok = all(summary["flags"].values())
    for name, value in summary["margins"].items():
        log.info("%s = %.6g", name, value)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_contract(cfg: RunConfig, out: Path, eps: float) -> int:
    if not (eps >= 0 and math.isfinite(eps)):
        raise ConfigError(f"perturbation size must be >= 0, got {eps:g}")
    system = assemble_system(cfg.problem, cfg.m, cfg.quadrature(), cfg.sign_convention)
    rng = np.random.default_rng(cfg.run["seed"])
    direction = rng.standard_normal(system.alpha0.size)
    direction /= np.linalg.norm(direction)
    T = cfg.problem.horizon
    a = solve_trajectory(system, T, cfg.dt, cfg.scheme)
    b = solve_trajectory(system, T, cfg.dt, cfg.scheme, alpha0=system.alpha0 + eps * direction)
    constants = estimates.derive_constants(cfg.problem, system.quad)
    times, d, bound = estimates.contraction_series(a, b, constants)
    margin = float(np.min(bound - d))
    with (out / "contraction.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "d", "bound"])
        for row in zip(times, d, bound):
            writer.writerow([repr(float(v)) for v in row])
    ok = margin >= -cfg.run["contraction_tol"] * float(np.max(bound))
    summary = {
        "config": str(cfg.path),
        "m": cfg.m,
        "dt": a.dt,
        "scheme": cfg.scheme,
        "eps": eps,
        "seed": cfg.run["seed"],
        "constants": constants.as_dict(),
        "margins": {"contraction": margin},
        "flags": {
            "contraction_ok": bool(ok),
            "identically_zero": bool(np.all(d == 0.0)),
            "non_increasing": bool(np.all(np.diff(d) <= 0.0)),
        },
    }
    if constants.kappa == 0.0:
        summary["flags"]["kappa_zero"] = True
    _write_json(out / "summary.json", summary)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_verify(case: str, out: Path, m_list=None, dt_list=None, scheme: str = "crank-nicolson", reference: str = "exact") -> int:
    """Space and time convergence tables for a manufactured case.

    Default studies: m in {2, 4, 8, 16} at dt = 1e-4, and dt in
    {0.02, 0.01, 0.005, 0.0025} at m = 32.  Explicit ``--m``/``--dt`` lists
    give a single study.
    """
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r} (known: {', '.join(CASES)})")
    studies = []
    if m_list is None and dt_list is None:
        studies.append(("space", [2, 4, 8, 16], [1e-4], "m"))
        studies.append(("time", [32], [0.02, 0.01, 0.005, 0.0025], "dt"))
    else:
        # a lone --m list is an m-study even when it has one entry
        vary = "m" if dt_list is None else None
        m_list = m_list or [16]
        dt_list = dt_list or [1e-3]
        for m in m_list:
            if not M_RANGE[0] <= m <= M_RANGE[1]:
                raise ConfigError(f"m must lie in [{M_RANGE[0]}, {M_RANGE[1]}], got {m}")
        if any(not dt > 0 for dt in dt_list):
            raise ConfigError("dt values must be positive")
        studies.append(("study", m_list, dt_list, vary))
    ok = True
    rows = []
    text = []
    for label, ms, dts, vary in studies:
        table = convergence_study(case, ms, dts, reference=reference, scheme=scheme, vary=vary)
        passed, note = assess_table(table, scheme)
        ok &= passed
        text.append(f"# {case} {label} ({scheme}, reference {reference}): {'pass' if passed else 'FAIL'} - {note}")
        text.append(table.to_text())
        for p, e, r in table.rows:
            rows.append([label, table.param_name, repr(p), repr(float(e)), "" if r is None else repr(float(r))])
    with (out / "convergence.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["study", "param_name", "param", "error", "rate"])
        writer.writerows(rows)
    (out / "convergence.txt").write_text("\n".join(text) + "\n")
    print("\n".join(text))
    return EXIT_OK if ok else EXIT_CHECK


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coaxheat", description="Spectral Galerkin solver for a four-region heat exchanger.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a config; write solution.csv, energy.csv, summary.json")
    p.add_argument("config")
    p.add_argument("--out")
    p = sub.add_parser("energy", help="energy and Gronwall checks only; write energy.csv, summary.json")
    p.add_argument("config")
    p.add_argument("--out")
    p = sub.add_parser("contract", help="contraction check for a perturbed initial state")
    p.add_argument("config")
    p.add_argument("--eps", type=float, default=1e-3, help="size of the initial perturbation")
    p.add_argument("--out")
    p = sub.add_parser("verify", help="convergence tables for a manufactured case")
    p.add_argument("case", help=f"one of {', '.join(CASES)}")
    p.add_argument("--m", type=int, nargs="+")
    p.add_argument("--dt", type=float, nargs="+")
    p.add_argument("--scheme", choices=SCHEMES, default="crank-nicolson")
    p.add_argument("--reference", choices=("exact", "oracle"), default="exact")
    p.add_argument("--out")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "verify":
            return cmd_verify(args.case, _out_dir(".", args.out), args.m, args.dt, args.scheme, args.reference)
        cfg = load_config(args.config)
        out = _out_dir(cfg.run["out"], args.out)
        if args.command == "solve":
            return cmd_solve(cfg, out)
        if args.command == "energy":
            return cmd_solve(cfg, out, write_solution=False)
        return cmd_contract(cfg, out, args.eps)
    except (ConfigError, ProblemError, ExpressionError, IntegrationError, ValueError, OSError) as exc:
        print(f"coaxheat: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
