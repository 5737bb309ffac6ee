"""``oscillab`` command line.

Exit status: 0 when every invariant checked by the run holds, 1 when one
fails, 2 for configuration errors, 3 for numerical failures.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .io import write_csv, write_json

log = logging.getLogger("oscillab")

OK, INVARIANT_FAILED, CONFIG_ERROR, NUMERICAL_ERROR = 0, 1, 2, 3
RESIDUAL_TOL = 1e-8
GRID = np.geomspace(1e-3, 4.0, 200)
DINI_FLOOR = 1e-300


class Run:
    """One subcommand invocation: config, output directory and collected checks."""

    def __init__(self, command: str, cfg: ExperimentConfig):
        self.command = command
        self.cfg = cfg
        self.hash = cfg.digest(command)
        self.out = Path(cfg.out or f"oscillab-out/{command}")
        self.out.mkdir(parents=True, exist_ok=True)
        self.checks: dict[str, bool] = {}
        self.lines: list[str] = []
        self.files: list[str] = []

    def check(self, name: str, ok: bool, detail: str = ""):
        self.checks[name] = bool(ok)
        self.say(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))

    def say(self, line: str):
        self.lines.append(line)

    def csv(self, name, header, rows, units):
        self.files.append(str(write_csv(self.out / name, header, rows, units, self.hash)))

    def json(self, name, obj):
        self.files.append(str(write_json(self.out / name, obj)))

    def figure(self, fn, name, *args, **kw):
        if not self.cfg.plots:
            return
        from . import plots

        self.files.append(str(getattr(plots, fn)(*args, path=self.out / name, **kw)))

    def finish(self, payload: dict, elapsed: float) -> int:
        (self.out / "config.txt").write_text(self.cfg.to_text(), encoding="utf-8")
        payload = {"command": self.command, "configHash": self.hash, "checks": self.checks, **payload}
        self.json("summary.json", payload)
        status = OK if all(self.checks.values()) else INVARIANT_FAILED
        text = [f"oscillab {self.command}  (config {self.hash})", *self.lines,
                f"status: {'ok' if status == OK else 'invariant failure'}", f"elapsed: {elapsed:.2f} s"]
        (self.out / "summary.txt").write_text("\n".join(text) + "\n", encoding="utf-8")
        print("\n".join(text))
        return status


# --------------------------------------------------------------------------
# shared parsing


def parse_radii(spec: str) -> np.ndarray:
    """``dyadic:a:b`` (2^-k), ``4adic:a:b`` (4^-k) or a comma list."""
    try:
        if ":" in spec:
            kind, a, b = spec.split(":")
            base = {"dyadic": 2.0, "4adic": 4.0}[kind]
            return base ** -np.arange(int(a), int(b) + 1, dtype=float)
        vals = np.array([float(v) for v in spec.split(",") if v.strip()])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"bad radii spec {spec!r}") from exc
    if vals.size == 0 or np.any(vals <= 0) or np.any(vals > 2):
        raise ConfigError("radii must lie in (0, 2]")
    return vals


def parse_floats(spec: str, what: str) -> list:
    try:
        vals = [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad {what} list {spec!r}") from exc
    if not vals:
        raise ConfigError(f"empty {what} list")
    return vals


def _example(cfg, need_solution=False):
    from .fields import UnknownExampleError, make_example
    from .dini import ModulusError

    try:
        A, u = make_example(cfg.field, n=cfg.n, modulus=cfg.modulus or None)
    except (UnknownExampleError, ModulusError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if need_solution and u is None:
        if cfg.field == "ConstantIdentity":
            from .fields import linear_solution

            u = linear_solution([[1.0] + [0.5] * (cfg.n - 1)])
        else:
            raise ConfigError(f"{cfg.field} has no closed-form solution")
    return A, u


def _rule(cfg, points=None):
    from .quadrature import QuadratureError, QuadratureRule

    try:
        return QuadratureRule(cfg.quadrature, points or cfg.points, cfg.seed)
    except QuadratureError as exc:
        raise ConfigError(str(exc)) from exc


def _modulus(spec):
    from .dini import ModulusError, parse_modulus

    try:
        return parse_modulus(spec)
    except ModulusError as exc:
        raise ConfigError(str(exc)) from exc


# --------------------------------------------------------------------------
# subcommands


def cmd_verify_example(run: Run) -> dict:
    from .fields import C2_VARIANTS, c1_ansatz, c2_ansatz, check_bounded_elliptic, radial_residual

    name, n = run.cfg.field, run.cfg.n
    if name == "PropC1":
        variants = {"PropC1": c1_ansatz(n)}
    elif name == "PropC2":
        variants = {v: c2_ansatz(n, v) for v in C2_VARIANTS}
    elif name in C2_VARIANTS:
        variants = {name: c2_ansatz(n, name)}
    else:
        variants = {}
    result = {"field": name, "n": n, "grid": [float(GRID[0]), float(GRID[-1]), GRID.size]}
    cols, table = [], {}
    for key, ansatz in variants.items():
        res = np.abs(radial_residual(ansatz, GRID, n))
        eig = 1.0 + np.asarray(ansatz.a(GRID), dtype=float)
        table[key] = (res, eig)
        cols += [f"residual_{key}", f"minEig_{key}"]
        result[key] = {"maxResidual": float(res.max()), "minEigenvalue": float(min(1.0, eig.min()))}
        run.say(f"{key}: max |residual| = {res.max():.3e}, min eigenvalue = {min(1.0, eig.min()):.4f}")
    if table:
        rows = [(r, *[v for key in table for v in (table[key][0][i], min(1.0, table[key][1][i]))])
                for i, r in enumerate(GRID)]
        run.csv("verify.csv", ["r", *cols], rows, "r dimensionless radius; residual of the radial equation")
        run.figure("residual_curves", "verify.png", GRID, {k: v[0] for k, v in table.items()}, title=name)
    if name == "PropC2":
        pair = ("PropC2_paperDenominator", "PropC2_tripleLogDenominator")
        small = [k for k in pair if result[k]["maxResidual"] < 1e-6]
        large = [k for k in pair if result[k]["maxResidual"] > 1e-2]
        ok = len(small) == 1 and len(large) == 1
        result["resolvedVariant"] = small[0] if ok else None
        run.check("variant disambiguation", ok, f"solving reading: {small[0] if small else 'none'}")
        if ok:
            run.check("ellipticity", result[small[0]]["minEigenvalue"] > 0)
    elif variants:
        key = next(iter(variants))
        run.check("radial residual", result[key]["maxResidual"] < RESIDUAL_TOL, f"{result[key]['maxResidual']:.3e}")
        run.check("ellipticity", result[key]["minEigenvalue"] > 0, f"{result[key]['minEigenvalue']:.4f}")
    else:
        A, _ = _example(run.cfg)
        rep = check_bounded_elliptic(A, samples=2048, test_functions=16, seed=run.cfg.seed)
        result["ellipticity"] = rep.as_dict()
        run.check("bounded and elliptic", rep.ok, f"max |A| {rep.max_norm:.4f}, min form ratio {rep.min_form_ratio:.4f}")
    return result


def cmd_modulus(run: Run) -> dict:
    from .oscillation import CenterStrategy, gradient_oscillation_profile, modulus_profile, sup_modulus

    cfg = run.cfg
    radii = parse_radii(cfg.radii)
    A, u = _example(cfg, need_solution=cfg.kind == "gradient")
    strategy = CenterStrategy(spacing=cfg.spacing, window=cfg.window if cfg.window > 0 else None)
    rule = _rule(cfg)
    if cfg.kind == "osc":
        prof = modulus_profile(A, radii, cfg.p, strategy, rule)
    elif cfg.kind in ("uniform", "pointwiseL2"):
        prof = sup_modulus(A, radii, cfg.kind, strategy, rule)
    elif cfg.kind == "gradient":
        prof = gradient_oscillation_profile(u, radii, cfg.p, rule=rule, n=cfg.n)
    else:
        raise ConfigError("kind must be osc, uniform, pointwiseL2 or gradient")
    rows = [(*row, *arg) for row, arg in zip(prof.rows(), prof.argmax_centers)]
    run.csv("modulus.csv", ["radius", "value", "centersTried", "estimator", *[f"argmax_x{i + 1}" for i in range(cfg.n)]],
            rows, "radius dimensionless; value in coefficient units")
    vals = np.asarray(prof.values)
    run.check("finite and non-negative", bool(np.all(np.isfinite(vals)) and np.all(vals >= 0)))
    run.say(f"doubling constant {prof.doubling_constant():.4f}; BMO seminorm (sampled) {prof.bmo_seminorm():.4g}; "
            f"VMO trend {prof.vmo_trend()}")
    run.figure("loglog_profile", "modulus.png", prof.radii, vals, title=f"{cfg.kind} modulus of {cfg.field}")
    return {"profile": prof.as_dict()}


def cmd_dini(run: Run) -> dict:
    from .dini import ModulusError, default_depths, dini_integral, x_limsup_estimate

    cfg = run.cfg
    omega = _modulus(cfg.modulus or "const:0")
    c_values = parse_floats(cfg.c, "C")
    if any(c < 0 for c in c_values):
        raise ConfigError("C must be non-negative")
    reports, rows, curves = {}, [], {}
    depths = default_depths()
    for C in c_values:
        rep = x_limsup_estimate(omega, C, depths=depths, R=cfg.R)
        reports[f"{C:g}"] = rep.as_dict()
        with np.errstate(over="ignore"):
            s = np.exp(rep.depths)
            xs = np.exp(rep.log_x)
        rows += [(C, w, si, lx, x) for w, si, lx, x in zip(rep.depths, s, rep.log_x, xs)]
        curves[f"C={C:g}"] = (rep.depths, rep.log_x)
        run.say(f"C = {C:g}: classification {rep.classification}, final ln X = {rep.log_x[-1]:.4g}")
        run.check(f"X values non-negative (C={C:g})", bool(np.all(~np.isnan(rep.log_x))))
    try:
        dini = dini_integral(omega, DINI_FLOOR, cfg.R)
    except ModulusError:
        dini = math.inf
    run.say(f"int_(1e-300)^R w(t)/t dt = {dini:.6g}")
    run.csv("dini.csv", ["C", "w", "ln_inv_r", "ln_X", "X"], rows,
            "w = ln ln(1/r) depth; X dimensionless (r times an integral of w/t^2)")
    run.figure("x_curves", "dini.png", curves, title=omega.spec)
    return {"modulus": omega.spec, "R": cfg.R, "reports": reports, "diniIntegralFrom1e-300": dini}


def _solution_boundary(cfg):
    if cfg.boundary == "solution":
        _, u = _example(cfg, need_solution=True)
        return lambda x: np.asarray(u(x)).reshape(-1), getattr(u, "name", cfg.field)
    table = {
        "x1": lambda x: x[:, 0],
        "x1x2": lambda x: x[:, 0] * x[:, 1],
        "zero": lambda x: np.zeros(len(x)),
    }
    if cfg.boundary not in table:
        raise ConfigError(f"boundary must be 'solution' or one of {', '.join(table)}")
    return table[cfg.boundary], cfg.boundary


def cmd_solve(run: Run) -> dict:
    from .solver import DiscreteProblem, Grid, assemble_and_solve

    cfg = run.cfg
    if cfg.n != 2:
        raise ConfigError("the solver handles n = 2 only")
    if not 0 < cfg.radius <= math.sqrt(2):
        raise ConfigError("radius must lie in (0, sqrt 2]")
    try:
        grid = Grid.for_ball(2 * cfg.radius, cfg.cells)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    A, _ = _example(cfg)
    g, gname = _solution_boundary(cfg)
    sol = assemble_and_solve(DiscreteProblem(A, boundary=g), grid, cfg.tol, cfg.max_iter)
    run.csv("solution.csv", ["x", "y", "value", "gradx", "grady"], sol.to_rows(),
            "x, y dimensionless; value in units of the boundary data")
    e = sol.energy
    run.check("solve residual", sol.solve_residual <= cfg.tol, f"{sol.solve_residual:.3e} in {sol.iterations} iterations")
    run.check("Galerkin orthogonality", sol.galerkin_residual <= 10 * cfg.tol, f"{sol.galerkin_residual:.3e}")
    lo, hi = e["lambdaMin"] * e["gradL2sq"], e["LambdaMax"] * e["gradL2sq"]
    run.check("energy bound", lo * (1 - 1e-9) <= e["form"] <= hi * (1 + 1e-9), f"{lo:.6g} <= {e['form']:.6g} <= {hi:.6g}")
    xy = grid.node_coords()
    run.figure("solution_map", "solution.png", xy[:, 0], xy[:, 1], sol.values, title=f"{cfg.field}, boundary {gname}")
    return {"cells": cfg.cells, "radius": cfg.radius, "iterations": sol.iterations,
            "solveResidual": sol.solve_residual, "galerkinResidual": sol.galerkin_residual, "energy": e}


def cmd_cascade(run: Run) -> dict:
    from .estimates import coefficient_modulus
    from .solver import continuity_recovery, replacement_cascade

    cfg = run.cfg
    if cfg.n != 2:
        raise ConfigError("the cascade runs in n = 2 only")
    if cfg.kmax < 0:
        raise ConfigError("kmax must be >= 0")
    A, u = _example(cfg, need_solution=True)
    seq = replacement_cascade(u, A, k_max=cfg.kmax, cells=cfg.cells, tol=cfg.tol, rule=_rule(cfg, 4096))
    omega = coefficient_modulus(A, rule=_rule(cfg))
    witness = seq.recursion_witness(omega)
    tri = seq.triangle_check()
    cont = continuity_recovery(seq)
    run.csv("cascade.csv", ["k", "R_k", "a_k", "b_k", "grad_u_scaled", "grad_h0_x", "grad_h0_y", "increment_sup",
                            "iterations"], seq.as_rows(), "R_k dimensionless; a_k, b_k in gradient units")
    run.check("recursion witness", witness["C"] <= cfg.c_cap, f"C = {witness['C']:.4g} (cap {cfg.c_cap:g})")
    run.check("triangle bound", all(ok for *_, ok in tri))
    run.check("a_k, b_k non-negative", bool(np.all(seq.a() >= 0) and np.all(seq.b() >= 0)))
    run.say(f"gradient at origin per level: {', '.join(f'{g[0]:.4f}' for g in cont.grad_at_origin)}; "
            f"Cauchy trend {cont.summable}")
    run.figure("cascade_plot", "cascade.png", [lv.R for lv in seq.levels], seq.a(), seq.b(), title=cfg.field)
    return {"levels": [lv.as_dict() for lv in seq.levels], "witness": witness,
            "triangle": [{"lhs": a, "bound": b, "ok": ok} for a, b, ok in tri], "continuity": cont.as_dict()}


def cmd_report(run: Run) -> dict:
    from .estimates import (
        UnboundedGradientError, coefficient_modulus, est1_report, est2_report, est3_report, hrep_report, hrep_sweep,
    )

    cfg = run.cfg
    wanted = [e.strip() for e in cfg.estimates.split(",") if e.strip()]
    bad = set(wanted) - {"est1", "est2", "est3", "hrep"}
    if bad:
        raise ConfigError(f"unknown estimates: {', '.join(sorted(bad))}")
    out = {}
    needs_field = any(e in wanted for e in ("est1", "est2", "est3"))
    if needs_field:
        A, u = _example(cfg, need_solution=True)
        # for synthetic fields the modulus builds A, so omega is measured
        override = cfg.modulus and not cfg.field.startswith("Synthetic")
        omega = _modulus(cfg.modulus) if override else coefficient_modulus(A, rule=_rule(cfg))
    units = "r, R dimensionless; lhs and rhs in squared gradient units times volume"
    for est in wanted:
        if est == "hrep":
            reps = {k: hrep_report(hrep_sweep(k)) for k in ("coefficient", "forcing")}
            for k, rep in reps.items():
                run.csv(f"hrep_{k}.csv", ["eps", "cells", "lhs", "rhs", "ratio"],
                        [(e, m, lo, hi, lo / hi) for (e, m), lo, hi in zip(rep.scales, rep.lhs, rep.rhs_structural)],
                        "eps dimensionless; lhs, rhs in gradient L2 units")
                slopes = list(rep.meta["slopes"].values())
                run.check(f"HRep {k} slope", all(0.9 <= s <= 1.1 for s in slopes), ", ".join(f"{s:.4f}" for s in slopes))
                run.check(f"HRep {k} fitted C", rep.bounded_flag,
                          f"C = {rep.fitted_c:.4g}, coarse C = {rep.refined_c:.4g}")
                out[f"hrep_{k}"] = rep.as_dict()
            continue
        fn = {"est1": est1_report, "est2": est2_report, "est3": est3_report}[est]
        try:
            rep = fn(u, omega, c_cap=cfg.c_cap)
        except UnboundedGradientError as exc:
            run.say(f"{est}: input rejected: {exc}")
            out[est] = {"rejected": True, "diagnostic": str(exc)}
            continue
        run.csv(f"{est}.csv", rep.header(), rep.rows(), units)
        run.check(f"{est} fitted C", rep.bounded_flag,
                  f"C = {rep.fitted_c:.4g}, refined {rep.refined_c if rep.refined_c is None else f'{rep.refined_c:.4g}'}")
        run.figure("ratio_plot", f"{est}.png", [s[0] for s in rep.scales], rep.ratios(), title=f"{est} on {cfg.field}")
        out[est] = rep.as_dict()
    return out


COMMANDS = {
    "modulus": (cmd_modulus, "oscillation profiles of a field"),
    "dini": (cmd_dini, "Dini integral and X functional classification"),
    "verify-example": (cmd_verify_example, "radial residual and ellipticity of a named example"),
    "solve": (cmd_solve, "one Dirichlet solve"),
    "cascade": (cmd_cascade, "harmonic-replacement cascade"),
    "report": (cmd_report, "Est1, Est2, Est3 and HRep reports"),
}


# --------------------------------------------------------------------------
# argument handling


def _common(p: argparse.ArgumentParser):
    g = p.add_argument_group("configuration (flags override the config file)")
    g.add_argument("--config", help="key = value config file")
    g.add_argument("--out", help="output directory")
    g.add_argument("--n", type=int)
    g.add_argument("--p", type=float)
    g.add_argument("--radii", help="dyadic:a:b, 4adic:a:b or a comma list")
    g.add_argument("--kind", help="osc, uniform, pointwiseL2 or gradient")
    g.add_argument("--window", type=float, help="center window in units of r (0 = all of B_2)")
    g.add_argument("--spacing", type=float)
    g.add_argument("--quadrature")
    g.add_argument("--points", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--modulus", help="const:c, powlog:k, loglog:b, pow:a[:s] or table:path.csv")
    g.add_argument("--C", dest="c", help="comma list of C values")
    g.add_argument("--R", type=float)
    g.add_argument("--cells", type=int)
    g.add_argument("--tol", type=float)
    g.add_argument("--max-iter", dest="max_iter", type=int)
    g.add_argument("--kmax", type=int)
    g.add_argument("--radius", type=float)
    g.add_argument("--boundary")
    g.add_argument("--estimates")
    g.add_argument("--c-cap", dest="c_cap", type=float)
    g.add_argument("--no-plots", dest="plots", action="store_const", const=False)
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oscillab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        if name == "verify-example":
            p.add_argument("field", nargs="?")
        else:
            p.add_argument("--field")
        _common(p)
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    values = {k: getattr(args, k, None) for k in ExperimentConfig.keys()}
    return cfg.updated(values)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else CONFIG_ERROR
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    from .dini import ModulusError
    from .fields import FieldDomainError
    from .quadrature import QuadratureError
    from .solver import SolverError

    start = time.perf_counter()
    try:
        cfg = load_config(args)
        run = Run(args.command, cfg)
        payload = COMMANDS[args.command][0](run)
    except ConfigError as exc:
        print(f"oscillab: configuration error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (SolverError, QuadratureError, FieldDomainError, ModulusError, FloatingPointError, ArithmeticError) as exc:
        print(f"oscillab: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR
    return run.finish(payload, time.perf_counter() - start)


if __name__ == "__main__":
    sys.exit(main())
