"""Command-line front end: config parsing, subcommand dispatch, manifests.

Subcommands:
  growth-rate       solve for the growth rate, emit a JSON report + snapshots
  oracle-check      compare the iterative maximizer with the dense oracle
  linear-evolve     march the linearized system from the unstable mode
  nonlinear-evolve  march the full system from a delta-scaled seed
  sweep             run the error-scaling / escape-time / headline experiments

Exit codes: 0 success, 1 configuration or usage failure, 2 numerical failure.
All randomness derives from the single config seed; outputs are byte-stable
for a fixed config.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import __version__
from . import lab
from .grid import Grid, ScalarField, VelocityField, write_component
from .growth import VariationalProblem, alpha, oracle_alpha_dense, solve_lambda
from .linear import (
    LinearState,
    LinearStepper,
    analytic_mode,
    evolve,
    state_deviation,
)
from .nonlinear import NonlinearStepper, State, run as run_nonlinear
from .operators import norm_l2
from .profiles import (
    DensityProfile,
    PhysicalParams,
    builtin_profile,
    profile_from_csv,
)
from .solvers import CompatibilityError, ConvergenceError


class ConfigError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class RunConfig:
    grid_n: tuple
    grid_l: tuple
    profile: DensityProfile
    params: PhysicalParams
    power_tol: float
    fixed_point_tol: float
    deltas: list
    lambda_t_final: float
    epsilon0: float | None
    n_samples: int
    time_margin: float
    seed: int
    out: str
    raw: dict = dc_field(default_factory=dict)

    def make_grid(self) -> Grid:
        return Grid(self.grid_n, self.grid_l)


def parse_config(path) -> RunConfig:
    """Load and validate a JSON config, reporting every violation at once."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ConfigError(["config root must be a JSON object"])

    errs: list[str] = []
    known = {"grid", "profile", "physics", "solver", "experiment", "seed", "out"}
    for key in raw:
        if key not in known:
            errs.append(f"unknown section '{key}' (expected {sorted(known)})")

    gsec = raw.get("grid", {})
    n = tuple(gsec.get("n", (32, 32)))
    L = tuple(gsec.get("L", tuple(1.0 for _ in n)))
    if len(n) not in (2, 3):
        errs.append("grid.n must have 2 or 3 entries")
    if len(L) != len(n):
        errs.append("grid.L must match grid.n in length")
    if any((not isinstance(k, int)) or k < 4 for k in n):
        errs.append("grid.n entries must be integers >= 4")
    if any(x <= 0 for x in L):
        errs.append("grid.L entries must be positive")

    phys = raw.get("physics", {})
    mu = phys.get("mu", 0.01)
    g = phys.get("g", 1.0)
    if not (isinstance(mu, (int, float)) and mu > 0):
        errs.append("physics.mu must be positive (viscous flow)")
    if not (isinstance(g, (int, float)) and g > 0):
        errs.append("physics.g must be positive")

    solver = raw.get("solver", {})
    power_tol = float(solver.get("power_tol", 1e-9))
    fp_tol = float(solver.get("fixed_point_tol", 1e-13))
    if power_tol <= 0 or fp_tol <= 0:
        errs.append("solver tolerances must be positive")

    exp = raw.get("experiment", {})
    deltas = list(exp.get("deltas", [1e-4, 3e-4, 1e-3]))
    if not deltas or any(d <= 0 for d in deltas):
        errs.append("experiment.deltas must be positive")
    lt_final = float(exp.get("lambda_t_final", 1.0))
    eps0 = exp.get("epsilon0")
    n_samples = int(exp.get("n_samples", 8))
    time_margin = float(exp.get("time_margin", 4.0))

    seed = raw.get("seed", 12345)
    if not isinstance(seed, int):
        errs.append("seed must be an integer")

    profile = None
    psec = raw.get("profile", {"kind": "linear"})
    try:
        if "csv" in psec:
            csv_path = Path(psec["csv"])
            if not csv_path.is_file():
                errs.append(f"profile.csv file not found: {csv_path}")
            else:
                profile = profile_from_csv(csv_path, psec.get("height"))
        else:
            params = dict(psec.get("params", {}))
            if len(L) == len(n) and "height" not in params:
                params["height"] = float(L[-1])
            profile = builtin_profile(psec.get("kind", "linear"), params)
    except ValueError as exc:
        errs.append(f"profile: {exc}")

    if errs:
        raise ConfigError(errs)
    return RunConfig(
        grid_n=n,
        grid_l=tuple(float(x) for x in L),
        profile=profile,
        params=PhysicalParams(mu=float(mu), g=float(g)),
        power_tol=power_tol,
        fixed_point_tol=fp_tol,
        deltas=[float(d) for d in deltas],
        lambda_t_final=lt_final,
        epsilon0=None if eps0 is None else float(eps0),
        n_samples=n_samples,
        time_margin=time_margin,
        seed=int(seed),
        out=str(raw.get("out", ".")),
        raw=raw,
    )


def config_hash(raw: dict) -> str:
    return hashlib.sha256(
        json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


class Manifest:
    def __init__(self, cfg: RunConfig, out_dir: Path):
        self.data = {
            "config_sha256": config_hash(cfg.raw),
            "version": __version__,
            "stages": {},
            "outputs": [],
        }
        self.out_dir = out_dir
        self._t0 = None
        self._stage = None

    def start(self, stage: str):
        self._stage = stage
        self._t0 = time.perf_counter()

    def stop(self):
        if self._stage is not None:
            self.data["stages"][self._stage] = time.perf_counter() - self._t0
            self._stage = None

    def add_output(self, path: Path):
        self.data["outputs"].append(str(path.relative_to(self.out_dir)))

    def write(self):
        self.stop()
        path = self.out_dir / "manifest.json"
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _solve_growth(cfg: RunConfig):
    grid = cfg.make_grid()
    prob = VariationalProblem(
        grid, cfg.profile, cfg.params,
        power_tol=cfg.power_tol, fp_tol=cfg.fixed_point_tol,
    )
    return solve_lambda(prob)


def cmd_growth_rate(cfg: RunConfig, args, out: Path, manifest: Manifest) -> int:
    manifest.start("growth_rate")
    res = _solve_growth(cfg)
    report = {
        "lambda": res.lambda_,
        "stable": res.stable,
        "marginal": res.marginal,
        "fixedpoint_residual": res.fixedpoint_residual,
        "eigen_residual": res.eigen_residual,
        "refinement_residual": res.refinement_residual,
        "iterations": res.iterations,
        "alpha_at_lambda": res.alpha_at_lambda,
    }
    if args.oracle:
        prob = res.problem
        s_pts = [0.0] if res.stable else [0.0, res.lambda_ / 2, res.lambda_]
        comparisons = []
        for s in s_pts:
            a = alpha(prob, s).value
            o = oracle_alpha_dense(prob, s)
            comparisons.append({"s": s, "alpha": a, "oracle": o,
                                "abs_diff": abs(a - o)})
        report["oracle"] = comparisons
    rp = out / "growth_rate.json"
    write_json(rp, report)
    manifest.add_output(rp)
    if not res.stable:
        grid = res.problem.grid
        for i, comp in enumerate(res.eigenfield.components):
            fp = out / f"eigen_v{i}.rtfld"
            write_component(fp, grid, comp)
            manifest.add_output(fp)
        fp = out / "eigen_pressure.rtfld"
        write_component(fp, grid, res.pressure.values)
        manifest.add_output(fp)
    return 0


def cmd_oracle_check(cfg: RunConfig, args, out: Path, manifest: Manifest) -> int:
    manifest.start("oracle_check")
    res = _solve_growth(cfg)
    prob = res.problem
    s_pts = [0.0] if res.stable else [0.0, res.lambda_ / 2, res.lambda_]
    rows, ok = [], True
    for s in s_pts:
        a = alpha(prob, s).value
        o = oracle_alpha_dense(prob, s)
        tol = 1e-6 * (1.0 + abs(a))
        passed = abs(a - o) <= tol
        ok = ok and passed
        rows.append({"s": s, "alpha": a, "oracle": o,
                     "abs_diff": abs(a - o), "tol": tol, "pass": passed})
    rp = out / "oracle_check.json"
    write_json(rp, {"lambda": res.lambda_, "checks": rows, "pass": ok})
    manifest.add_output(rp)
    return 0 if ok else 2


def cmd_linear_evolve(cfg: RunConfig, args, out: Path, manifest: Manifest) -> int:
    manifest.start("linear_evolve")
    res = _solve_growth(cfg)
    if res.stable:
        raise ConvergenceError("profile is stable; no unstable mode to evolve")
    grid = cfg.make_grid()
    stepper = LinearStepper(grid, cfg.profile, cfg.params)
    dt = args.dt if args.dt is not None else min(
        0.01 / res.lambda_, stepper.dt_max
    )
    if dt > stepper.dt_max:
        raise ConfigError(
            [f"--dt {dt:g} exceeds the diffusive guard {stepper.dt_max:g}"]
        )
    tmax = args.tmax if args.tmax is not None else 2.0 / res.lambda_
    state = analytic_mode(res, 0.0)
    rows = []

    def record(s: LinearState):
        ref = analytic_mode(res, s.t)
        rows.append((
            s.t,
            norm_l2(s.rho_pert),
            norm_l2(s.vel),
            _vertical_norm(s.vel),
            state_deviation(s, ref),
        ))

    evolve(stepper, state, tmax, dt, record=record)
    cp = out / "linear_evolve.csv"
    write_csv(
        cp,
        ["t", "norm_rho_l2", "norm_u_l2", "norm_u3_l2", "deviation_from_analytic"],
        rows,
    )
    manifest.add_output(cp)
    return 0


def _vertical_norm(vel) -> float:
    g = vel.grid
    v = VelocityField(g)
    v.components[g.d - 1] = vel.components[g.d - 1]
    return norm_l2(v)


def cmd_nonlinear_evolve(cfg: RunConfig, args, out: Path, manifest: Manifest) -> int:
    manifest.start("nonlinear_evolve")
    res = _solve_growth(cfg)
    if res.stable:
        raise ConvergenceError("profile is stable; no seed to scale")
    grid = cfg.make_grid()
    seed = lab.build_seed(res)
    delta = args.delta
    stepper = NonlinearStepper(grid, cfg.profile, cfg.params)
    initial = State(
        0.0, delta * seed.rho0_bar, delta * seed.u0_bar, ScalarField(grid)
    )
    tmax = args.tmax if args.tmax is not None else 1.0 / res.lambda_

    snapshots = []
    counter = {"k": 0}

    def observer(state, rep):
        counter["k"] += 1
        if args.snapshot_every and counter["k"] % args.snapshot_every == 0:
            for i, comp in enumerate(state.vel.components):
                fp = out / f"snap_{counter['k']:06d}_v{i}.rtfld"
                write_component(fp, grid, comp)
                snapshots.append(fp)
            fp = out / f"snap_{counter['k']:06d}_rho.rtfld"
            write_component(fp, grid, state.rho_pert.values)
            snapshots.append(fp)

    summary = run_nonlinear(stepper, initial, tmax, observer=observer)
    cp = out / "nonlinear_evolve.csv"
    write_csv(
        cp,
        ["t", "rho_l2", "ud_l2", "uh_l2", "E", "rho_min", "rho_max",
         "energy_residual", "dt"],
        [(r.t, r.rho_l2, r.ud_l2, r.uh_l2, r.energy, r.rho_min, r.rho_max,
          r.energy_residual, r.dt) for r in summary.rows],
    )
    manifest.add_output(cp)
    for fp in snapshots:
        manifest.add_output(fp)
    if summary.failure is not None:
        write_json(out / "failure.json", {"failure": summary.failure})
        manifest.add_output(out / "failure.json")
        return 2
    return 0


def cmd_sweep(cfg: RunConfig, args, out: Path, manifest: Manifest) -> int:
    manifest.start(f"sweep_{args.experiment}")
    summary: dict = {}
    if args.experiment == "headline":
        report = lab.run_headline_case(
            n=cfg.grid_n, L=cfg.grid_l, params=cfg.params, deltas=cfg.deltas
        )
        if report.failure:
            write_json(out / "sweep_summary.json", {"failure": report.failure})
            manifest.add_output(out / "sweep_summary.json")
            return 2
        rows = [(r.delta, r.t_measured, r.t_predicted, r.escaped)
                for r in report.escape.rows]
        cp = out / "headline_escape.csv"
        write_csv(cp, ["delta", "t_measured", "t_predicted", "escaped"], rows)
        manifest.add_output(cp)
        summary = {
            "lambda": report.lambda_bump,
            "slope": report.escape.slope,
            "slope_over_inv_lambda": report.escape.slope_over_inv_lambda,
            "epsilon0": report.escape.epsilon0,
            "pass_slope_10pct": report.slope_within_10pct,
            "stable_lambda": report.stable_lambda,
            "stable_is_stable": report.stable_is_stable,
        }
    else:
        res = _solve_growth(cfg)
        if res.stable:
            write_json(out / "sweep_summary.json",
                       {"lambda": 0.0, "stable": True, "escape": "none"})
            manifest.add_output(out / "sweep_summary.json")
            return 0
        seed = lab.build_seed(res)
        if args.experiment == "error-scaling":
            esr = lab.run_error_scaling(
                res, seed, cfg.profile, cfg.deltas,
                lambda_t_final=cfg.lambda_t_final, n_samples=cfg.n_samples,
            )
            cp = out / "error_scaling.csv"
            write_csv(
                cp,
                ["delta", "t", "err", "bound_ratio", "failed"],
                [(r.delta, r.t, r.err, r.bound_ratio, r.failed) for r in esr.rows],
            )
            manifest.add_output(cp)
            summary = {
                "lambda": esr.lambda_,
                "fitted_exponent": esr.fitted_exponent,
                "fitted_C": esr.fitted_c,
                "pass_exponent": bool(esr.fitted_exponent >= 1.4),
            }
        else:  # escape-time
            etr = lab.run_escape_time(
                res, seed, cfg.profile, cfg.deltas,
                epsilon0=cfg.epsilon0, time_margin=cfg.time_margin,
            )
            cp = out / "escape_time.csv"
            write_csv(
                cp,
                ["delta", "t_measured", "t_predicted", "escaped"],
                [(r.delta, r.t_measured, r.t_predicted, r.escaped)
                 for r in etr.rows],
            )
            manifest.add_output(cp)
            summary = {
                "lambda": etr.lambda_,
                "slope": etr.slope,
                "slope_over_inv_lambda": etr.slope_over_inv_lambda,
                "epsilon0": etr.epsilon0,
                "epsilon": etr.epsilon,
                "pass_slope_5pct": bool(
                    abs(etr.slope_over_inv_lambda - 1.0) <= 0.05
                ),
            }
    sp = out / "sweep_summary.json"
    write_json(sp, summary)
    manifest.add_output(sp)
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError([message])


def build_parser() -> _Parser:
    p = _Parser(prog="rtlab", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--config", required=True)
        sp.add_argument("--out", default=None,
                        help="output directory (default: config's 'out')")

    sp = sub.add_parser("growth-rate")
    common(sp)
    sp.add_argument("--oracle", action="store_true")

    sp = sub.add_parser("oracle-check")
    common(sp)

    sp = sub.add_parser("linear-evolve")
    common(sp)
    sp.add_argument("--tmax", type=float, default=None)
    sp.add_argument("--dt", type=float, default=None)

    sp = sub.add_parser("nonlinear-evolve")
    common(sp)
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--tmax", type=float, default=None)
    sp.add_argument("--snapshot-every", type=int, default=0)

    sp = sub.add_parser("sweep")
    common(sp)
    sp.add_argument("--experiment", required=True,
                    choices=["error-scaling", "escape-time", "headline"])
    return p


_COMMANDS = {
    "growth-rate": cmd_growth_rate,
    "oracle-check": cmd_oracle_check,
    "linear-evolve": cmd_linear_evolve,
    "nonlinear-evolve": cmd_nonlinear_evolve,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        threads = os.environ.get("RT_LAB_THREADS")
        if threads is not None:
            # numerical kernels are single-threaded numpy calls; this caps
            # any library-level parallelism for reproducible timing
            os.environ.setdefault("OMP_NUM_THREADS", threads)
        cfg = parse_config(args.config)
        out = Path(args.out if args.out is not None else cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = Manifest(cfg, out)
        try:
            code = _COMMANDS[args.command](cfg, args, out, manifest)
        finally:
            manifest.write()
        return code
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (ConvergenceError, CompatibilityError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
