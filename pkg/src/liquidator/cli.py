"""``liquidator`` command line: solve, simulate, frontier, residual, lob."""

from __future__ import annotations

import argparse
import datetime as _dt
import sys
from dataclasses import replace

import numpy as np

from . import __version__, kernels
from .config import PRESETS, ScenarioConfig, load_config, load_preset
from .constant_vol import inventory_trajectory, solve_constant_vol, value_function
from .errors import NumericalError, ValidationError
from .lob import (
    LobParams,
    arrival_rate,
    expected_inventory,
    lob_coefficients,
    min_feasible_target,
    mo_only_solution,
    capped_g_horizon,
)
from .market import ConstantVol, ModelParams, SlowOU, validate_venues
from .report import ReportBundle, Table, frontier_table, text_table, trading_curve_table, write_bundle
from .sim import SimConfig, efficient_frontier, run_monte_carlo, venues_for
from .stoch_vol import StochVolProblem, h0, h1, pde_value, residual_order_study

COMMANDS = ("solve", "simulate", "frontier", "residual", "lob")
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


# ------------------------------------------------------------------ model building


def _venue_sets(cfg: ScenarioConfig):
    m = cfg["market"]
    if m["venues"] is not None:
        venues = validate_venues([(v["beta"], v["eta_tem"]) for v in m["venues"]], m["eta_per"])
        return [(len(venues), venues)]
    return [(n, venues_for(n, m["eta_tem"], m["eta_per"])) for n in m["venue_counts"]]


def _constant_model(cfg: ScenarioConfig, lam=None) -> ModelParams:
    p = cfg["model"]
    return ModelParams(p["Q"], p["T"], p["lam"] if lam is None else lam, p["K"], ConstantVol(p["sigma"]))


def _stoch_model(cfg: ScenarioConfig) -> tuple[ModelParams, object, float]:
    p, f, m = cfg["model"], cfg["factor"], cfg["market"]
    vol = SlowOU(f["m"], f["epsilon"], f["xi"], f["rho"])
    params = ModelParams(p["Q"], p["T"], p["lam"], p["K"], vol)
    return params, validate_venues([(1.0, m["eta_tem"])], m["eta_per"]), f["nu0"]


def _lob_model(cfg: ScenarioConfig) -> LobParams:
    p, m, b = cfg["model"], cfg["market"], cfg["book"]
    lam_M = b["lambda_M"] if b["lambda_M"] is not None else arrival_rate(b["A"], b["kappa"], b["Delta"])
    return LobParams(
        Q=float(p["Q"]), T=p["T"], K=p["K"], eta_per=m["eta_per"], eta_tem=m["eta_tem"], sigma=p["sigma"],
        lambda_M=lam_M, Delta=b["Delta"], eta_u=b["eta_u"], eta_d=b["eta_d"], eta_I=b["eta_I"], lam=p["lam"],
    )


def _sim(cfg: ScenarioConfig, model, strategy="constant_vol", venues=None, nu0=0.5) -> SimConfig:
    s = cfg["simulation"]
    return SimConfig(model, strategy=strategy, venues=venues, dt=s["dt"], n_paths=s["n_paths"],
                     seed=s["seed"], S0=s["S0"], nu0=nu0, shocks=s["shocks"])


def _require(cfg: ScenarioConfig, *settings):
    if cfg.setting not in settings:
        raise ValidationError(f"{cfg.source}: field 'setting': this command needs {' or '.join(settings)}, got {cfg.setting}")


def _grid(T: float, points: int) -> np.ndarray:
    return np.linspace(0.0, T, points)


# ------------------------------------------------------------------ commands


def cmd_solve(cfg: ScenarioConfig) -> ReportBundle:
    tables: dict[str, Table] = {}
    summary: dict = {}
    points = cfg["output"]["trajectory_points"]
    if cfg.setting == "constant_vol":
        params = _constant_model(cfg)
        rows = []
        for n, venues in _venue_sets(cfg):
            sol = solve_constant_vol(params, venues)
            grid = _grid(params.T, points)
            tables[f"trading_curve_N{n}.csv"] = trading_curve_table(sol, grid)
            X_T = float(inventory_trajectory(sol, grid).inventory[-1])
            rows.append([n, sol.delta_N, sol.branch.value, float(sol.varsigma) if sol.varsigma is not None else float("nan"),
                         float(value_function(0.0, params.Q, sol)), X_T, sol.admissible])
        tables["solution.csv"] = Table(["venues", "delta_N", "branch", "varsigma", "value_0", "X_T", "admissible"], rows)
        text = text_table("Closed-form solutions", tables["solution.csv"].columns, rows)
    elif cfg.setting == "stoch_vol":
        params, venues, nu0 = _stoch_model(cfg)
        prob = StochVolProblem(params, venues.venues[0].eta_tem, venues.eta_per)
        grid = _grid(params.T, points)
        h0v = h0(grid, nu0, prob)
        h1v = np.array([h1(t, nu0, prob) for t in grid])
        eps = params.vol.epsilon
        table = Table(["t", "h0", "h1", "h", "rate_coef_moving", "rate_coef_corrected"])
        for i, t in enumerate(grid):
            h = h0v[i] + eps * h1v[i]
            table.rows.append([float(t), float(h0v[i]), float(h1v[i]), float(h),
                               float(-(2 * h0v[i] + prob.eta_per) / (2 * prob.eta_tem)),
                               float(-(2 * h + prob.eta_per) / (2 * prob.eta_tem))])
        tables["correction.csv"] = table
        summary.update(h0_at_0=float(h0v[0]), h1_at_0=float(h1v[0]), nu0=nu0)
        text = text_table("Expansion at t = 0", ["nu0", "h0", "h1"], [[nu0, float(h0v[0]), float(h1v[0])]])
    else:
        return _lob_solve(cfg, points)
    summary.setdefault("rows", len(tables))
    return ReportBundle(tables, summary, {}, text)


def _lob_solve(cfg: ScenarioConfig, points: int) -> ReportBundle:
    p = _lob_model(cfg)
    mo = mo_only_solution(p)
    grid = _grid(p.T, points)
    coeffs = lob_coefficients(p, grid)
    ex = expected_inventory(grid, p, coeffs)
    table = Table(["t", "h", "g", "f", "expected_inventory", "mo_only_inventory"])
    for i, t in enumerate(grid):
        table.rows.append([float(t), float(coeffs.h[i]), float(coeffs.g[i]), float(coeffs.f[i]),
                           float(ex[i]), float(mo.inventory(t))])
    bound = min_feasible_target(p, coeffs)
    summary = {
        "lambda_M": p.lambda_M,
        "mo_only_X_T": mo.X_T,
        "min_feasible_target": bound,
        "horizon_bound": capped_g_horizon(p),
        "target_feasible": p.Q >= bound,
    }
    text = text_table("Limit-order closed forms", list(summary), [list(summary.values())])
    return ReportBundle({"coefficients.csv": table}, summary, {}, text)


def cmd_simulate(cfg: ScenarioConfig) -> ReportBundle:
    if cfg.setting == "lob":
        return cmd_lob(cfg)
    paths = Table(["label", "path", "gain_loss", "quadratic_variation", "final_inventory", "objective"])
    if cfg.setting == "constant_vol":
        params = _constant_model(cfg)
        summary_rows = []
        for n, venues in _venue_sets(cfg):
            res = run_monte_carlo(_sim(cfg, params, venues=venues))
            s = res.stats
            summary_rows.append([n, s.mean, s.std, s.mean_final_inventory, s.std_final_inventory, s.mean_objective])
            _path_rows(paths, f"N{n}", res)
        cols = ["venues", "mean_gl", "std_gl", "mean_final_inventory", "std_final_inventory", "mean_objective"]
        summary_table = Table(cols, summary_rows)
        text = text_table("Monte Carlo by venue count", cols, summary_rows)
    else:
        params, venues, nu0 = _stoch_model(cfg)
        stats = {}
        for strat in cfg["strategies"]:
            res = run_monte_carlo(_sim(cfg, params, strat, venues, nu0))
            stats[strat] = res.stats
            _path_rows(paths, strat, res)
        cols = ["statistic"] + list(stats)
        rows = [[name] + [getattr(s, attr) for s in stats.values()] for name, attr in
                (("mean", "mean"), ("std", "std"), ("skewness", "skewness"), ("kurtosis", "kurtosis"),
                 ("objective", "mean_objective"))]
        summary_table = Table(cols, rows)
        text = text_table("Monte Carlo by strategy", cols, rows)
    return ReportBundle({"summary.csv": summary_table, "paths.csv": paths}, {}, {}, text)


def _path_rows(table: Table, label: str, res) -> None:
    obj = res.objective
    for i, row in enumerate(res.records):
        table.rows.append([label, i, float(row[0]), float(row[1]), float(row[2]), float(obj[i])])


def cmd_frontier(cfg: ScenarioConfig) -> ReportBundle:
    _require(cfg, "constant_vol")
    fr = cfg["frontier"]
    m = cfg["market"]
    if m["venues"] is not None:
        venues = _venue_sets(cfg)[0][1]
    else:
        venues = venues_for(fr["venues"], m["eta_tem"], m["eta_per"])
    points = efficient_frontier(fr["lambdas"], _sim(cfg, _constant_model(cfg), venues=venues))
    table = frontier_table(points)
    text = text_table("Efficient frontier", table.columns, table.rows)
    return ReportBundle({"frontier.csv": table}, {"venues": len(venues)}, {}, text)


def cmd_residual(cfg: ScenarioConfig) -> ReportBundle:
    _require(cfg, "stoch_vol")
    params, venues, _ = _stoch_model(cfg)
    r = cfg["residual"]
    prob = StochVolProblem(params, venues.venues[0].eta_tem, venues.eta_per)
    study = residual_order_study(prob, r["epsilons"], t=r["t"], nu=r["nu"], q=r["q"], dnu=r["dnu"], t_steps=r["t_steps"])
    table = Table(["epsilon", "residual"], [[float(e), float(v)] for e, v in zip(study.epsilons, study.residuals)])
    # spatial convergence of the oracle itself at the smallest epsilon
    small = prob.with_epsilon(min(r["epsilons"]))
    vals = [pde_value(small, r["t"], r["nu"], r["dnu"] * 2.0 ** -k, r["t_steps"], richardson=False) for k in range(3)]
    ratio = (vals[0] - vals[1]) / (vals[1] - vals[2])
    summary = {"slope": study.slope, "spatial_ratio": float(ratio)}
    text = text_table("Expansion residual", ["epsilon", "residual"], table.rows) + f"\nslope {study.slope:.3f}, grid ratio {ratio:.2f}"
    return ReportBundle({"residual.csv": table}, summary, {}, text)


def cmd_lob(cfg: ScenarioConfig) -> ReportBundle:
    _require(cfg, "lob")
    p = _lob_model(cfg)
    bundle = _lob_solve(cfg, cfg["output"]["trajectory_points"])
    paths = Table(["label", "path", "gain_loss", "quadratic_variation", "final_inventory", "fills"])
    rows = []
    for strat in cfg["strategies"]:
        res = run_monte_carlo(_sim(cfg, p, strat))
        s = res.stats
        fills = res.column("fills")
        rows.append([strat, s.mean, s.std, s.mean_final_inventory, float(fills.mean())])
        for i, row in enumerate(res.records):
            paths.rows.append([strat, i, float(row[0]), float(row[1]), float(row[2]), int(row[4])])
    cols = ["strategy", "mean_pnl", "std_pnl", "mean_final_inventory", "mean_fills"]
    bundle.tables["summary.csv"] = Table(cols, rows)
    bundle.tables["paths.csv"] = paths
    bundle.text += "\n\n" + text_table("Limit-order Monte Carlo", cols, rows)
    return bundle


DISPATCH = {"solve": cmd_solve, "simulate": cmd_simulate, "frontier": cmd_frontier,
            "residual": cmd_residual, "lob": cmd_lob}


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liquidator", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=DISPATCH[name].__doc__)
        src = sp.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="scenario JSON file")
        src.add_argument("--preset", choices=PRESETS, help="bundled scenario")
        sp.add_argument("--out-dir", default="liquidator-out", help="directory for CSV/JSON output")
        sp.add_argument("--seed", type=int, help="override simulation.seed")
        sp.add_argument("--paths", type=int, help="override simulation.n_paths")
        sp.add_argument("--quiet", action="store_true", help="do not print summary tables")
    return parser


def apply_overrides(cfg: ScenarioConfig, seed=None, paths=None) -> ScenarioConfig:
    sim = dict(cfg["simulation"])
    if seed is not None:
        if not 0 <= seed < 2**64:
            raise ValidationError("--seed: must be an unsigned 64-bit integer")
        sim["seed"] = seed
    if paths is not None:
        if paths < 1:
            raise ValidationError("--paths: must be >= 1")
        sim["n_paths"] = paths
    sections = dict(cfg.sections, simulation=sim)
    return replace(cfg, sections=sections)


def run(command: str, cfg: ScenarioConfig, out_dir) -> ReportBundle:
    bundle = DISPATCH[command](cfg)
    bundle.metadata = {
        "command": command,
        "setting": cfg.setting,
        "source": cfg.source,
        "seed": cfg["simulation"]["seed"],
        "n_paths": cfg["simulation"]["n_paths"],
        "version": __version__,
        "backend": kernels.BACKEND,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": cfg.to_json(),
    }
    write_bundle(bundle, out_dir)
    return bundle


def run_scenario(config_path, command: str = "simulate", out_dir="liquidator-out"):
    """Load a scenario file, run ``command`` and write its outputs.

    Returns ``(bundle, exit_code)``; the bundle is None when the run failed.
    """
    try:
        return run(command, load_config(config_path), out_dir), 0
    except ValidationError:
        return None, EXIT_VALIDATION
    except NumericalError:
        return None, EXIT_NUMERICAL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_preset(args.preset) if args.preset else load_config(args.config)
        cfg = apply_overrides(cfg, args.seed, args.paths)
        bundle = run(args.command, cfg, args.out_dir)
    except ValidationError as exc:
        print(f"liquidator: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"liquidator: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if not args.quiet and bundle.text:
        print(bundle.text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
