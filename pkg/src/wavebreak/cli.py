"""``wavebreak`` command line: one subcommand per scenario kind.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ResolutionLossError, UsageError, WavebreakError
from .kernels import KernelSpec
from .ode import (IntegrationOptions, Outcome, SlackPair, classify_grid, integrate_equality,
                  integrate_inequality)
from .output import atomic_write, emit_figure_data, write_csv, write_json
from .report import build_summary
from .scenario import Scenario, parse_scenario
from .threshold import X_INTERCEPT, breaking_time_bound, classify, eval_G, separatrix_y
from .whitham import SERIES_COLUMNS, ProfileSpec, RunOptions, run

POINT_COLUMNS = ("m1", "m2", "G", "in_omega", "seliger_holds", "time_bound")
PDE_COLUMNS = ("m1_0", "m2_0", "g_value", "in_omega", "seliger_holds", "time_bound", "t_break_observed",
               "bound_satisfied", "status", "error")


@dataclass
class RunResult:
    summary: str
    paths: list = field(default_factory=list)


def _slack(cfg, seed):
    kind = cfg["kind"]
    if kind == "zero":
        return SlackPair.zero()
    if kind == "constant":
        return SlackPair.constant(cfg["a"], cfg["b"])
    if kind == "piecewise":
        return SlackPair.piecewise_random(seed, cfg["t_end"], cfg["pieces"], cfg["high"])
    return SlackPair.sinusoidal(cfg["amplitude"], cfg["omega"], offset=cfg["offset"])


def _kernel(cfg):
    return KernelSpec(cfg["kind"], cfg["width"])


def _run_options(p):
    return RunOptions(n=p["n"], L=p["L"], t_max=p["t_max"], cfl=p["cfl"], slope_cfl=p["slope_cfl"],
                      break_slope=p["break_slope"], tail_limit=p["tail_limit"], bound_tol=p["bound_tol"])


def _profile(cfg):
    if cfg["bumps"] is not None:
        return ProfileSpec(tuple((b["amplitude"], b["center"], b["width"]) for b in cfg["bumps"]))
    return ProfileSpec.two_sided(cfg["m1"], cfg["m2"], cfg["width"])


def _pde_point(args):
    m1, m2, width, kernel, opts = args
    try:
        rep = run(ProfileSpec.two_sided(m1, m2, width), kernel, opts)
        return {**{k: v for k, v in rep.to_dict().items() if k in PDE_COLUMNS}, "error": None}
    except (ResolutionLossError, ConfigError) as exc:
        v = classify(m1, m2)
        return {"m1_0": m1, "m2_0": m2, "g_value": v.g_value, "in_omega": v.in_omega,
                "seliger_holds": v.seliger_holds, "time_bound": v.time_bound, "t_break_observed": None,
                "bound_satisfied": None, "status": "failed", "error": str(exc)}


def _do_classify(s, out):
    rows = []
    for m1, m2 in s.params["points"]:
        v = classify(m1, m2)
        tb = breaking_time_bound(m1, m2, s.params["k0"])
        rows.append((m1, m2, v.g_value, v.in_omega, v.seliger_holds, None if math.isinf(tb) else tb))
    path = write_csv(out / f"{s.stem}.csv", POINT_COLUMNS, rows)
    inside = sum(r[3] for r in rows)
    return RunResult(f"classify: {len(rows)} points, {inside} in the breaking region", [path])


def _do_separatrix(s, out):
    lo, hi = s.params["x_range"]
    if hi > X_INTERCEPT * (1 - 1e-15):
        hi = min(hi, X_INTERCEPT)
    if lo >= hi:
        raise ConfigError("separatrix.x_range: must end at or below -4/e")
    xs = np.linspace(lo, hi, s.params["points"])
    xs[-1] = hi
    ys = separatrix_y(xs, tol=s.params["tol"])
    res = eval_G(xs, ys)
    path = write_csv(out / f"{s.stem}.csv", ("x", "y", "G_residual"), zip(xs, ys, res))
    return RunResult(f"separatrix: {len(xs)} points, max |G_residual| = {np.max(np.abs(res)):.3e}", [path])


def _do_portrait(s, out, threads):
    p = s.params
    paths = emit_figure_data(p["figure"], out, p["x_range"], p["y_range"], p["nx"], p["ny"], p["arrows"],
                             p["rtol"], workers=threads or 1, stem=s.output["stem"])
    return RunResult(f"portrait: {p['figure']} data in {len(paths)} files", paths)


def _do_ode_run(s, out):
    p = s.params
    opts = IntegrationOptions(rtol=p["rtol"], atol=p["atol"], t_max=p["t_max"], sample_dt=p["sample_dt"])
    if p["system"] == "equality":
        traj = integrate_equality(tuple(p["point"]), opts)
    else:
        traj = integrate_inequality(tuple(p["point"]), _slack(p["slack"], s.seed), opts)
    rows = zip(traj.times, traj.m1, traj.m2, traj.g, traj.separatrix_distance)
    paths = [write_csv(out / f"{s.stem}.csv", ("t", "m1", "m2", "G", "V"), rows)]
    v = classify(*p["point"])
    paths.append(write_json(out / f"{s.stem}.json", {
        "m1_0": v.point.m1, "m2_0": v.point.m2, "g_value": v.g_value, "in_omega": v.in_omega,
        "seliger_holds": v.seliger_holds, "time_bound": v.time_bound, "outcome": traj.outcome,
        "t_event": traj.t_event, "steps": traj.steps, "system": p["system"]}))
    te = "" if traj.t_event is None else f" at t = {traj.t_event:.6g}"
    return RunResult(f"ode-run: {traj.outcome.value}{te}", paths)


def _do_ode_sweep(s, out, threads):
    p = s.params
    opts = IntegrationOptions(rtol=p["rtol"], atol=p["atol"])
    workers = threads or p["workers"]
    cmap = classify_grid(p["x_range"], p["y_range"], p["nx"], p["ny"], opts, band=p["band"], workers=workers)
    rows = []
    for i, y in enumerate(cmap.ys):
        for j, x in enumerate(cmap.xs):
            o = cmap.outcome[i, j]
            g = cmap.g[i, j]
            te = cmap.t_event[i, j]
            rows.append((x, y, o, o is Outcome.BLOW_UP, g, None if np.isnan(te) else te, abs(g) <= p["band"]))
    paths = [write_csv(out / f"{s.stem}.csv", ("m1", "m2", "outcome", "blowup", "G", "t_event", "in_band"),
                       rows)]
    st = cmap.stats()
    paths.append(write_json(out / f"{s.stem}_summary.json", st))
    verdict = ">=" if st["agreement"] >= 0.99 else "<"
    return RunResult(f"ode-sweep: agreement {verdict} 99% outside band ({100 * st['agreement']:.2f}%, "
                     f"{st['agreeing']}/{st['compared']} cells, {st['in_band']} in band)", paths)


def _do_pde_run(s, out):
    p = s.params
    try:
        rep = run(_profile(p["profile"]), _kernel(p["kernel"]), _run_options(p))
    except ResolutionLossError as exc:
        if exc.series is not None:
            write_csv(out / f"{s.stem}_series.csv", SERIES_COLUMNS, exc.series)
        raise
    paths = [write_csv(out / f"{s.stem}_series.csv", SERIES_COLUMNS, rep.series),
             write_json(out / f"{s.stem}.json", rep.to_dict())]
    if rep.t_break_observed is None:
        line = f"pde-run: no breaking by t = {p['t_max']:g}"
    else:
        line = f"pde-run: breaking at t = {rep.t_break_observed:.6g}, bound_satisfied={rep.bound_satisfied}"
    return RunResult(line, paths)


def _do_pde_sweep(s, out, threads):
    p = s.params
    kernel, opts = _kernel(p["kernel"]), _run_options(p)
    jobs = [(m1, m2, p["width"], kernel, opts) for m1, m2 in p["points"]]
    workers = threads or p["workers"]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_pde_point, jobs))
    else:
        results = [_pde_point(j) for j in jobs]
    rows = [[r[c] for c in PDE_COLUMNS] for r in results]
    rows = [[None if isinstance(v, float) and math.isinf(v) else v for v in row] for row in rows]
    path = write_csv(out / f"{s.stem}.csv", PDE_COLUMNS, rows)
    broke = sum(r["status"] == "breaking" for r in results)
    ok = sum(bool(r["bound_satisfied"]) for r in results)
    return RunResult(f"pde-sweep: {len(results)} runs, {broke} breaking, {ok} within bound", [path])


def _do_report(s, out):
    p = s.params
    summ = build_summary(p["inputs"], p["samples"], s.seed, p["box"])
    cols = ("source", "m1", "m2", "G", "in_omega", "seliger_holds", "category")
    stem = s.stem
    paths = [
        write_csv(out / f"{stem}_points.csv", cols,
                  [(r.source, r.m1, r.m2, r.g, r.in_omega, r.seliger, r.category) for r in summ.records]),
        write_csv(out / f"{stem}_bounds.csv", ("source", "m1", "m2", "time_bound", "t_observed", "bound_satisfied"),
                  [(r.source, r.m1, r.m2, r.time_bound, r.t_observed, r.bound_satisfied) for r in summ.bounds()]),
        write_csv(out / f"{stem}_witnesses.csv", ("source", "m1", "m2", "G", "sum"),
                  [(r.source, r.m1, r.m2, r.g, r.m1 + r.m2) for r in summ.witnesses()]),
        write_csv(out / f"{stem}_counterexamples.csv", ("m1", "m2", "G"), summ.sampled_counterexamples),
    ]
    paths.append(atomic_write(out / f"{stem}.txt", summ.text()))
    c = summ.counts()
    return RunResult(f"report: {len(summ.records)} points, {c['witness']} witnesses, "
                     f"{c['counterexample'] + len(summ.sampled_counterexamples)} counterexamples", paths)


def run_scenario(s, threads=None):
    """Execute a validated scenario, writing its artifacts under ``s.output['dir']``."""
    out = Path(s.output["dir"])
    k = s.kind
    if k == "classify":
        return _do_classify(s, out)
    if k == "separatrix":
        return _do_separatrix(s, out)
    if k == "portrait":
        return _do_portrait(s, out, threads)
    if k == "ode_run":
        return _do_ode_run(s, out)
    if k == "ode_sweep":
        return _do_ode_sweep(s, out, threads)
    if k == "pde_run":
        return _do_pde_run(s, out)
    if k == "pde_sweep":
        return _do_pde_sweep(s, out, threads)
    return _do_report(s, out)


# --- argument parsing ----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _u64(text):
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _pos_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _pos_float(text):
    v = float(text)
    if not (math.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError("must be a positive number")
    return v


def build_parser():
    # accepted before or after the subcommand; SUPPRESS keeps the subparser from resetting them
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", type=Path, help="TOML scenario file")
    common.add_argument("--out", type=Path, help="output directory (overrides [output].dir)")
    common.add_argument("--seed", type=_u64, help="seed for randomized components")
    common.add_argument("--threads", type=_pos_int, help="worker processes for sweeps")
    common.add_argument("--tol", type=_pos_float, help="relative tolerance (absolute = tol/100)")

    parser = _Parser(prog="wavebreak", description="Breaking thresholds for nonlocal shallow-water waves.",
                     parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, help=help_, parents=[common])

    point = dict(nargs=2, type=float, metavar=("M1", "M2"))
    p = add("classify", "threshold verdicts for slope pairs")
    p.add_argument("--point", action="append", **point)
    p = add("separatrix", "tabulate the separatrix G = 0")
    p.add_argument("--points", type=_pos_int)
    p = add("portrait", "phase portrait (fig1) or breaking-region (fig2) plot data")
    p.add_argument("--figure", choices=("fig1", "fig2"))
    p = add("ode-run", "integrate the extremum system from one point")
    p.add_argument("--point", **point)
    p.add_argument("--system", choices=("equality", "inequality"))
    p = add("ode-sweep", "classify a grid of initial slope pairs")
    p.add_argument("--nx", type=_pos_int)
    p.add_argument("--ny", type=_pos_int)
    p = add("pde-run", "evolve a wave profile until breaking")
    p.add_argument("--point", **point, help="two-sided profile with these slope extrema")
    p.add_argument("--n", type=_pos_int, help="grid size (power of two)")
    p = add("pde-sweep", "PDE runs over several slope pairs")
    p.add_argument("--point", action="append", **point)
    p = add("report", "summarize artifacts from earlier runs")
    p.add_argument("inputs", nargs="*", type=str)
    p.add_argument("--samples", type=int)
    return parser


def _overrides(kind, args):
    o = {}
    get = lambda name: getattr(args, name, None)  # noqa: E731
    if kind in ("classify", "pde_sweep") and get("point"):
        o["points"] = [list(pt) for pt in args.point]
    if kind in ("ode_run",) and get("point"):
        o["point"] = list(args.point)
    if kind == "pde_run" and get("point"):
        o["profile"] = {"m1": args.point[0], "m2": args.point[1]}
    for name in ("figure", "system", "nx", "ny", "n", "samples"):
        if get(name) is not None:
            o[name] = get(name)
    if kind == "separatrix" and get("points") is not None:
        o["points"] = args.points
    if kind == "report" and get("inputs"):
        o["inputs"] = list(args.inputs)
    tol = get("tol")
    if tol is not None:
        if kind == "separatrix":
            o["tol"] = tol
        elif kind in ("ode_run", "ode_sweep"):
            o["rtol"], o["atol"] = tol, tol * 1e-2
        elif kind == "portrait":
            o["rtol"] = tol
    return o


_PDE_DEFAULTS = {"kernel": {"kind": "gaussian", "width": 1.0}}


def scenario_from_args(args):
    kind = args.command.replace("-", "_")
    config = getattr(args, "config", None)
    if config is not None:
        base = parse_scenario(config, getattr(args, "seed", None))
        if base.kind != kind:
            raise UsageError(f"scenario {config} has kind {base.kind!r}, not {kind!r}")
        params, output, seed = dict(base.params), dict(base.output), base.seed
    else:
        params, output, seed = {}, {}, None
        if kind == "pde_run":
            params = {**_PDE_DEFAULTS, "profile": {"m1": -5.0, "m2": 3.5}}
        elif kind == "pde_sweep":
            params = {**_PDE_DEFAULTS, "points": [[-5.0, 3.5]]}
    params.update(_overrides(kind, args))
    if getattr(args, "out", None) is not None:
        output["dir"] = str(args.out)
    if getattr(args, "seed", None) is not None:
        seed = args.seed
    return Scenario.build(kind, params, output, seed)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        scenario = scenario_from_args(args)
        result = run_scenario(scenario, threads=getattr(args, "threads", None))
    except WavebreakError as exc:
        print(f"wavebreak: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FloatingPointError as exc:
        print(f"wavebreak: numerical failure: {exc}", file=sys.stderr)
        return 3
    print(result.summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
