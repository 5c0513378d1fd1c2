"""Command line front end: ``flrwdust <command> --config file.toml``."""

import argparse
import csv
from concurrent.futures import ProcessPoolExecutor
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import config as cfgmod
from .blowup import (analytic_bound_for, case3_constant, find_blowup_time, lifespan_bound,
                     omega, threshold_for)
from .characteristics import CharacteristicFlow
from .density import density_eval
from .errors import ConfigurationError, FlrwDustError
from .oracle import Oracle
from .spherical import SphericalFlow

COMMANDS = ("simulate", "sweep", "blowup", "oracle-compare", "spherical", "thresholds")
OUT_ENV = "FLRWDUST_OUT"
SWEEP_HEADER = ["epsilon", "t_blow", "analytic_bound", "regime", "status"]


def _num(x):
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return "inf"
    if math.isnan(x):
        return "nan"
    return x


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _json_text(obj):
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def emit_report(out_dir, files):
    """Write ``{name: text}`` atomically: everything lands or nothing does."""
    os.makedirs(out_dir, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            staged.append((tmp, os.path.join(out_dir, name)))
    except BaseException:
        for tmp, _ in staged:
            try:
                os.unlink(tmp)
            except OSError:
                pass
        raise
    for tmp, final in staged:
        os.replace(tmp, final)
    return [final for _, final in staged]


def _summary(lines):
    return "\n".join(lines) + "\n"


def _flow(cfg, epsilon=None):
    data = cfg["_data"] if epsilon is None else cfg["_data"].with_epsilon(epsilon)
    return CharacteristicFlow(cfg["_scale"], data)


def _regime_info(flow, delta=0.9):
    reg = flow.scale.classify()
    thr = threshold_for(flow, delta)
    return reg, thr


# commands

def cmd_thresholds(cfg, args):
    flow = _flow(cfg)
    delta = float(cfg["thresholds"]["delta"])
    d = flow.data
    reg, thr = _regime_info(flow, delta)
    report = {
        "regime": reg.name, "sampled": reg.sampled, "epsilon": d.epsilon, "c": d.c, "n": d.n,
        "N0": d.N0, "M0": d.M0, "eps_max": _num(d.eps_max), "delta": delta,
        "epsilon_threshold": None if thr is None else thr.to_dict(),
        "below_threshold": None if thr is None else bool(d.epsilon <= thr.value),
        "analytic_bound": _num(analytic_bound_for(flow, delta)),
        "omega": _num(omega(d.c, d.epsilon, d.M0)) if d.epsilon * d.M0 < d.c else None,
        "case3_constant": _num(case3_constant(d.c, d.M0, d.n, delta)) if d.M0 > 0 else None,
    }
    name = "none" if thr is None else thr.name
    text = _summary([f"regime: {reg}", f"threshold {name}: {report['epsilon_threshold']}",
                     f"epsilon: {d.epsilon}", f"analytic life-span bound: {report['analytic_bound']}"])
    return {"thresholds.json": _json_text(report), "summary.txt": text}


def cmd_blowup(cfg, args):
    flow = _flow(cfg)
    b = cfg["blowup"]
    rep = find_blowup_time(flow, t_max=float(b["t_max"]), alpha_box=tuple(b["alpha_box"]),
                           grid=int(b["grid"]), time_points=int(b["time_points"]), seed=args.seed)
    d = rep.to_dict()
    trace = _csv_text(["t", "min_det"], [[float(t), float(v)] for t, v in rep.det_trace])
    thr = d["epsilon_threshold"]
    text = _summary([f"regime: {d['regime']}", f"verdict: {d['verdict']}", f"t_blow: {d['t_blow']}",
                     f"alpha_star: {d['alpha_star']}", f"analytic lower bound: {d['analytic_bound']}",
                     f"threshold: {thr['name'] if thr else None} = {thr['value'] if thr else None}"])
    return {"blowup.json": _json_text(d), "trace.csv": trace, "summary.txt": text}


def _sweep_one(task):
    cfg_lite, eps, seed = task
    scale, data, s = cfg_lite
    flow = CharacteristicFlow(scale, data.with_epsilon(eps))
    reg = scale.classify()
    try:
        rep = find_blowup_time(flow, t_max=float(s["t_max"]), alpha_box=tuple(s["alpha_box"]),
                               grid=int(s["grid"]), seed=seed)
        t_blow = "none" if rep.t_blow is None else float(rep.t_blow)
        bound = _num(rep.analytic_bound)
        return [eps, t_blow, bound, reg.name, rep.verdict]
    except FlrwDustError as exc:
        return [eps, "none", _num(analytic_bound_for(flow)), reg.name, f"error: {type(exc).__name__}"]


def sweep_lifespan(cfg, eps_list, jobs=1, seed=0):
    s = cfg["sweep"]
    lite = (cfg["_scale"], cfg["_data"], s)
    tasks = [(lite, float(e), seed) for e in eps_list]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_sweep_one, tasks))
    return [_sweep_one(t) for t in tasks]


def _loglog_slope(rows):
    pts = [(e, t) for e, t, *_ in rows if isinstance(t, float)]
    if len(pts) < 2:
        return None, None
    x = np.log([1.0 / e for e, _ in pts])
    y = np.log1p([t for _, t in pts])
    slope = float(np.polyfit(x, y, 1)[0])
    inv = np.array([1.0 / e for e, _ in pts])
    coef = np.polyfit(inv, y, 1)
    resid = y - np.polyval(coef, inv)
    r2 = float(1.0 - np.sum(resid ** 2) / np.sum((y - y.mean()) ** 2)) if len(pts) > 2 else None
    return slope, r2


def cmd_sweep(cfg, args):
    eps = cfg["sweep"]["epsilons"]
    if not eps:
        raise ConfigurationError("sweep.epsilons is empty")
    rows = sweep_lifespan(cfg, eps, jobs=args.jobs, seed=args.seed)
    slope, r2 = _loglog_slope(rows)
    reg = cfg["_scale"].classify()
    flow = _flow(cfg)
    thr = threshold_for(flow)
    report = {"regime": reg.name, "epsilon_threshold": None if thr is None else thr.to_dict(),
              "rows": [dict(zip(SWEEP_HEADER, [_num(v) if isinstance(v, float) else v for v in r]))
                       for r in rows],
              "slope_log1p_t_vs_log_inv_eps": slope, "r2_log1p_t_vs_inv_eps": r2}
    text = _summary([f"regime: {reg}", f"threshold: {thr.name if thr else None}",
                     *(f"eps={r[0]}: t_blow={r[1]} bound={r[2]} status={r[4]}" for r in rows),
                     f"log-log slope: {slope}"])
    return {"sweep.csv": _csv_text(SWEEP_HEADER, rows), "sweep.json": _json_text(report),
            "summary.txt": text}


def cmd_simulate(cfg, args):
    flow = _flow(cfg)
    s = cfg["simulate"]
    lo, hi, m = s["alpha_grid"]
    n = flow.n
    axis = np.linspace(float(lo), float(hi), int(m))
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    header = ["t"] + [f"alpha{i}" for i in range(n)] + [f"x{i}" for i in range(n)] + ["rho"] + \
        [f"grad_rho{i}" for i in range(n)]
    rows = []
    for t in s["times"]:
        ev = density_eval(flow, float(t), pts)
        x = flow.position(float(t), pts)
        for j in range(pts.shape[0]):
            rows.append([float(t), *pts[j].tolist(), *x[j].tolist(), float(ev.rho[j]),
                         *ev.grad_rho[j].tolist()])
    text = _summary([f"regime: {flow.scale.classify()}", f"rows: {len(rows)}"])
    return {"density.csv": _csv_text(header, rows), "summary.txt": text}


def _oracle_run(task):
    scale, data, o, N = task
    orc = Oracle(scale, c=data.c, geometry=o["geometry"], curvature=o["curvature"],
                 reconstruction=o["reconstruction"], cfl=float(o["cfl"]))
    traj = orc.run(data, N=N, x_lo=float(o["x_lo"]), x_hi=float(o["x_hi"]),
                   t_end=float(o["t_end"]), snapshots=int(o["snapshots"]))
    flow = CharacteristicFlow(scale, data)
    sph = SphericalFlow(scale, data) if o["geometry"] == "radial" else None
    cmp = orc.compare(traj, flow, sph)
    return N, traj, cmp


def cmd_oracle(cfg, args):
    o = cfg["oracle"]
    data = cfg["_data"]
    if data.n != 1:
        raise ConfigurationError("the oracle runs one-dimensional data only")
    tasks = [(cfg["_scale"], data, o, N) for N in o["N"]]
    if args.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            results = list(ex.map(_oracle_run, tasks))
    else:
        results = [_oracle_run(t) for t in tasks]
    levels = []
    for N, traj, cmp in results:
        levels.append({"N": N, "linf_v": cmp["linf_v"], "linf_rho": cmp["linf_rho"],
                       "excluded": cmp["excluded"], "blowup_indicator": _num(traj.blowup_indicator),
                       "monitor_fired": traj.monitor_fired, "stop_time": traj.stop_time})
    ratios = [levels[i]["linf_v"] / levels[i + 1]["linf_v"] for i in range(len(levels) - 1)]
    report = {"levels": levels, "linf_v_ratios": ratios}
    N, traj, _ = results[-1]
    rows = [[s.t, float(x), float(v), float(r)] for s in traj.snapshots for x, v, r in zip(s.x, s.v, s.rho)]
    text = _summary([f"N={lv['N']}: linf_v={lv['linf_v']:.3e} linf_rho={lv['linf_rho']:.3e}" for lv in levels]
                    + [f"ratios: {ratios}"])
    return {"oracle.json": _json_text(report), "snapshots.csv": _csv_text(["t", "x", "v", "rho"], rows),
            "summary.txt": text}


def cmd_spherical(cfg, args):
    s = cfg["spherical"]
    sph = SphericalFlow(cfg["_scale"], cfg["_data"], dim=int(s["dim"]), curvature=bool(s["curvature"]))
    fits = []
    rows = []
    for a in s["alphas"]:
        fit = sph.blowup_rate_fit(float(a), threshold=float(s["threshold"]))
        fits.append({"alpha": float(a), **fit.to_dict()})
        for t in fit.samples["t"][::10]:
            r, v = sph.radial_flow(t, float(a))
            d = sph.radial_derivs_gap([fit.t2 - t], float(a))
            rows.append([float(t), float(a), r, v, float(d["v_r"][0]), sph.density_gap(fit.t2 - t, float(a))])
    text = _summary([f"alpha={f['alpha']}: t2={f['t2']} exponents={f['exponents']}" for f in fits])
    return {"spherical.json": _json_text({"fits": fits}),
            "spherical.csv": _csv_text(["t", "alpha", "r", "vr", "v_r", "rho"], rows),
            "summary.txt": text}


HANDLERS = {"simulate": cmd_simulate, "sweep": cmd_sweep, "blowup": cmd_blowup,
            "oracle-compare": cmd_oracle, "spherical": cmd_spherical, "thresholds": cmd_thresholds}


def build_parser():
    p = argparse.ArgumentParser(prog="flrwdust", description="Relativistic dust on expanding backgrounds.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="TOML experiment file")
        sp.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./flrwdust-out)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes")
        sp.add_argument("--seed", type=int, default=None, help="seed for randomised sampling")
    return p


def run_config(argv=None):
    """Parse arguments, run one command and write its artifacts; returns the exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = cfgmod.load(args.config)
    except ConfigurationError as exc:
        print(f"flrwdust: config error: {exc}", file=sys.stderr)
        return 2
    if args.seed is None:
        args.seed = cfg["seed"]
    if args.seed < 0 or args.seed >= 2 ** 64:
        print("flrwdust: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    args.jobs = max(1, int(args.jobs))
    out = args.out or cfg["output"].get("dir") or os.environ.get(OUT_ENV) or "flrwdust-out"
    try:
        files = HANDLERS[args.command](cfg, args)
    except ConfigurationError as exc:
        print(f"flrwdust: config error: {exc}", file=sys.stderr)
        return 2
    except (FlrwDustError, ArithmeticError) as exc:
        print(f"flrwdust: numerical error: {exc}", file=sys.stderr)
        return 3
    try:
        emit_report(out, files)
    except OSError as exc:
        print(f"flrwdust: cannot write outputs to {out}: {exc}", file=sys.stderr)
        return 3
    return 0


def main():
    sys.exit(run_config())


if __name__ == "__main__":
    main()
