"""Command-line front end.

    widthflow run <kind> --surface sphere:1 [--slices 64] [--L auto] ...
    widthflow validate config.json

A JSON config file passed with --config overrides the flags. Every run writes
its CSV artifacts and a ``summary.json`` of the form
{"run", "pass", "metrics", "thresholds"}; the exit status is 0 iff every
threshold passes.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import re
import sys
import time

import numpy as np

from . import birkhoff as bk
from . import loops as lp
from . import mcf
from . import sweepout as sw
from .geom import GeometryError, Sphere, normalize_scaling, surface_from_spec

KINDS = ("width", "tighten-diagnostics", "psi-properties", "mcf-decay", "hk-decay")
DECAY_KINDS = ("mcf-decay", "hk-decay")
FIELDS = {"run", "surface", "slices", "L", "iters", "t_samples", "t", "k", "seed", "jobs",
          "out", "noise", "corpus_size", "flow", "dt_max"}
FLOW_FIELDS = {"flow", "k", "t_samples", "dt_max"}

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
FOUR_PI = 4.0 * math.pi


class ConfigError(ValueError):
    pass


def split_seed(seed, stream):
    """Independent 64-bit seed for sub-stream ``stream`` of ``seed``."""
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1, np.uint64)[0])


# -- surface parsing ----------------------------------------------------------

def parse_surface(text):
    """``kind:p1,p2,...`` or a path to a JSON surface file -> spec dict."""
    if isinstance(text, dict):
        return text
    if text.endswith(".json") and os.path.exists(text):
        with open(text) as fh:
            return json.load(fh)
    kind, _, rest = text.partition(":")
    try:
        params = [float(v) for v in rest.split(",")] if rest else []
    except ValueError:
        raise ConfigError(f"bad surface parameters {rest!r}") from None
    return {"kind": kind, "params": params}


def build_surface(spec):
    spec = parse_surface(spec)
    if spec.get("kind") not in ("sphere", "ellipsoid", "axisymmetric"):
        raise ConfigError(f"unknown surface kind {spec.get('kind')!r}")
    params = spec.get("params", [])
    if any(not p > 0 for p in params):
        raise ConfigError("radius must be positive" if spec["kind"] == "sphere"
                          else "surface parameters must be positive")
    return surface_from_spec(spec)


# -- validation ---------------------------------------------------------------

def _line_of(text, key):
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 1


def _is_randomized(cfg):
    return cfg.get("run") == "psi-properties" or float(cfg.get("noise", 0) or 0) > 0


def check_config(cfg, where=lambda key: None):
    """Schema and range checks; returns a list of messages. ``where(key)`` gives
    a location prefix for a field."""
    out = []

    def bad(key, msg):
        loc = where(key)
        out.append(f"{loc}: {msg}" if loc else msg)

    for key in cfg:
        if key not in FIELDS:
            bad(key, f"unknown field {key!r}")
    kind = cfg.get("run")
    if kind is None:
        bad("run", "missing field 'run'")
    elif kind not in KINDS:
        bad("run", f"unrecognized run kind {kind!r} (expected one of {', '.join(KINDS)})")
    if "surface" not in cfg:
        bad("surface", "missing field 'surface'")
    else:
        try:
            build_surface(cfg["surface"])
        except (ConfigError, GeometryError, TypeError, KeyError) as exc:
            bad("surface", str(exc))
    for key in ("slices", "iters", "jobs", "corpus_size"):
        if key in cfg and not (isinstance(cfg[key], int) and cfg[key] > 0):
            bad(key, f"{key} must be a positive integer")
    if "L" in cfg and cfg["L"] != "auto" and not (isinstance(cfg["L"], int) and cfg["L"] > 0):
        bad("L", "L must be a positive integer or 'auto'")
    if "noise" in cfg and not (isinstance(cfg["noise"], (int, float)) and cfg["noise"] >= 0):
        bad("noise", "noise must be non-negative")
    if "seed" in cfg and not (isinstance(cfg["seed"], int) and cfg["seed"] >= 0):
        bad("seed", "seed must be a non-negative integer")
    if _is_randomized(cfg) and "seed" not in cfg:
        bad("run", f"missing field 'seed' (required by randomized run {kind!r})")
    flow = cfg.get("flow")
    if flow is not None:
        if not isinstance(flow, dict):
            bad("flow", "flow must be an object")
            flow = {}
        for key in flow:
            if key not in FLOW_FIELDS:
                bad(key, f"unknown flow field {key!r}")
        if flow.get("flow", "mcf") not in ("mcf", "hk"):
            bad("flow", "flow must be 'mcf' or 'hk'")
    flow = flow or {}
    ts = flow.get("t_samples", cfg.get("t_samples", cfg.get("t")))
    if kind in DECAY_KINDS:
        if ts is None:
            bad("run", "missing field 't_samples'")
        elif (not isinstance(ts, list) or len(ts) < 2
              or any(not isinstance(v, (int, float)) or v < 0 for v in ts)):
            bad("t_samples", "t_samples must list at least two non-negative times")
    k = flow.get("k", cfg.get("k"))
    if kind == "hk-decay":
        if k is None:
            bad("run", "missing field 'k' (required by hk-decay)")
        elif not (isinstance(k, (int, float)) and k > 0):
            bad("k", f"k = {k} violates the precondition k > 0 of the H^k flow "
                     "(normal speed |H|^k)")
    dt = flow.get("dt_max", cfg.get("dt_max"))
    if dt is not None and not (isinstance(dt, (int, float)) and dt > 0):
        bad("dt_max", "dt_max must be positive")
    return out


def validate(path):
    """Line-numbered diagnostics for the config file at ``path``; empty if valid."""
    with open(path) as fh:
        text = fh.read()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        return [f"{path}:{exc.lineno}: invalid JSON: {exc.msg}"]
    if not isinstance(cfg, dict):
        return [f"{path}:1: config must be a JSON object"]
    return check_config(cfg, lambda key: f"{path}:{_line_of(text, key)}")


# -- runs ---------------------------------------------------------------------

def _width_config(cfg):
    return sw.WidthConfig(
        M_slices=cfg.get("slices", 64), L=cfg.get("L", "auto"),
        iterations=cfg.get("iters", 200), noise=float(cfg.get("noise", 0.0)),
        seed=split_seed(cfg.get("seed", 0), 0), jobs=cfg.get("jobs", 1))


def _radius_scale(W):
    """Radius of the round sphere whose width is W."""
    return math.sqrt(W / (2.0 * math.pi))


def _monotone(values, rtol=1e-12):
    v = np.asarray(values)
    return bool(np.all(np.diff(v) <= rtol * np.abs(v[:-1])))


def run_width(cfg, surface, out):
    wc = _width_config(cfg)
    scaled, factor = normalize_scaling(surface)
    s = sw.initial_sweepout(scaled, wc.M_slices, wc.L, wc.m)
    if wc.noise:
        s = sw.perturbed_sweepout(s, wc.noise * factor, wc.seed)
    s = sw.pl_replace(s)
    history, rep = sw.tighten(s, wc.iterations, wc.rel_tol, wc.patience, wc.delta_frac,
                              wc.jobs, scale=factor)
    final = history[-1]
    sw.write_tightening_csv(os.path.join(out, "tightening.csv"), rep)
    sw.write_snapshot(os.path.join(out, "sweepout.txt"), final)
    dmax = max((d for _, _, d in rep.near_max), default=0.0)
    R = _radius_scale(rep.width_estimate)
    metrics = {"width": rep.width_original, "width_scaled": rep.width_estimate,
               "scale": factor, "L": rep.L, "iterations": rep.iterations,
               "stop_reason": rep.stop_reason, "argmax_t": rep.argmax_t[-1],
               "near_max_count": len(rep.near_max), "max_dist_to_G": dmax,
               "max_energy_monotone": _monotone([s.energies().max()] + rep.max_energies)}
    thresholds = {"max_energy_monotone": {"value": True, "pass": metrics["max_energy_monotone"]}}
    if isinstance(surface, Sphere):
        ref = 2.0 * math.pi * surface.radius**2
        metrics["reference"] = ref
        metrics["rel_err"] = abs(rep.width_original - ref) / ref
        thresholds["rel_err"] = {"max": 0.01, "pass": metrics["rel_err"] <= 0.01}
        thresholds["max_dist_to_G"] = {"max": 0.05 * R, "pass": dmax <= 0.05 * R}
    return metrics, thresholds, history, rep


def run_tighten_diagnostics(cfg, surface, out):
    wc = _width_config(cfg)
    scaled, factor = normalize_scaling(surface)
    s = sw.initial_sweepout(scaled, wc.M_slices, wc.L, wc.m)
    if wc.noise:
        s = sw.perturbed_sweepout(s, wc.noise * factor, wc.seed)
    s = sw.pl_replace(s)
    every = 10
    history, rep = sw.tighten(s, wc.iterations, wc.rel_tol, wc.patience, wc.delta_frac,
                              wc.jobs, keep_every=every, scale=factor)
    sw.write_tightening_csv(os.path.join(out, "tightening.csv"), rep)
    its = [0] + [every * i for i in range(1, len(history) - 1)] + [rep.iterations]
    fracs = (0.05, 0.02, 0.01)
    rows = []
    for it, snap in zip(its, history):
        W = float(snap.energies().max())
        for f in fracs:
            near = sw._near_max(snap, W, f * W)
            rows.append((it, f, len(near), max((d for _, _, d in near), default=0.0)))
    with open(os.path.join(out, "tighten_diagnostics.csv"), "w") as fh:
        fh.write("iteration,delta_frac,count,max_dist_to_G\n")
        for it, f, n, d in rows:
            fh.write(f"{it},{f:.17g},{n},{d:.17g}\n")
    final = {f: d for it, f, _, d in rows if it == its[-1]}
    R = _radius_scale(rep.width_estimate)
    metrics = {"width": rep.width_original, "iterations": rep.iterations,
               "final_max_dist": {str(f): final[f] for f in fracs}, "R": R}
    thresholds = {"final_max_dist_delta_0.01": {"max": 0.05 * R, "pass": final[0.01] <= 0.05 * R}}
    return metrics, thresholds


def _cross_check_controls(surface, L):
    """Known closed geodesics (great circles) and known non-geodesics
    (small latitude circles) on the normalized surface."""
    yes, no = [], []
    if surface.kind == "sphere":
        for tilt in (0.0, 0.3, 1.1):
            c = bk.latitude_circle(surface, 0.0, 2 * L * 32, L)
            rot = np.array([[1, 0, 0], [0, math.cos(tilt), -math.sin(tilt)],
                            [0, math.sin(tilt), math.cos(tilt)]])
            yes.append(c.with_points(c.points @ rot.T))
    for h in (0.2, 0.5):
        no.append(bk.latitude_circle(surface, h, 2 * L * 32, L))
    return yes, no


def psi_suite(corpus):
    """Property checks of Psi over a corpus of (curve, meta) pairs.

    Returns (rows, metrics) where rows feed psi_properties.csv.
    """
    rows = []
    worst_len, worst_four, bound_fail, cross_fail = 0.0, 0.0, 0, 0
    for i, (c, meta) in enumerate(corpus):
        res = bk.psi(c)
        four = bk.psi_four_step(c)
        b = bk.property3_bound(c, four)
        l0, l1 = res.lengths[0], res.lengths[-1]
        rel = (l1 - l0) / l0
        diff = float(np.max(np.abs(res.output.points - four.output.points)))
        fpr = bk.fixed_point_residual(c, res)
        gres = bk.geodesic_residual(c)
        fixed = fpr <= bk.FIXED_POINT_TOL * (1.0 + l0)
        if fixed != (gres <= 1e-3):
            cross_fail += 1
        worst_len = max(worst_len, rel)
        worst_four = max(worst_four, diff)
        bound_fail += not b.holds()
        rows.append((i, meta["height"], meta["amplitude"], l0, l1, rel, b.dist, b.bound, diff,
                     fpr, gres))
    yes, no = _cross_check_controls(corpus[0][0].surface, corpus[0][0].L)
    for c in yes:
        cross_fail += not (bk.is_geodesic(c) and bk.geodesic_residual(c) <= 1e-3)
    for c in no:
        cross_fail += bk.is_geodesic(c) or bk.geodesic_residual(c) <= 1e-3
    metrics = {"max_rel_length_increase": worst_len, "bound_failures": bound_fail,
               "max_four_step_diff": worst_four, "cross_check_failures": cross_fail}
    return rows, metrics


def length_drop_stability(scaled, size, seed, corpus_a=None):
    """Length-drop surveys on two disjoint seeded corpora and the stability of delta."""
    if corpus_a is None:
        corpus_a = bk.random_corpus(scaled, size, split_seed(seed, 1))
    sa = bk.length_drop_survey([c for c, _ in corpus_a])
    sb = bk.length_drop_survey([c for c, _ in bk.random_corpus(scaled, size, split_seed(seed, 2))])
    stab = abs(sa["delta"] / sb["delta"] - 1.0) if sb["count"] else float("inf")
    return {"count_a": sa["count"], "count_b": sb["count"],
            "min_drop_a": sa["min_drop"], "min_drop_b": sb["min_drop"],
            "delta_a": sa["delta"], "delta_b": sb["delta"], "delta_rel_diff": stab}


def run_psi_properties(cfg, surface, out):
    scaled, factor = normalize_scaling(surface)
    size = cfg.get("corpus_size", 500)
    seed = cfg["seed"]
    corpus = bk.random_corpus(scaled, size, split_seed(seed, 1))
    rows, m = psi_suite(corpus)
    with open(os.path.join(out, "psi_properties.csv"), "w") as fh:
        fh.write("index,height,amplitude,length_in,length_out,rel_length_change,dist_w12,"
                 "bound,four_step_maxdiff,fixed_point_residual,geodesic_residual\n")
        for r in rows:
            fh.write(f"{r[0]}," + ",".join(f"{v:.17g}" for v in r[1:]) + "\n")
    p4 = length_drop_stability(scaled, size, seed, corpus)
    metrics = {"corpus_size": size, "scale": factor, **m, "length_drop": p4}
    thresholds = {
        "max_rel_length_increase": {"max": 1e-9, "pass": m["max_rel_length_increase"] <= 1e-9},
        "bound_failures": {"max": 0, "pass": m["bound_failures"] == 0},
        "max_four_step_diff": {"max": 1e-8, "pass": m["max_four_step_diff"] <= 1e-8},
        "cross_check_failures": {"max": 0, "pass": m["cross_check_failures"] == 0},
        "min_drop_positive": {"min": 0.0,
                              "pass": bool(p4["min_drop_a"] > 0 and p4["min_drop_b"] > 0)},
        "delta_rel_diff": {"max": 0.2, "pass": p4["delta_rel_diff"] <= 0.2},
    }
    return metrics, thresholds


def _sphere_width(r0, t, k):
    p = mcf._sphere_radius_power(r0, t, k)
    return 2.0 * math.pi * (p if k == 1 else p ** (2.0 / (k + 1)))


def run_decay(cfg, surface, out):
    flow_cfg = cfg.get("flow") or {}
    kind = cfg["run"]
    k = 1.0 if kind == "mcf-decay" else float(flow_cfg.get("k", cfg.get("k")))
    ts = flow_cfg.get("t_samples", cfg.get("t_samples", cfg.get("t")))
    dt_max = flow_cfg.get("dt_max", cfg.get("dt_max"))
    wc = dataclasses.replace(_width_config(cfg), watch="max")
    series = mcf.width_decay_experiment(surface, ts, "mcf" if kind == "mcf-decay" else "hk", k,
                                        wc, dt_max)
    mcf.write_decay_csv(os.path.join(out, "decay.csv"), series)
    q = series.quotients
    metrics = {"times": series.times.tolist(), "W": series.W.tolist(), "quotients": q.tolist(),
               "extinction": series.extinction, "truncated": series.truncated,
               "rigidity_ok": series.rigidity_ok,
               "iterations": [r.iterations for r in series.reports]}
    thresholds = {}
    flowing = mcf.as_flowable(surface)
    if kind == "mcf-decay":
        metrics["extinction_bound"] = series.extinction_bound
        cap = -FOUR_PI if isinstance(flowing, Sphere) else -FOUR_PI * 0.98
        thresholds["max_quotient"] = {"max": cap, "pass": bool(len(q) and q.max() <= cap)}
        thresholds["extinction_le_bound"] = {
            "max": series.extinction_bound,
            "pass": series.extinction <= series.extinction_bound * (1 + 1e-9)}
        thresholds["rigidity"] = {"value": True, "pass": series.rigidity_ok}
    if isinstance(flowing, Sphere):
        r0 = flowing.radius
        ref = np.array([_sphere_width(r0, t, k) for t in series.times])
        err = float(np.max(np.abs(series.W - ref) / ref))
        metrics["max_rel_err_vs_analytic"] = err
        thresholds["rel_err_vs_analytic"] = {"max": 0.02, "pass": err <= 0.02}
        if kind == "mcf-decay":
            qerr = float(np.max(np.abs(q / (-8.0 * math.pi) - 1.0)))
            metrics["max_rel_err_quotient_vs_minus8pi"] = qerr
            thresholds["quotient_vs_minus8pi"] = {"max": 0.03, "pass": qerr <= 0.03}
        else:
            hist = mcf.flow(surface, float(series.times.max()), k)
            worst = -math.inf
            rhs = None
            for t in series.times:
                st = hist.state_at(float(t))
                eq = bk.latitude_circle(st.surface, 0.0, 512, 8)
                lhs, rhs = mcf.power_flow_inequality_check(hist, eq, float(t), k)
                worst = max(worst, lhs)
            metrics["power_inequality_max_lhs"] = worst
            metrics["power_inequality_rhs"] = rhs
            thresholds["power_inequality"] = {"max": rhs, "pass": worst <= rhs}
    return metrics, thresholds


RUNNERS = {"width": lambda c, s, o: run_width(c, s, o)[:2],
           "tighten-diagnostics": run_tighten_diagnostics,
           "psi-properties": run_psi_properties,
           "mcf-decay": run_decay, "hk-decay": run_decay}


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def execute(cfg):
    """Run a validated config; returns (exit status, summary dict)."""
    out = cfg.get("out") or os.environ.get("WIDTH_OUT_DIR") or "."
    os.makedirs(out, exist_ok=True)
    surface = build_surface(cfg["surface"])
    t0 = time.perf_counter()
    metrics, thresholds = RUNNERS[cfg["run"]](cfg, surface, out)
    metrics["runtime_s"] = time.perf_counter() - t0
    ok = all(v["pass"] for v in thresholds.values())
    summary = _jsonable({"run": cfg["run"], "pass": ok, "metrics": metrics,
                         "thresholds": thresholds})
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return (EXIT_OK if ok else EXIT_FAIL), summary


# -- argument handling --------------------------------------------------------

def _times(text):
    return [float(v) for v in text.split(",")]


def _L(text):
    return text if text == "auto" else int(text)


def build_parser():
    p = argparse.ArgumentParser(prog="widthflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("kind", choices=KINDS)
    r.add_argument("--surface", help="kind:params (e.g. sphere:1) or a surface JSON file")
    r.add_argument("--slices", type=int)
    r.add_argument("--L", type=_L)
    r.add_argument("--iters", type=int)
    r.add_argument("--t", type=_times, help="comma-separated sample times")
    r.add_argument("--k", type=float)
    r.add_argument("--seed", type=int)
    r.add_argument("--jobs", type=int)
    r.add_argument("--noise", type=float)
    r.add_argument("--corpus-size", dest="corpus_size", type=int)
    r.add_argument("--dt-max", dest="dt_max", type=float)
    r.add_argument("--out")
    r.add_argument("--config", help="JSON config; its fields override the flags")
    v = sub.add_parser("validate", help="check a config file")
    v.add_argument("path")
    return p


def _config_from_args(args):
    cfg = {"run": args.kind}
    for key in ("surface", "slices", "L", "iters", "k", "seed", "jobs", "noise", "corpus_size",
                "dt_max", "out"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.t is not None:
        cfg["t_samples"] = args.t
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            diags = validate(args.path)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        for d in diags:
            print(d)
        return EXIT_CONFIG if diags else EXIT_OK
    cfg = _config_from_args(args)
    diags = []
    if args.config:
        try:
            diags = validate(args.config)
            with open(args.config) as fh:
                cfg.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            diags = diags or [f"{args.config}: {exc}"]
    if not diags:
        diags = check_config(cfg, lambda key: f"argument {key}" if key != "run" else "")
    if diags:
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        status, summary = execute(cfg)
    except (GeometryError, mcf.FlowError, ValueError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(summary, indent=2, sort_keys=True))
    return status


if __name__ == "__main__":
    sys.exit(main())
