"""Command line front end: analyze, yield, bounds, mc, sweep, optimize."""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._validation import DomainError, ModelError
from .gaussian import std_normal_pdf
from .io import PipelineFileError, load_pipeline, pipeline_to_dict, write_csv
from .montecarlo import McConfig, empirical_max_stats, model_error_report, sample_stage_delays
from .optimizer import MODES, balanced_baseline, global_optimize
from .variation import (
    GateInstance,
    VariationSpec,
    gate_delay_moments,
    inverter_chain_relation,
    stage_correlation_matrix,
    stage_distribution,
    uniform_pipeline,
)
from .yield_analysis import (
    YieldQuery,
    design_space_region,
    pipeline_distribution,
    stage_yield,
    yield_gaussian,
    yield_independent,
)

log = logging.getLogger("pipeyield")

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_USAGE = 2

REGIMES = {
    "random": (0.0, 0.0, 1.0),
    "inter": (1.0, 0.0, 0.0),
    "mixed": (0.5, 0.25, 0.25),
}


class CliError(Exception):
    pass


# ----------------------------------------------------------------- helpers


def _emit(args, text=None, header=None, rows=None, payload=None):
    """Print one report in the requested format."""
    fmt = args.format
    if fmt == "structured":
        sys.stdout.write(json.dumps(payload, indent=2, sort_keys=False) + "\n")
    elif fmt == "csv":
        sys.stdout.write(write_csv(header, rows))
    else:
        sys.stdout.write(text)


def _f(x, digits=6):
    return f"{x:.{digits}g}"


def _parse_grid(spec):
    try:
        start, stop, num = spec.split(":")
        start, stop, num = float(start), float(stop), int(num)
    except ValueError:
        raise CliError(f"--sigma-grid expects start:stop:count, got {spec!r}") from None
    if num < 1 or not 0 < start <= stop:
        raise CliError("--sigma-grid needs 0 < start <= stop and count >= 1")
    return np.linspace(start, stop, num)


def _parse_ints(spec, flag):
    try:
        out = [int(v) for v in spec.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"{flag} expects comma-separated integers, got {spec!r}") from None
    if not out or any(v < 1 for v in out):
        raise CliError(f"{flag} values must be >= 1")
    return out


def _parse_regime(name, ratio, corr_length):
    if name in REGIMES:
        fractions = REGIMES[name]
    else:
        try:
            fractions = tuple(float(v) for v in name.split("/"))
        except ValueError:
            fractions = ()
        if len(fractions) != 3:
            raise CliError(f"unknown regime {name!r}; use random, inter, mixed or a/b/c fractions")
    return VariationSpec(*fractions, ratio, corr_length)


def _query(target, y=0.5):
    try:
        return YieldQuery(target, y)
    except DomainError as exc:
        raise CliError(str(exc)) from None


# ----------------------------------------------------------------- commands


def cmd_analyze(args):
    p = load_pipeline(args.file)
    dists = [stage_distribution(s, p.variation) for s in p.stages]
    corr = stage_correlation_matrix(p, dists)
    total = pipeline_distribution(p)
    header = ["stage", "logic_depth [count]", "mean [ps]", "sigma [ps]", "sigma_inter [ps]",
              "sigma_sys [ps]", "sigma_rand [ps]", "variability [1]"]
    rows = [[i, s.logic_depth, d.mean, d.std_dev, d.sigma_inter, d.sigma_sys, d.sigma_rand,
             d.std_dev / d.mean] for i, (s, d) in enumerate(zip(p.stages, dists))]
    rows.append(["pipeline", p.n_stages, total.mean, total.std_dev, "", "", "",
                 total.std_dev / total.mean])
    lines = ["stage  depth  mean[ps]  sigma[ps]"]
    lines += [f"{r[0]:>5}  {r[1]:>5}  {_f(r[2])}  {_f(r[3])}" for r in rows[:-1]]
    lines.append("correlation matrix [1]:")
    lines += ["  " + " ".join(f"{c:8.5f}" for c in row) for row in corr]
    lines.append(f"pipeline: mu_T = {_f(total.mean)} ps, sigma_T = {_f(total.std_dev)} ps, "
                 f"sigma_T/mu_T = {_f(total.std_dev / total.mean)}")
    payload = {
        "stages": [{"mean_ps": d.mean, "sigma_ps": d.std_dev, "sigma_inter_ps": d.sigma_inter,
                    "sigma_sys_ps": d.sigma_sys, "sigma_rand_ps": d.sigma_rand} for d in dists],
        "correlation": corr.tolist(),
        "pipeline": {"mean_ps": total.mean, "sigma_ps": total.std_dev},
    }
    _emit(args, "\n".join(lines) + "\n", header, rows, payload)
    return EXIT_OK


def cmd_yield(args):
    p = load_pipeline(args.file)
    _query(args.target)
    dists = [stage_distribution(s, p.variation).moments for s in p.stages]
    total = pipeline_distribution(p)
    y_gauss = yield_gaussian(total, args.target)
    y_ind = yield_independent(dists, args.target)
    headline = y_ind if args.independent else y_gauss
    header = ["target [ps]", "yield [1]", "yield_gaussian [1]", "yield_independent [1]", "gap [1]"]
    rows = [[args.target, headline, y_gauss, y_ind, y_gauss - y_ind]]
    text = (f"target: {_f(args.target)} ps\n"
            f"yield ({'independent' if args.independent else 'gaussian'}): {_f(headline)}\n"
            f"yield_gaussian: {_f(y_gauss)}\nyield_independent: {_f(y_ind)}\n"
            f"gap (gaussian - independent): {_f(y_gauss - y_ind)}\n")
    payload = {"target_ps": args.target, "yield": headline, "yield_gaussian": y_gauss,
               "yield_independent": y_ind, "gap": y_gauss - y_ind}
    _emit(args, text, header, rows, payload)
    return EXIT_OK


def cmd_bounds(args):
    p = load_pipeline(args.file)
    q = _query(args.target, args.yield_)
    try:
        si, gi = (int(v) for v in args.chain_gate.split(":"))
        gate = p.stages[si].gates[gi]
    except (ValueError, IndexError):
        raise CliError(f"--chain-gate {args.chain_gate!r} does not name a stage:gate") from None
    slow = gate_delay_moments(gate.resized(gate.lower), p.variation)
    fast = gate_delay_moments(gate.resized(gate.upper), p.variation)
    def sig(g):
        return math.sqrt(g.sigma_inter ** 2 + g.sigma_sys ** 2 + g.sigma_rand ** 2)

    chain = (slow.mean, sig(slow), fast.mean, sig(fast))
    try:
        region = design_space_region(q, p.n_stages, chain, _parse_grid(args.sigma_grid))
    except DomainError as exc:
        raise CliError(str(exc)) from None
    header = ["sigma [ps]", "mu_eq11 [ps]", "mu_eq12 [ps]", "mu_realizable_min [ps]",
              "mu_realizable_max [ps]"]
    rows = [[r.sigma, r.mu_relaxed, r.mu_stringent, r.mu_realizable_min, r.mu_realizable_max]
            for r in region]
    payload = {"n_stages": p.n_stages, "chain_ps": list(chain),
               "rows": [dict(zip(["sigma_ps", "mu_relaxed_ps", "mu_stringent_ps",
                                  "mu_realizable_min_ps", "mu_realizable_max_ps"], r)) for r in rows]}
    if args.format == "text":
        args.format = "csv"
    _emit(args, None, header, rows, payload)
    return EXIT_OK


def _mc_config(args, samples=None):
    try:
        return McConfig(samples or args.samples, args.seed, args.batch_size, args.workers)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def cmd_mc(args):
    p = load_pipeline(args.file)
    q = _query(args.target)
    cfg = _mc_config(args)
    rep = model_error_report(p, q, cfg)
    header = ["samples [count]", "seed [id]", "target [ps]", "mean_mc [ps]", "mean_analytical [ps]",
              "mean_error [%]", "sigma_mc [ps]", "sigma_analytical [ps]", "sigma_error [%]",
              "yield_mc [1]", "yield_analytical [1]", "stderr_mean [ps]"]
    rows = [[cfg.samples, cfg.seed, args.target, rep.empirical.mean, rep.analytical.mean,
             rep.mean_error_pct, rep.empirical.std_dev, rep.analytical.std_dev, rep.sigma_error_pct,
             rep.empirical_yield, rep.analytical_yield, rep.standard_error_mean]]
    text = (f"samples: {cfg.samples}  seed: {cfg.seed}  target: {_f(args.target)} ps\n"
            f"               monte-carlo   analytical   error\n"
            f"mu_T [ps]      {rep.empirical.mean:11.4f}  {rep.analytical.mean:11.4f}  "
            f"{rep.mean_error_pct:.3f} %\n"
            f"sigma_T [ps]   {rep.empirical.std_dev:11.4f}  {rep.analytical.std_dev:11.4f}  "
            f"{rep.sigma_error_pct:.3f} %\n"
            f"yield [1]      {rep.empirical_yield:11.5f}  {rep.analytical_yield:11.5f}\n"
            f"standard error of mean: {rep.standard_error_mean:.4g} ps\n")
    payload = {
        "samples": cfg.samples, "seed": cfg.seed, "target_ps": args.target,
        "empirical": {"mean_ps": rep.empirical.mean, "sigma_ps": rep.empirical.std_dev,
                      "yield": rep.empirical_yield},
        "analytical": {"mean_ps": rep.analytical.mean, "sigma_ps": rep.analytical.std_dev,
                       "yield": rep.analytical_yield},
        "mean_error_pct": rep.mean_error_pct, "sigma_error_pct": rep.sigma_error_pct,
        "standard_error_mean_ps": rep.standard_error_mean,
    }
    _emit(args, text, header, rows, payload)

    if args.histogram:
        worst = sample_stage_delays(p, cfg).max(axis=1)
        counts, edges = np.histogram(worst, bins=args.bins)
        width = edges[1] - edges[0]
        centres = 0.5 * (edges[:-1] + edges[1:])
        a = rep.analytical
        analytic = std_normal_pdf((centres - a.mean) / a.std_dev) / a.std_dev if a.std_dev > 0 \
            else np.zeros_like(centres)
        hist_rows = [[c, n / (cfg.samples * width), d] for c, n, d in zip(centres, counts, analytic)]
        with open(args.histogram, "w", encoding="utf-8", newline="\n") as fh:
            write_csv(["delay [ps]", "empirical_density [1/ps]", "analytical_density [1/ps]"],
                      hist_rows, fh)
    return EXIT_OK


def sweep_rows(total_levels, stage_counts, regimes, gate, latch, cfg):
    """One row per (N_S, regime) of the constant-total-depth sweep."""
    for n in stage_counts:
        if total_levels % n:
            raise CliError(f"stage count {n} does not divide total levels {total_levels}")
    rows = []
    for name, v in regimes:
        for n in stage_counts:
            depth = total_levels // n
            p = uniform_pipeline(n, depth, gate, v, latch)
            a = pipeline_distribution(p)
            g = gate_delay_moments(gate, v)
            single = inverter_chain_relation(depth, g.mean, v.total_sigma_ratio * g.mean)
            row = [n, depth, name, v.inter_die_fraction, v.systematic_fraction, v.random_fraction,
                   a.mean, a.std_dev, a.std_dev / a.mean, single.std_dev / (single.mean + latch)]
            if cfg is not None:
                emp, _ = empirical_max_stats(sample_stage_delays(p, cfg), math.inf)
                row.append(emp.std_dev / emp.mean)
            rows.append(row)
    return rows


SWEEP_HEADER = ["n_stages [count]", "logic_depth [count]", "regime", "inter_die_fraction [1]",
                "systematic_fraction [1]", "random_fraction [1]", "mu_T [ps]", "sigma_T [ps]",
                "variability_analytical [1]", "variability_chain_stage [1]"]


def cmd_sweep(args):
    counts = _parse_ints(args.stage_counts, "--stage-counts")
    regimes = [(name, _parse_regime(name, args.sigma_ratio, args.corr_length))
               for name in args.regimes.split(",") if name.strip()]
    gate = GateInstance(args.gate_p, args.gate_q, 1.0, 1.0, 1.0, 1.0)
    cfg = None if args.no_mc else _mc_config(args)
    rows = sweep_rows(args.total_levels, counts, regimes, gate, args.latch, cfg)
    header = SWEEP_HEADER + ([] if cfg is None else ["variability_mc [1]"])
    payload = {"header": header, "rows": rows}
    if args.format == "text":
        args.format = "csv"
    _emit(args, None, header, rows, payload)
    return EXIT_OK


def cmd_optimize(args):
    p = load_pipeline(args.file)
    q = _query(args.target, args.yield_)
    base = balanced_baseline(p, q)
    sol = global_optimize(p, q, mode=args.mode, start=base)
    out = Path(args.output) if args.output else Path(args.file).with_suffix(".sized.json")
    doc = pipeline_to_dict(sol.pipeline)
    doc["optimization"] = {"mode": args.mode, "target_delay": q.target_delay,
                           "target_yield": q.target_yield, "feasible": sol.feasible}
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, indent=2) + "\n")

    T = q.target_delay
    header = ["stage", "gates [count]", "baseline_area [%]", "baseline_yield [%]",
              "optimized_area [%]", "optimized_yield [%]"]
    rows = []
    for i, (bs, os_) in enumerate(zip(base.pipeline.stages, sol.pipeline.stages)):
        rows.append([i, bs.logic_depth, 100 * bs.area / base.total_area,
                     100 * stage_yield(base.per_stage[i], T), 100 * os_.area / base.total_area,
                     100 * stage_yield(sol.per_stage[i], T)])
    rows.append(["pipeline", sum(s.logic_depth for s in p.stages), 100.0,
                 100 * base.achieved_yield, 100 * sol.total_area / base.total_area,
                 100 * sol.achieved_yield])
    verify = None
    if args.seed_verify:
        cfg = _mc_config(args, samples=args.seed_verify)
        _, verify = empirical_max_stats(sample_stage_delays(sol.pipeline, cfg), T)

    lines = [f"mode: {args.mode}  target: {_f(T)} ps  yield target: {_f(q.target_yield)}",
             "stage  gates  base_area[%]  base_yield[%]  opt_area[%]  opt_yield[%]"]
    for r in rows:
        lines.append(f"{r[0]:>8}  {r[1]:>5}  {r[2]:12.2f}  {r[3]:13.2f}  {r[4]:11.2f}  {r[5]:12.2f}")
    lines.append(f"feasible: {'yes' if sol.feasible else 'no'}  iterations: {sol.iterations}")
    lines.append(f"sized pipeline written to {out}")
    if verify is not None:
        lines.append(f"monte-carlo yield ({args.seed_verify} samples, seed {args.seed}): {verify:.5f}")
    payload = {
        "mode": args.mode, "target_ps": T, "target_yield": q.target_yield,
        "feasible": sol.feasible, "iterations": sol.iterations, "output": str(out),
        "baseline": {"area": base.total_area, "yield": base.achieved_yield},
        "optimized": {"area": sol.total_area, "yield": sol.achieved_yield},
        "stages": [dict(zip(["stage", "gates", "baseline_area_pct", "baseline_yield_pct",
                             "optimized_area_pct", "optimized_yield_pct"], r)) for r in rows[:-1]],
        "mc_yield": verify,
    }
    if args.format == "csv" and verify is not None:
        rows.append(["mc_verify", args.seed_verify, "", "", "", 100 * verify])
    _emit(args, "\n".join(lines) + "\n", header, rows, payload)
    return EXIT_OK if sol.feasible else EXIT_INFEASIBLE


# ------------------------------------------------------------------ parser


def build_parser():
    ap = argparse.ArgumentParser(prog="pipeyield", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, func, help_, needs_file=True):
        sp = sub.add_parser(name, help=help_, description=help_)
        if needs_file:
            sp.add_argument("file", help="pipeline description (JSON)")
        sp.add_argument("--format", choices=("text", "csv", "structured"), default="text",
                        help="text table, CSV or JSON (default: %(default)s)")
        sp.set_defaults(func=func)
        return sp

    def mc_flags(sp, samples=100_000):
        if samples:
            sp.add_argument("--samples", type=int, default=samples,
                            help="Monte-Carlo sample count (default: %(default)s)")
        sp.add_argument("--seed", type=int, default=42, help="random seed (default: %(default)s)")
        sp.add_argument("--batch-size", type=int, default=16_384,
                        help="rows per batch; does not change results (default: %(default)s)")
        sp.add_argument("--workers", type=int, default=1,
                        help="sampling threads; does not change results (default: %(default)s)")

    command("analyze", cmd_analyze, "stage moments, correlations and pipeline delay")

    sp = command("yield", cmd_yield, "Gaussian and independent-stage yield")
    sp.add_argument("--target", type=float, required=True, help="target delay [ps]")
    sp.add_argument("--independent", action="store_true",
                    help="report the independent-stage product as the headline yield")

    sp = command("bounds", cmd_bounds, "permissible per-stage (mu, sigma) region as CSV")
    sp.add_argument("--target", type=float, required=True, help="target delay [ps]")
    sp.add_argument("--yield", dest="yield_", type=float, required=True,
                    help="target yield in (0, 1)")
    sp.add_argument("--sigma-grid", required=True, help="start:stop:count [ps]")
    sp.add_argument("--chain-gate", default="0:0",
                    help="stage:gate bounding the realizable band (default: %(default)s)")

    sp = command("mc", cmd_mc, "Monte-Carlo check of the analytical model")
    sp.add_argument("--target", type=float, required=True, help="target delay [ps]")
    mc_flags(sp)
    sp.add_argument("--histogram", help="write a delay histogram CSV here")
    sp.add_argument("--bins", type=int, default=60, help="histogram bins (default: %(default)s)")

    sp = command("sweep", cmd_sweep, "variability vs stage count at constant total depth",
                 needs_file=False)
    sp.add_argument("--total-levels", type=int, default=120,
                    help="gate levels shared by all stages (default: %(default)s)")
    sp.add_argument("--stage-counts", default="1,2,3,4,5,6,8,10,12,15,20",
                    help="comma list; each must divide --total-levels (default: %(default)s)")
    sp.add_argument("--regimes", default="random,inter,mixed",
                    help="random, inter, mixed or a/b/c fractions (default: %(default)s)")
    sp.add_argument("--sigma-ratio", type=float, default=0.1,
                    help="gate sigma / mean (default: %(default)s)")
    sp.add_argument("--gate-p", type=float, default=2.0,
                    help="intrinsic gate delay [ps] (default: %(default)s)")
    sp.add_argument("--gate-q", type=float, default=8.0,
                    help="drive-dependent gate delay [ps] (default: %(default)s)")
    sp.add_argument("--latch", type=float, default=20.0,
                    help="latch overhead per stage [ps] (default: %(default)s)")
    sp.add_argument("--corr-length", type=float, default=4.0,
                    help="in stage pitches (default: %(default)s)")
    sp.add_argument("--no-mc", action="store_true", help="skip the Monte-Carlo column")
    mc_flags(sp, samples=20_000)

    sp = command("optimize", cmd_optimize, "size stages for a yield target")
    sp.add_argument("--target", type=float, required=True, help="target delay [ps]")
    sp.add_argument("--yield", dest="yield_", type=float, required=True,
                    help="target yield in (0, 1)")
    sp.add_argument("--mode", choices=MODES, default="min-area",
                    help="fix the yield, or cut area at the yield (default: %(default)s)")
    sp.add_argument("--output", help="sized pipeline file (default: <file>.sized.json)")
    sp.add_argument("--seed-verify", type=int, default=0, metavar="N",
                    help="confirm the achieved yield with N Monte-Carlo samples")
    mc_flags(sp, samples=None)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PipelineFileError, CliError, ModelError, DomainError) as exc:
        print(f"pipeyield: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"pipeyield: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
