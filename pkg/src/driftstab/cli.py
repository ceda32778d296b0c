"""Command-line experiment runner: ``driftstab <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import hashlib
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import analysis, driftlab
from .config import ExperimentConfig, load_config
from .errors import DriftstabError, SynthesisError
from .loop import LoopParams, simulate, write_trajectory_csv
from .quantizer import snap_gains_to_lattice

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2
PEAK_WINDOW = 1000


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows, digest: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_sha256={digest}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([_fmt(v) for v in row] for row in rows)
    return path


def _params(cfg: ExperimentConfig) -> LoopParams:
    return cfg.loop_params()


# --- subcommands ---------------------------------------------------------------------


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    m = args.m or cfg.run.m
    rep = analysis.check_conditions(cfg.plant.a, cfg.plant.b, cfg.p, cfg.quantizer, m, K=cfg.K)
    q = cfg.quantizer
    if q is None:
        print(f"no lattice quantizer for K={cfg.K}: {cfg.synthesis_error}")
    else:
        print(f"K={q.K} s={q.s} A_exp={q.A_exp} B_exp={q.B_exp} L_idx={q.L_idx} alpha={q.alpha:.6g}")
    for name, expr, value, ok in rep.rows():
        print(f"{name:<10} {expr:<28} {value:>14.10g}  {'ok' if ok else 'FAIL'}")
    write_csv(Path(args.out) / "conditions.csv", ("name", "expression", "value", "ok"), rep.rows(), cfg.digest())
    return EXIT_FAILED if args.strict and not rep.all_ok else EXIT_OK


def cmd_synth(args) -> int:
    K = args.K
    try:
        if K is None:
            bins = analysis.min_bins_for_second_moment(args.a, args.p) if args.m == 2 else None
            if bins is None:
                raise SynthesisError("K must be given when m != 2", "K")
            K = max(2, bins - 1 + (bins - 1) % 2)
        q = snap_gains_to_lattice(args.a, args.p, K, args.B_exp, m=args.m)
    except SynthesisError as e:
        print(f"infeasible: {e} (violated: {e.violated})")
        return EXIT_FAILED
    doc = {
        "plant": {"a": args.a},
        "quantizer": {"K": q.K, "s": str(q.s), "A_exp": q.A_exp, "B_exp": q.B_exp, "L_idx": q.L_idx},
        "channel": {"p": args.p},
        "run": {"m": args.m},
    }
    text = yaml.safe_dump(doc, sort_keys=False)
    print(f"K+1={q.K + 1} bins, alpha={q.alpha:.6g}, zoom-out gain={q.zoom_out_gain:.6g}")
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _sim_job(job):
    params, T, seed, sid = job
    return sid, simulate(params, T, seed, sid).records


def peak_counts(records, window: int = PEAK_WINDOW) -> list[tuple]:
    """Per window: number of under-zoom episodes begun, and max |x|."""
    under = np.array([abs(r.h) > 1 for r in records])
    starts = under & ~np.concatenate(([False], under[:-1]))
    xs = np.abs([r.x for r in records])
    return [
        (w, int(starts[w : w + window].sum()), float(xs[w : w + window].max()))
        for w in range(0, len(records), window)
    ]


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    params = _params(cfg)
    T = args.T or cfg.run.T
    n = args.n_traj or cfg.run.n_traj
    out, digest = Path(args.out), cfg.digest()
    work = [(params, T, cfg.run.seed, sid) for sid in range(n)]
    results = _map(_sim_job, work, args.jobs)
    rows = []
    for sid, records in sorted(results, key=lambda r: r[0]):
        path = out / f"trajectory_{sid}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            write_trajectory_csv(records, fh, f"config_sha256={digest}")
        rows += [(sid, *r) for r in peak_counts(records)]
    write_csv(out / "peaks.csv", ("stream_id", "window_start", "under_zoom_episodes", "max_abs_x"), rows, digest)
    per_k = np.mean([r[2] for r in rows])
    print(f"{n} trajectories x {T} steps; {per_k:.3g} under-zoom episodes per {PEAK_WINDOW} steps")
    return EXIT_OK


def cmd_stoptimes(args) -> int:
    cfg = load_config(args.config)
    params = _params(cfg)
    q = params.quantizer
    idx0 = args.delta0_idx if args.delta0_idx is not None else cfg.run.delta0_idx
    if idx0 is None:
        idx0 = max(q.L_idx, math.ceil(10 / q.s_float))
    k_max = args.kmax or cfg.run.k_max
    n = args.samples or cfg.run.n_samples
    table = analysis.estimate_stopping_tail(params, idx0, n, k_max, cfg.run.seed)
    oks = table.sandwich_ok()
    print(f"delta0 = 2^({q.s}*{idx0}) = {table.delta0:.6g}, {n} samples")
    for row, ok in zip(table.rows, oks):
        k, lo, emp, clo, chi, up = row
        print(f"k={k:<3} {lo:.6f} <= [{clo:.6f}, {chi:.6f}] (emp {emp:.6f}) <= {up:.6f}  {'ok' if ok else 'FAIL'}")
    write_csv(Path(args.out) / "stoptimes.csv", analysis.TAIL_COLUMNS, table.rows, cfg.digest())
    return EXIT_FAILED if args.strict and not all(oks) else EXIT_OK


def drift_threshold(rows, b0: float):
    """Smallest grid delta0 from which every estimate has ci_hi <= -b0, or None."""
    F = None
    for r in reversed(rows):
        if r[4] <= -b0:
            F = r[1]
        else:
            break
    return F


def cmd_drift(args) -> int:
    cfg = load_config(args.config)
    params = _params(cfg)
    q = params.quantizer
    grid = cfg.run.delta0_grid or list(range(q.L_idx, q.L_idx + args.grid_len))
    n = args.samples or cfg.run.n_samples
    rows = analysis.estimate_drift_at_stops(params, n, grid, cfg.run.seed)
    limit = analysis.analytic_drift_limit(params)
    b0 = abs(limit) / 2
    F = drift_threshold(rows, b0)
    print(f"analytic limit {limit:.6g}; b0 = {b0:.6g}; threshold F' = {F}")
    for r in rows:
        print(f"idx={r[0]:<4} delta0={r[1]:<12.6g} drift={r[2]:+.5f} [{r[3]:+.5f}, {r[4]:+.5f}]")
    write_csv(Path(args.out) / "drift.csv", analysis.DRIFT_COLUMNS, rows, cfg.digest())
    return EXIT_FAILED if args.strict and (limit >= 0 or F is None) else EXIT_OK


def cmd_moments(args) -> int:
    cfg = load_config(args.config)
    params = _params(cfg)
    m = args.m or cfg.run.m
    T = args.T or cfg.run.T
    n = args.n_traj or cfg.run.n_traj
    est = analysis.estimate_moment(params, m, T, n, cfg.run.seed, jobs=args.jobs)
    digest, out = cfg.digest(), Path(args.out)
    rows = [(r.stream_id, r.steps, r.average, r.half_average, r.diagnostic, r.escaped_at, r.converged())
            for r in est.runs]
    write_csv(out / "moments.csv",
              ("stream_id", "steps", "average", "half_average", "diagnostic", "escaped_at", "converged"),
              rows, digest)
    n_trace = len(est.runs[0].trace)
    if n_trace:
        every = T // n_trace
        trace_rows = [((i + 1) * every, *(r.trace[i] for r in est.runs)) for i in range(n_trace)]
        write_csv(out / "moment_trace.csv", ("t", *(f"stream_{r.stream_id}" for r in est.runs)),
                  trace_rows, digest)
    for r in rows:
        print(f"stream {r[0]}: avg|x|^{m} = {r[2]:.6g}, half-sample change {r[4]:.2%}")
    print(f"aggregate {est.aggregate:.6g}")
    return EXIT_FAILED if args.strict and not all(r[6] for r in rows) else EXIT_OK


def cmd_driftlab(args) -> int:
    chain = driftlab.read_chain(args.chain)
    spec = driftlab.read_drift_spec(args.spec, chain.n)
    h = hashlib.sha256(Path(args.chain).read_bytes() + b"\0" + Path(args.spec).read_bytes()).hexdigest()
    rep = driftlab.verify_random_time_drift(chain, spec)
    sm = driftlab.supermartingale_check(chain, spec, args.horizon)
    pib = driftlab.verify_pi_f_bound(chain, spec)
    print(f"{chain.n} states, stop rule {spec.stop}")
    print(f"random-time drift: {'holds' if rep.holds else 'fails'}; b needed on C: {rep.b_min:.6g}")
    if not rep.holds:
        print(f"  violating states: {rep.violating_states()}")
    print(f"supermartingale ({sm.n_prefixes} prefixes): {'holds' if sm.holds else 'fails'}, "
          f"min slack {sm.min_slack:.6g}")
    print(f"pi(f) = {pib.pi_f:.6g} <= b_f = {pib.b_f:.6g}: {pib.holds}")
    rows = [(x, spec.V[x], rep.next_V[x], rep.block_f[x], spec.delta[x], bool(rep.in_C[x]),
             bool(rep.drift_ok[x]), bool(rep.block_ok[x])) for x in range(chain.n)]
    write_csv(Path(args.out) / "driftlab.csv",
              ("state", "V", "next_V", "block_f", "delta", "in_C", "drift_ok", "block_ok"), rows, h)
    ok = rep.holds and sm.holds and pib.holds
    return EXIT_FAILED if args.strict and not ok else EXIT_OK


# --- plumbing ------------------------------------------------------------------------


def _map(fn, work, jobs: int):
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(min(jobs, len(work))) as ex:
            return list(ex.map(fn, work))
    return [fn(w) for w in work]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="driftstab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("config", help="YAML experiment config")
        p.add_argument("--out", default=".", help="output directory for CSVs")
        p.add_argument("--strict", action="store_true", help="exit 1 when a check fails")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        return p

    p = common(sub.add_parser("check", help="evaluate the stability conditions"))
    p.add_argument("--m", type=int)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("synth", help="synthesize a lattice quantizer")
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--K", type=int)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--B-exp", dest="B_exp", type=int, default=2)
    p.add_argument("--out", help="write the config here instead of stdout")
    p.set_defaults(fn=cmd_synth)

    p = common(sub.add_parser("simulate", help="closed-loop trajectories"))
    p.add_argument("--T", type=int)
    p.add_argument("--n-traj", dest="n_traj", type=int)
    p.set_defaults(fn=cmd_simulate)

    p = common(sub.add_parser("stoptimes", help="inter-stop tail table"))
    p.add_argument("--kmax", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--delta0-idx", dest="delta0_idx", type=int)
    p.set_defaults(fn=cmd_stoptimes)

    p = common(sub.add_parser("moments", help="time-average moment estimates"))
    p.add_argument("--T", type=int)
    p.add_argument("--n-traj", dest="n_traj", type=int)
    p.add_argument("--m", type=int)
    p.set_defaults(fn=cmd_moments)

    p = common(sub.add_parser("drift", help="drift of log bin size between stops"))
    p.add_argument("--samples", type=int)
    p.add_argument("--grid-len", dest="grid_len", type=int, default=30)
    p.set_defaults(fn=cmd_drift)

    p = common(sub.add_parser("driftlab", help="finite-chain drift verification"), config=False)
    p.add_argument("--chain", required=True)
    p.add_argument("--spec", required=True)
    p.add_argument("--horizon", type=int, default=3)
    p.set_defaults(fn=cmd_driftlab)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (DriftstabError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
