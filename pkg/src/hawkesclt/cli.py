"""Command-line front end.

Exit codes: 0 ok, 2 configuration error, 3 verification failure,
4 numerical failure.
"""
import argparse
import csv
import json
import os
import sys

from .config import ExperimentConfig
from .errors import ConfigError, HawkesCLTError, VerificationFailure
from .experiments import run_psi, run_rates, run_verify, write_csv
from .engine import simulate_batch, simulate_cluster, simulate_thinning
from .rng import stream
from .verify import LemmaReport, format_table


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=default, help="override the master seed")
    parser.add_argument("--out", default=default, help="run directory (default: config output_dir)")
    parser.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                        help="worker threads (results do not depend on this)")


def build_parser():
    p = argparse.ArgumentParser(prog="hawkesclt", description=__doc__.splitlines()[0])
    _global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("psi", parents=[common], help="solve the renewal equation, write psi.csv")
    s.add_argument("--step", type=float, default=None)
    s.add_argument("--horizon", type=float, default=20.0)
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--max-iter", type=int, default=10_000)

    s = sub.add_parser("sim", parents=[common], help="simulate paths")
    s.add_argument("--T", type=float, required=True, help="horizon")
    s.add_argument("--method", choices=("thinning", "cluster"), default="thinning")
    s.add_argument("--reps", type=int, default=1,
                   help="1 writes events.csv for one path; more writes paths.csv")
    s.add_argument("--index", type=int, default=0, help="replication index of the single path")

    sub.add_parser("rates", parents=[common], help="distances, cumulants and rate fit")

    s = sub.add_parser("verify", parents=[common], help="lemma verification suite")
    s.add_argument("--negative-control", action="store_true",
                   help="also run the broken variant of every check")

    s = sub.add_parser("report", parents=[common], help="summarize a run directory")
    s.add_argument("run_dir", nargs="?", default=None)
    return p


def _load_config(args):
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _out_dir(args, cfg):
    return args.out if args.out else cfg.output_dir


def _cmd_psi(args, cfg, out):
    tol = args.tol if args.tol is not None else cfg.psi["tol"]
    step = args.step if args.step is not None else cfg.psi["step"]
    psi = run_psi(cfg.kernel, step=step, horizon=args.horizon, tol=tol, max_iter=args.max_iter,
                  out=out)
    print(f"psi: step={psi.step:g} horizon={psi.horizon:g} iterations={psi.iterations} "
          f"residual={psi.residual:.3g} l1_estimate={psi.l1_estimate:.10g} "
          f"tail_bound={psi.tail_bound:.3g}")
    print(f"wrote {os.path.join(out, 'psi.csv')}")
    return 0


def _cmd_sim(args, cfg, out):
    os.makedirs(out, exist_ok=True)
    k, mu, marks = cfg.kernel, cfg.mu, cfg.marks
    if args.reps <= 1:
        purpose = "sim" if args.method == "thinning" else "cluster"
        sim = simulate_thinning if args.method == "thinning" else simulate_cluster
        path = sim(k, mu, marks, args.T, stream(cfg.seed, purpose, args.index))
        dest = os.path.join(out, "events.csv")
        path.log.to_csv(dest)
        print(f"H_T={path.H} S_T={path.S:.10g} compensator={path.compensator:.10g}")
    else:
        b = simulate_batch(k, mu, marks, args.T, args.reps, cfg.seed, threads=args.threads,
                           method=args.method)
        dest = os.path.join(out, "paths.csv")
        write_csv(dest, ["replication", "H", "S", "compensator"],
                  [[i, int(h), s, c] for i, (h, s, c)
                   in enumerate(zip(b["H"], b["S"], b["compensator"]))])
        print(f"mean H_T={b['H'].mean():.6g} over {args.reps} paths")
    print(f"wrote {dest}")
    return 0


def _print_rates(distances_rows, fit, notes):
    print(f"{'T':>8} {'M':>7} {'raw':>11} {'offset':>11} {'debiased':>11} {'se':>10}")
    for row in distances_rows:
        T, M, raw, off, deb, se = row[:6]
        print(f"{float(T):8g} {int(M):7d} {float(raw):11.5g} {float(off):11.5g} "
              f"{float(deb):11.5g} {float(se):10.3g}")
    if fit:
        print(f"slope={fit['slope']:.4f} (se {fit['slope_se']:.3f})  R^2={fit['r2']:.4f}")
    for n in notes:
        print(f"note: {n}")


def _cmd_rates(args, cfg, out):
    rep = run_rates(cfg, threads=args.threads, out=out)
    _print_rates(rep.distance_rows(), None if rep.fit is None else rep.fit.to_dict(), rep.notes)
    print(f"wrote {out}")
    return 0


def _cmd_verify(args, cfg, out):
    res = run_verify(cfg, threads=args.threads, negative_control=args.negative_control, out=out)
    print(format_table(res.reports))
    for r in res.reports:
        if r.negative_control:
            status = "failed as expected" if r.verdict == "fail" else "DID NOT FAIL"
            print(f"negative control {r.lemma}: {status}")
    if not res.ok:
        bad = res.failed + [f"{n} (vacuous control)" for n in res.vacuous_controls]
        raise VerificationFailure("verification failed: " + ", ".join(bad))
    return 0


def _cmd_report(args, cfg, out):
    run_dir = args.run_dir or out
    if not os.path.isdir(run_dir):
        raise ConfigError(f"no run directory {run_dir}")
    found = False
    dpath = os.path.join(run_dir, "distances.csv")
    if os.path.exists(dpath):
        found = True
        with open(dpath) as fh:
            rows = list(csv.reader(fh))[1:]
        fit, notes = None, []
        fpath = os.path.join(run_dir, "ratefit.json")
        if os.path.exists(fpath):
            with open(fpath) as fh:
                doc = json.load(fh)
            fit, notes = doc.get("fit"), doc.get("notes", [])
            print(f"functional={doc['functional']} distance={doc['distance']} "
                  f"target_variance={doc['target_variance']:.6g}")
        _print_rates(rows, fit, notes)
    cpath = os.path.join(run_dir, "cumulants.csv")
    if os.path.exists(cpath):
        with open(cpath) as fh:
            rows = list(csv.DictReader(fh))
        print(f"{'T':>8} {'k2':>10} {'k3':>10} {'k4':>10} {'target_k2':>10}")
        for r in rows:
            print(f"{float(r['T']):8g} {float(r['k2']):10.5g} {float(r['k3']):10.4g} "
                  f"{float(r['k4']):10.4g} {float(r['target_k2']):10.5g}")
    lpath = os.path.join(run_dir, "lemmas.json")
    if os.path.exists(lpath):
        found = True
        with open(lpath) as fh:
            doc = json.load(fh)
        reports = [LemmaReport(**{**r, "band": tuple(r["band"])}) for r in doc["reports"]]
        print(format_table(reports))
    if not found:
        raise ConfigError(f"{run_dir} holds no distances.csv or lemmas.json")
    return 0


COMMANDS = {"psi": _cmd_psi, "sim": _cmd_sim, "rates": _cmd_rates,
            "verify": _cmd_verify, "report": _cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg, _out_dir(args, cfg))
    except HawkesCLTError as exc:
        print(f"hawkesclt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
