"""Orchestration of rate experiments, verification suites and psi tables.

A run writes into one directory.  CSV bodies depend only on (config,
seed); the wall-clock timestamp lives in the JSON metadata.
"""
import csv
import datetime
import json
import os
import subprocess
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .config import ExperimentConfig, Model
from .engine import simulate_batch
from .errors import NumericalFailure
from .kernel import kernel_l1, mean_compensator, require_stable, solve_psi
from .marks import MarkDistribution, check_fast_rate_hypothesis
from .rng import stream
from .stats import (fit_rate, k_cumulants, normalize_values, smooth_distance_surrogate,
                    smooth_distance_surrogate_given_counts, wasserstein1_to_normal)
from .theory import AsymptoticParams
from . import verify as V

DISTANCE_COLUMNS = ["T", "M", "raw", "offset", "debiased", "se", "target_variance", "kind"]
CUMULANT_COLUMNS = ["T", "M", "k1", "k2", "k3", "k4", "se_k1", "se_k2", "se_k3", "se_k4",
                    "target_k2"]


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _git_hash():
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=here, capture_output=True,
                             text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 else "unknown"


def run_metadata(config):
    return {"config_hash": config.hash(), "git_hash": _git_hash(), "version": __version__,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}


def _prepare_dir(out):
    os.makedirs(out, exist_ok=True)
    return out


@dataclass
class RateReport:
    config: ExperimentConfig
    params: AsymptoticParams
    distances: list
    cumulants: list
    fit: object
    notes: list = field(default_factory=list)
    out_dir: str = None

    def distance_rows(self):
        return [[T, d.M, d.raw, d.offset, d.debiased, d.se, d.target_variance, d.kind]
                for T, d in zip(self.config.horizons, self.distances)]

    def cumulant_rows(self):
        target = self.params.target_variance(self.config.functional)
        return [[T, self.config.replications, c.k1, c.k2, c.k3, c.k4, *c.se, target]
                for T, c in zip(self.config.horizons, self.cumulants)]


def run_rates(config, threads=1, out=None):
    """Per-horizon distances and cumulants plus a log-log rate fit.

    Stability is checked before any simulation.  Horizon j uses the
    simulation streams (seed, "sim", j, i) and debias / bootstrap
    streams keyed by j, so outputs do not depend on ``threads``.
    """
    require_stable(config.kernel)
    k, mu, marks = config.kernel, config.mu, config.marks
    params = AsymptoticParams.from_model(mu, k, marks)
    tag = config.functional
    var = params.target_variance(tag)
    seed = config.seed
    notes = []
    hs = config.horizons
    mean_comp = None
    psi_meta = None
    if tag == "V":
        psi = solve_psi(k, step=config.psi["step"], horizon=hs[-1], tol=config.psi["tol"])
        psi_meta = psi.metadata()
    if config.distance == "smooth-surrogate":
        hyp = check_fast_rate_hypothesis(marks)
        if not hyp:
            notes.append(f"mark law violates E X = E X^3 = 0 ({hyp.message}); "
                         "the faster smooth-class rate is not expected")
    distances, cumulants = [], []
    for j, T in enumerate(hs):
        b = simulate_batch(k, mu, marks, T, config.replications, seed, key=(j,),
                           threads=threads)
        if tag == "V":
            mean_comp = mean_compensator(k, mu, psi, T)
        values = normalize_values(b["S"], b["compensator"], tag, params, T, mean_comp)
        drng = stream(seed, "debias", j)
        if config.distance == "wasserstein":
            d = wasserstein1_to_normal(values, var, config.debias_replicates, rng=drng)
        elif config.mark_integration and tag == "S":
            d = smooth_distance_surrogate_given_counts(b["H"], T, marks, var, replicates=
                                                       config.debias_replicates, rng=drng)
        else:
            d = smooth_distance_surrogate(values, var, replicates=config.debias_replicates,
                                          rng=drng)
        if d.advisory:
            notes.append(f"T={T:g}: {d.advisory}")
        distances.append(d)
        cumulants.append(k_cumulants(values, n_boot=max(config.bootstrap, 2),
                                     rng=stream(seed, "bootstrap", j)))
    fit = None
    if len(hs) >= 3:
        try:
            fit = fit_rate([(T, d.debiased) for T, d in zip(hs, distances)])
        except NumericalFailure as exc:
            notes.append(f"rate fit unavailable: {exc}")
    else:
        notes.append("rate fit needs at least three horizons")
    report = RateReport(config, params, distances, cumulants, fit, notes)
    if out is not None:
        _write_rates(report, out, psi_meta)
    return report


def _write_rates(report, out, psi_meta):
    _prepare_dir(out)
    report.out_dir = out
    cfg = report.config
    cfg.save(os.path.join(out, "config.json"))
    write_csv(os.path.join(out, "distances.csv"), DISTANCE_COLUMNS, report.distance_rows())
    write_csv(os.path.join(out, "cumulants.csv"), CUMULANT_COLUMNS, report.cumulant_rows())
    doc = {
        "fit": None if report.fit is None else report.fit.to_dict(),
        "functional": cfg.functional,
        "distance": cfg.distance,
        "theory": report.params.to_dict(),
        "target_variance": report.params.target_variance(cfg.functional),
        "notes": report.notes,
        "config": cfg.to_dict(),
        "metadata": run_metadata(cfg),
    }
    if psi_meta is not None:
        doc["psi"] = psi_meta
    with open(os.path.join(out, "ratefit.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- verification suite -------------------------------------------------------

@dataclass
class VerifyOutcome:
    reports: list
    failed: list
    vacuous_controls: list

    @property
    def ok(self):
        return not self.failed and not self.vacuous_controls


def run_verify(config, threads=1, negative_control=False, out=None):
    """Run every lemma check on the configured model.

    With ``negative_control`` each check also runs its broken variant;
    those are expected to fail.  A control that passes on a model with
    non-zero kernel is reported as vacuous.
    """
    require_stable(config.kernel)
    model = config.model
    counting = Model(model.kernel, model.mu, MarkDistribution.dirac(1.0))
    opts = config.verify
    seed = config.seed
    psi = solve_psi(model.kernel, step=config.psi["step"], tol=config.psi["tol"],
                    horizon=max(20.0, max(opts["remainder_R"]["horizons"])))
    o = opts["ibp"]
    runs = [lambda neg: V.check_ibp(model, T=o["T"], reps=o["reps"], seed=seed,
                                    threads=threads, n_strata=o["n_strata"], corrupt_rhs=neg)]
    p = opts["derivative_positivity"]
    runs.append(lambda neg: V.check_derivative_positivity(
        model, T=p["T"], reps=p["reps"], seed=seed, threads=threads,
        grid_points=p["grid_points"], coupling="independent" if neg else "shared"))
    f = opts["offspring_bound"]
    runs.append(lambda neg: V.check_offspring_bound(
        model, T=f["T"], reps=f["reps"], seed=seed, threads=threads,
        n_strata=f["n_strata"], drop_psi=neg, psi=psi))
    m = opts["martingale"]
    runs.append(lambda neg: V.check_martingale(
        model, T=m["T"], checkpoints=m["checkpoints"], reps=m["reps"], seed=seed,
        threads=threads, n_strata=m["n_strata"], omit_compensator=neg))
    r = opts["remainder_R"]
    runs.append(lambda neg: V.check_remainder_R(
        counting, horizons=r["horizons"], reps=r["reps"], seed=seed, threads=threads,
        drop_factor=neg, psi=psi))
    t = opts["R_third_moment"]
    runs.append(lambda neg: V.check_R_third_moment(
        model, horizons=t["horizons"], reps=t["reps"], seed=seed, threads=threads,
        n_strata=t["n_strata"], full_martingale=neg))
    reports = []
    for run in runs:
        reports.append(run(False))
        if negative_control:
            reports.append(run(True))
    trivial = kernel_l1(model.kernel) == 0.0
    failed = [r.lemma for r in reports if not r.negative_control and r.verdict == V.FAIL]
    vacuous = [r.lemma for r in reports
               if r.negative_control and r.verdict != V.FAIL and not trivial]
    outcome = VerifyOutcome(reports, failed, vacuous)
    if out is not None:
        _prepare_dir(out)
        config.save(os.path.join(out, "config.json"))
        doc = {"reports": [r.to_dict() for r in reports], "failed": failed,
               "vacuous_controls": vacuous, "config": config.to_dict(),
               "metadata": run_metadata(config)}
        with open(os.path.join(out, "lemmas.json"), "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")
        with open(os.path.join(out, "lemmas.txt"), "w") as fh:
            fh.write(V.format_table(reports) + "\n")
    return outcome


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


# -- psi table ------------------------------------------------------------------

def run_psi(kernel, step=None, horizon=20.0, tol=1e-8, max_iter=10_000, out=None):
    """Solve the renewal equation and write psi.csv plus psi.json metadata."""
    psi = solve_psi(kernel, step=step, horizon=horizon, tol=tol, max_iter=max_iter)
    if out is not None:
        _prepare_dir(out)
        psi.to_csv(os.path.join(out, "psi.csv"))
        meta = {**psi.metadata(), "kernel": kernel.to_dict(), "l1": kernel_l1(kernel)}
        with open(os.path.join(out, "psi.json"), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return psi
