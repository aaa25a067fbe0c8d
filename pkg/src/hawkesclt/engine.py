"""Simulation of (H, lambda, S) by thinning a driving Poisson measure.

Candidates (t, theta) are drawn under a piecewise-constant envelope that
dominates the intensity until the next candidate; a candidate becomes a
jump when theta <= lambda_t.  The coupled simulator tests every
candidate against both the base intensity and the intensity of the
configuration with one extra atom at t0, using the same theta, which is
the add-point shift realized pathwise.

Envelopes
---------
exponential  mu + alpha * A            (A = sum exp(-beta (t - t_i)), exact, decreasing)
erlang       mu + alpha * (B + A/beta) (B = sum (t - t_i) exp(-beta (t - t_i)));
             alpha (u + 1/beta) exp(-beta u) is a non-increasing majorant of phi
tabulated    mu + sum suffix_max(t - t_i) over events inside the support
"""
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ContractError, EnvelopeBreach, NumericalFailure
from .kernel import kernel_l1, require_stable
from .parallel import parallel_map
from .rng import stream

FAM_CODES = {"zero": 0, "exponential": 1, "erlang": 2, "tabulated": 3}

MODE_SINGLE = 0
MODE_COUPLED = 1
MODE_INDEPENDENT = 2  # negative control: shifted path uses its own theta

# event flags in the coupled output
BASE_ONLY = 0
COMMON = 1
SHIFTED_ONLY = 2
ATOM = 3

_EMPTY = np.zeros(1)


def _kernel_args(kernel):
    fam = FAM_CODES[kernel.family]
    if kernel.family == "tabulated":
        return fam, 0.0, 1.0, kernel.values, kernel._suffix_max, kernel.step
    return fam, kernel.alpha, kernel.beta, _EMPTY, _EMPTY, 1.0


@njit(nogil=True, cache=True)
def _tab_value(tab, h, u):
    if u < 0.0:
        return 0.0
    x = u / h
    k = int(x)
    last = tab.size - 1
    if k >= last:
        if k == last and x == k:
            return tab[last]
        return 0.0
    f = x - k
    return tab[k] * (1.0 - f) + tab[k + 1] * f


@njit(nogil=True, cache=True)
def _phi(fam, a, b, tab, h, u):
    if u < 0.0 or fam == 0:
        return 0.0
    if fam == 1:
        return a * math.exp(-b * u)
    if fam == 2:
        return a * u * math.exp(-b * u)
    return _tab_value(tab, h, u)


@njit(nogil=True, cache=True)
def _tab_sums(tab, smax, h, supp, t, ev, fl, lo, n, want_shifted):
    """(intensity excess, envelope excess) over events inside the support."""
    lam = 0.0
    env = 0.0
    for j in range(lo, n):
        f = fl[j]
        if want_shifted:
            if f == 0:
                continue
        elif f != 0 and f != 1:
            continue
        u = t - ev[j]
        lam += _tab_value(tab, h, u)
        k = int(u / h)
        if k < smax.size:
            env += smax[k]
    return lam, env


@njit(nogil=True, cache=True)
def _thin_core(gen, mu, fam, a, b, tab, smax, h, T, t0, mode):
    cap = 64
    ev = np.empty(cap)
    fl = np.empty(cap, dtype=np.int8)
    n = 0
    lo = 0
    supp = h * (tab.size - 1)
    # Markov states: index 0 base, 1 shifted
    A0 = 0.0
    B0 = 0.0
    A1 = 0.0
    B1 = 0.0
    t = 0.0
    inserted = mode == 0
    min_gap = np.inf
    status = 0
    while True:
        # envelope valid on [t, next candidate]
        if fam == 0:
            L = mu
        elif fam == 1:
            L = mu + a * max(A0, A1)
        elif fam == 2:
            L = mu + a * max(B0 + A0 / b, B1 + A1 / b)
        else:
            while lo < n and t - ev[lo] >= supp:
                lo += 1
            _, e0 = _tab_sums(tab, smax, h, supp, t, ev, fl, lo, n, False)
            if mode != 0:
                _, e1 = _tab_sums(tab, smax, h, supp, t, ev, fl, lo, n, True)
                e0 = max(e0, e1)
            L = mu + e0
        tn = t + gen.standard_exponential() / L
        at_atom = False
        if not inserted and tn >= t0:
            # memoryless restart: the overshooting draw is discarded
            tn = t0
            at_atom = True
        elif tn > T:
            break
        dt = tn - t
        if fam == 1:
            d = math.exp(-b * dt)
            A0 *= d
            A1 *= d
        elif fam == 2:
            d = math.exp(-b * dt)
            B0 = (B0 + dt * A0) * d
            A0 *= d
            B1 = (B1 + dt * A1) * d
            A1 *= d
        t = tn
        if n == cap:
            cap *= 2
            ev2 = np.empty(cap)
            fl2 = np.empty(cap, dtype=np.int8)
            ev2[:n] = ev[:n]
            fl2[:n] = fl[:n]
            ev = ev2
            fl = fl2
        if at_atom:
            # deterministic atom in the shifted configuration
            ev[n] = t
            fl[n] = 3
            n += 1
            A1 += 1.0
            inserted = True
            continue
        if fam == 0:
            lam0 = mu
            lam1 = mu
        elif fam == 1:
            lam0 = mu + a * A0
            lam1 = mu + a * A1
        elif fam == 2:
            lam0 = mu + a * B0
            lam1 = mu + a * B1
        else:
            while lo < n and t - ev[lo] >= supp:
                lo += 1
            s0, _ = _tab_sums(tab, smax, h, supp, t, ev, fl, lo, n, False)
            lam0 = mu + s0
            lam1 = lam0
            if mode != 0:
                s1, _ = _tab_sums(tab, smax, h, supp, t, ev, fl, lo, n, True)
                lam1 = mu + s1
        if lam0 > L * (1.0 + 1e-12) or (mode != 0 and lam1 > L * (1.0 + 1e-12)):
            status = 1
            break
        theta = gen.random() * L
        acc0 = theta <= lam0
        if mode == 0:
            if acc0:
                ev[n] = t
                fl[n] = 1
                n += 1
                A0 += 1.0
            continue
        if mode == 2:
            acc1 = gen.random() * L <= lam1
        else:
            acc1 = theta <= lam1
        gap = lam1 - lam0
        if gap < min_gap:
            min_gap = gap
        if acc0 and acc1:
            ev[n] = t
            fl[n] = 1
            n += 1
            A0 += 1.0
            A1 += 1.0
        elif acc1:
            ev[n] = t
            fl[n] = 2
            n += 1
            A1 += 1.0
        elif acc0:
            ev[n] = t
            fl[n] = 0
            n += 1
            A0 += 1.0
    return ev[:n], fl[:n], min_gap, status


@njit(nogil=True, cache=True)
def _intensity_at(fam, a, b, tab, h, mu, ev, mask, points):
    """mu + sum_{ev_j < s, mask_j} phi(s - ev_j) for each s in ``points``."""
    out = np.empty(points.size)
    for i in range(points.size):
        s = points[i]
        acc = mu
        for j in range(ev.size):
            if ev[j] >= s:
                break
            if mask[j]:
                acc += _phi(fam, a, b, tab, h, s - ev[j])
        out[i] = acc
    return out


# -- result types -----------------------------------------------------------

@dataclass
class EventLog:
    times: np.ndarray
    marks: np.ndarray
    horizon: float

    @property
    def H(self):
        return int(self.times.size)

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "mark"])
            for t, x in zip(self.times, self.marks):
                w.writerow([f"{t:.17g}", f"{x:.17g}"])


@dataclass
class PathResult:
    log: EventLog
    H: int
    S: float
    compensator: float
    method: str = "thinning"

    @property
    def M(self):
        return self.H - self.compensator


@dataclass
class CoupledPathResult:
    t0: float
    base: PathResult
    shifted: PathResult
    hat_count: int
    hat_integral: float
    extra_marks_sum: float
    grid: np.ndarray = field(repr=False)
    lambda_hat: np.ndarray = field(repr=False)
    min_candidate_gap: float
    base_contained: bool
    base_intensity_t0: float
    theta_convention: str = "inserted atom at (t0, theta=0); insertion is unconditional"

    @property
    def hat_martingale(self):
        return self.hat_count - self.hat_integral


# -- single paths -----------------------------------------------------------

def compensator_integral(log, kernel, mu, upto=None):
    """Lambda_T = mu T + sum_i Phi(T - t_i) (pathwise, exact up to kernel quadrature)."""
    T = log.horizon if upto is None else float(upto)
    times = np.asarray(log.times)
    if upto is not None:
        times = times[times < T]
    return float(mu * T + np.sum(kernel.integral(T - times)))


def _run_core(kernel, mu, T, t0, mode, rng):
    fam, a, b, tab, smax, h = _kernel_args(kernel)
    ev, fl, gap, status = _thin_core(rng, float(mu), fam, a, b, tab, smax, h,
                                     float(T), float(t0), mode)
    if status:
        raise EnvelopeBreach("candidate intensity exceeded the thinning envelope")
    return ev, fl, gap


def simulate_thinning(kernel, mu, marks, T, rng):
    """One Hawkes / compound Hawkes path on (0, T] by Ogata thinning."""
    if not T > 0:
        raise ContractError("T must be positive")
    require_stable(kernel)
    times, _, _ = _run_core(kernel, mu, T, -1.0, MODE_SINGLE, rng)
    x = marks.sample(rng, times.size)
    log = EventLog(times, x, float(T))
    return PathResult(log, times.size, float(x.sum()), compensator_integral(log, kernel, mu))


def _sample_delays(kernel, rng, n):
    if kernel.family == "exponential":
        return rng.exponential(1.0 / kernel.beta, size=n)
    if kernel.family == "erlang":
        return rng.gamma(2.0, 1.0 / kernel.beta, size=n)
    # exact inversion of the piecewise-linear density
    vals, h, cum = kernel.values, kernel.step, kernel._cum
    target = rng.random(n) * cum[-1]
    k = np.clip(np.searchsorted(cum, target, side="right") - 1, 0, vals.size - 2)
    r = target - cum[k]
    f0 = vals[k]
    slope = (vals[k + 1] - f0) / h
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = np.where(np.abs(slope) > 1e-14,
                        (-f0 + np.sqrt(np.maximum(f0 * f0 + 2.0 * slope * r, 0.0))) / slope,
                        r / np.where(f0 > 0, f0, 1.0))
    return k * h + np.clip(quad, 0.0, h)


def simulate_cluster(kernel, mu, marks, T, rng, max_generations=10_000):
    """Immigration-birth construction: Poisson(mu) immigrants, each event
    begets Poisson(||phi||_1) children displaced by draws from phi / ||phi||_1."""
    if not T > 0:
        raise ContractError("T must be positive")
    require_stable(kernel)
    l1 = kernel_l1(kernel)
    n0 = rng.poisson(mu * T)
    current = rng.uniform(0.0, T, size=n0)
    pieces = [current]
    generation = 0
    while current.size and l1 > 0:
        generation += 1
        if generation > max_generations:
            raise NumericalFailure(f"offspring recursion exceeded {max_generations} generations")
        counts = rng.poisson(l1, size=current.size)
        parents = np.repeat(current, counts)
        child = parents + _sample_delays(kernel, rng, parents.size)
        current = child[child <= T]
        pieces.append(current)
    times = np.sort(np.concatenate(pieces))
    x = marks.sample(rng, times.size)
    log = EventLog(times, x, float(T))
    return PathResult(log, times.size, float(x.sum()),
                      compensator_integral(log, kernel, mu), method="cluster")


def simulate_coupled_addpoint(kernel, mu, marks, T, t0, rng, grid_points=256,
                              coupling="shared", record=True):
    """Base path and the path with an extra driving atom at ``t0``.

    Both paths are thinned from the same candidate stream; with
    ``coupling="independent"`` the shifted path draws its own theta,
    which breaks the coupling (negative control only).
    """
    if not 0 < t0 < T:
        raise ContractError(f"need 0 < t0 < T, got t0={t0}, T={T}")
    require_stable(kernel)
    mode = MODE_COUPLED if coupling == "shared" else MODE_INDEPENDENT
    ev, fl, gap = _run_core(kernel, mu, T, t0, mode, rng)
    x = marks.sample(rng, ev.size)
    is_atom = fl == ATOM
    x[is_atom] = 1.0
    in_base = (fl == COMMON) | (fl == BASE_ONLY)
    in_shift = fl != BASE_ONLY
    base_log = EventLog(ev[in_base], x[in_base], float(T))
    shift_log = EventLog(ev[in_shift], x[in_shift], float(T))
    base = PathResult(base_log, base_log.H, float(base_log.marks.sum()),
                      compensator_integral(base_log, kernel, mu))
    shift_comp = compensator_integral(shift_log, kernel, mu)
    shifted = PathResult(shift_log, shift_log.H, float(x[in_shift & ~is_atom].sum()), shift_comp)
    extra = fl == SHIFTED_ONLY
    fam, a, b, tab, _, h = _kernel_args(kernel)
    lam_t0 = _intensity_at(fam, a, b, tab, h, float(mu), ev, in_base, np.array([float(t0)]))[0]
    if record:
        grid = np.linspace(t0, T, grid_points + 1)[1:]
        points = np.union1d(grid, ev[ev > t0])
        lam_base = _intensity_at(fam, a, b, tab, h, float(mu), ev, in_base, points)
        lam_shift = _intensity_at(fam, a, b, tab, h, float(mu), ev, in_shift, points)
        lam_hat = lam_shift - lam_base
    else:
        points = lam_hat = np.empty(0)
    return CoupledPathResult(
        t0=float(t0), base=base, shifted=shifted,
        hat_count=int(extra.sum()),
        hat_integral=shift_comp - base.compensator,
        extra_marks_sum=float(x[extra].sum()),
        grid=points, lambda_hat=lam_hat, min_candidate_gap=float(gap),
        base_contained=not bool(np.any(fl == BASE_ONLY)),
        base_intensity_t0=float(lam_t0))


# -- batches -----------------------------------------------------------------

def simulate_batch(kernel, mu, marks, T, reps, seed, key=(), threads=1,
                   method="thinning", checkpoints=None):
    """Replicate paths; replication ``i`` uses stream ``(seed, method, *key, i)``.

    Returns a dict of arrays ``H``, ``S``, ``compensator`` and, when
    ``checkpoints`` is given, ``M_checkpoints`` of shape (reps, len(checkpoints)).
    """
    require_stable(kernel)
    sim = simulate_thinning if method == "thinning" else simulate_cluster
    purpose = "sim" if method == "thinning" else "cluster"
    cps = None if checkpoints is None else [float(c) for c in checkpoints]

    def one(i):
        path = sim(kernel, mu, marks, T, stream(seed, purpose, *key, i))
        row = [path.H, path.S, path.compensator]
        if cps is not None:
            times = path.log.times
            for c in cps:
                row.append(np.count_nonzero(times <= c)
                           - compensator_integral(path.log, kernel, mu, upto=c))
        return row

    rows = np.asarray(parallel_map(one, reps, threads), dtype=float)
    out = {"H": rows[:, 0], "S": rows[:, 1], "compensator": rows[:, 2]}
    if cps is not None:
        out["M_checkpoints"] = rows[:, 3:]
    return out
