"""Excitation kernels and the renewal function psi = sum_n phi^{*n}.

Supported families
------------------
zero         phi(u) = 0 (Poisson case)
exponential  phi(u) = alpha * exp(-beta u),     ||phi||_1 = alpha / beta
erlang       phi(u) = alpha * u * exp(-beta u), ||phi||_1 = alpha / beta**2
tabulated    piecewise-linear through values[k] at u = k * step, zero past
             the last node (compact support)
"""
import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .errors import InvalidKernelError, NumericalFailure, OutOfRangeError, StabilityError

FAMILIES = ("zero", "exponential", "erlang", "tabulated")


@dataclass(frozen=True)
class Kernel:
    family: str
    alpha: float = 0.0
    beta: float = 1.0
    step: float = 0.0
    values: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidKernelError(f"unknown kernel family {self.family!r}")
        if self.family in ("exponential", "erlang"):
            if not (self.alpha > 0 and self.beta > 0):
                raise InvalidKernelError(
                    f"{self.family} kernel needs alpha > 0 and beta > 0, "
                    f"got alpha={self.alpha}, beta={self.beta}")
        if self.family == "tabulated":
            vals = np.asarray(self.values, dtype=float)
            if vals.ndim != 1 or vals.size < 2:
                raise InvalidKernelError("tabulated kernel needs at least two values")
            if not np.all(np.isfinite(vals)):
                raise InvalidKernelError("tabulated kernel has non-finite entries")
            if np.any(vals < 0):
                raise InvalidKernelError(
                    f"tabulated kernel has negative entries (min {vals.min():g})")
            if not self.step > 0:
                raise InvalidKernelError("tabulated kernel needs step > 0")
            vals = vals.copy()
            vals.setflags(write=False)
            object.__setattr__(self, "values", vals)
            cum = np.concatenate(([0.0], np.cumsum(0.5 * self.step * (vals[1:] + vals[:-1]))))
            suffix_max = np.maximum.accumulate(vals[::-1])[::-1]
            object.__setattr__(self, "_cum", cum)
            object.__setattr__(self, "_suffix_max", suffix_max)

    @classmethod
    def zero(cls):
        return cls("zero", 0.0, 1.0)

    @classmethod
    def exponential(cls, alpha, beta):
        return cls("exponential", float(alpha), float(beta))

    @classmethod
    def erlang(cls, alpha, beta):
        return cls("erlang", float(alpha), float(beta))

    @classmethod
    def tabulated(cls, step, values):
        return cls("tabulated", step=float(step), values=np.asarray(values, dtype=float))

    @classmethod
    def tabulate(cls, kernel, step, horizon):
        """Tabulated copy of ``kernel`` on ``[0, horizon]``."""
        n = int(math.ceil(horizon / step)) + 1
        return cls.tabulated(step, kernel.value(np.arange(n) * step))

    # -- evaluation ---------------------------------------------------------

    @property
    def support(self):
        if self.family == "tabulated":
            return self.step * (self.values.size - 1)
        if self.family == "zero":
            return 0.0
        return math.inf

    def value(self, u):
        """phi(u), zero for u < 0."""
        u = np.asarray(u, dtype=float)
        pos = np.maximum(u, 0.0)
        if self.family == "zero":
            out = np.zeros_like(pos)
        elif self.family == "exponential":
            out = self.alpha * np.exp(-self.beta * pos)
        elif self.family == "erlang":
            out = self.alpha * pos * np.exp(-self.beta * pos)
        else:
            grid = np.arange(self.values.size) * self.step
            out = np.interp(pos, grid, self.values, right=0.0)
        return np.where(u < 0, 0.0, out)

    def integral(self, u):
        """Phi(u) = int_0^u phi(v) dv, zero for u <= 0."""
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        if self.family == "zero":
            return np.zeros_like(u)
        a, b = self.alpha, self.beta
        if self.family == "exponential":
            return (a / b) * -np.expm1(-b * u)
        if self.family == "erlang":
            return (a / b**2) * (1.0 - np.exp(-b * u) * (1.0 + b * u))
        h, vals, cum = self.step, self.values, self._cum
        last = vals.size - 1
        k = np.minimum((u / h).astype(np.int64), last)
        x = u - k * h
        f0 = vals[k]
        f1 = vals[np.minimum(k + 1, last)]
        inside = k < last
        partial = np.where(inside, f0 * x + (f1 - f0) * x * x / (2.0 * h), 0.0)
        return cum[k] + partial

    def tail_majorant(self, u):
        """Non-increasing bound on sup_{v >= u} phi(v)."""
        u = np.maximum(np.asarray(u, dtype=float), 0.0)
        if self.family == "zero":
            return np.zeros_like(u)
        if self.family == "exponential":
            return self.value(u)
        if self.family == "erlang":
            peak = 1.0 / self.beta
            return self.value(np.maximum(u, peak))
        k = (u / self.step).astype(np.int64)
        inside = k < self.values.size
        return np.where(inside, self._suffix_max[np.minimum(k, self.values.size - 1)], 0.0)

    # -- scalar summaries ---------------------------------------------------

    def l1(self):
        return kernel_l1(self)

    def first_moment(self):
        """int_0^inf u phi(u) du."""
        if self.family == "zero":
            return 0.0
        if self.family == "exponential":
            return self.alpha / self.beta**2
        if self.family == "erlang":
            return 2.0 * self.alpha / self.beta**3
        u = np.arange(self.values.size) * self.step
        return float(np.trapezoid(u * self.values, dx=self.step))

    def default_step(self):
        if self.family == "tabulated":
            return self.step
        return min(0.01, 1.0 / (10.0 * self.beta))

    def to_dict(self):
        if self.family == "zero":
            return {"family": "zero"}
        if self.family == "tabulated":
            return {"family": "tabulated", "step": self.step, "values": self.values.tolist()}
        return {"family": self.family, "alpha": self.alpha, "beta": self.beta}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        family = d.pop("family", None)
        allowed = {
            "zero": set(),
            "exponential": {"alpha", "beta"},
            "erlang": {"alpha", "beta"},
            "tabulated": {"step", "values"},
        }
        if family not in allowed:
            raise InvalidKernelError(f"unknown kernel family {family!r}")
        extra = set(d) - allowed[family]
        missing = allowed[family] - set(d)
        if extra:
            raise InvalidKernelError(f"unknown keys for {family} kernel: {sorted(extra)}")
        if missing:
            raise InvalidKernelError(f"missing keys for {family} kernel: {sorted(missing)}")
        if family == "zero":
            return cls.zero()
        if family == "tabulated":
            return cls.tabulated(d["step"], d["values"])
        return cls(family, float(d["alpha"]), float(d["beta"]))


def kernel_l1(kernel):
    """||phi||_1: closed form for parametric families, trapezoid for tabulated."""
    if kernel.family == "zero":
        return 0.0
    if kernel.family == "exponential":
        return kernel.alpha / kernel.beta
    if kernel.family == "erlang":
        return kernel.alpha / kernel.beta**2
    if np.any(kernel.values < 0):
        raise InvalidKernelError("tabulated kernel has negative entries")
    return float(kernel._cum[-1])


@dataclass(frozen=True)
class StabilityReport:
    ok: bool
    l1: float
    first_moment: float
    quantity: str = ""
    message: str = ""

    def __bool__(self):
        return self.ok


def stability_check(kernel):
    """Check ||phi||_1 < 1 and a finite first moment; never raises on violation."""
    l1 = kernel_l1(kernel)
    m1 = kernel.first_moment()
    if not l1 < 1.0:
        return StabilityReport(False, l1, m1, "l1_norm", f"||phi||_1 = {l1:g} >= 1")
    if not math.isfinite(m1):
        return StabilityReport(False, l1, m1, "first_moment", "first moment is infinite")
    return StabilityReport(True, l1, m1)


def require_stable(kernel):
    report = stability_check(kernel)
    if not report.ok:
        raise StabilityError(report.message, report.quantity,
                             report.l1 if report.quantity == "l1_norm" else report.first_moment)
    return report


@dataclass(frozen=True)
class PsiTable:
    """psi on the grid k * step, k = 0..n, plus convergence diagnostics."""

    step: float
    horizon: float
    values: np.ndarray = field(repr=False)
    residual: float
    l1_estimate: float
    tail_bound: float
    quadrature_error: float
    iterations: int
    tol: float

    @property
    def times(self):
        return np.arange(self.values.size) * self.step

    def cumulative(self):
        """int_0^{t_k} psi at each grid node (trapezoid)."""
        v = self.values
        return np.concatenate(([0.0], np.cumsum(0.5 * self.step * (v[1:] + v[:-1]))))

    def metadata(self):
        return {
            "step": self.step, "horizon": self.horizon, "residual": self.residual,
            "l1_estimate": self.l1_estimate, "tail_bound": self.tail_bound,
            "quadrature_error": self.quadrature_error, "iterations": self.iterations,
            "tol": self.tol, "discretization": "trapezoidal convolution, Picard iteration",
        }

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "psi"])
            for t, p in zip(self.times, self.values):
                w.writerow([f"{t:.10g}", f"{p:.17g}"])


def _trapezoid_convolution(f, g, h):
    """(f * g)(t_k) by the trapezoid rule on [0, t_k], for all k at once."""
    n = f.size
    full = fftconvolve(f, g)[:n]
    out = h * (full - 0.5 * (f * g[0] + f[0] * g))
    out[0] = 0.0
    return out


def _tail_bound(kernel, horizon, l1):
    if kernel.family == "zero":
        return 0.0
    if kernel.family == "exponential":
        a, b = kernel.alpha, kernel.beta
        return (a / (b - a)) * math.exp(-(b - a) * horizon)
    if kernel.family == "tabulated":
        supp = kernel.support
        if supp == 0.0:
            return 0.0
        return l1 ** math.ceil(horizon / supp) / (1.0 - l1)
    # erlang: Chernoff bound int_U^inf psi <= e^{-sU} L(s) / (1 - L(s)),
    # L(s) = alpha / (beta - s)^2 the exponential moment of phi, s < beta - sqrt(alpha)
    a, b = kernel.alpha, kernel.beta
    s_max = b - math.sqrt(a)
    best = math.inf
    for s in np.linspace(0.0, s_max, 202)[1:-1]:
        lap = a / (b - s) ** 2
        best = min(best, math.exp(-s * horizon) * lap / (1.0 - lap))
    return best


def solve_psi(kernel, step=None, horizon=20.0, tol=1e-8, max_iter=10_000, damping=1.0):
    """Solve psi = phi + phi * psi on a uniform grid by Picard iteration.

    Starting from psi = 0, the undamped iterates are the partial sums of
    the convolution series, increasing monotonically to the fixed point.

    Raises
    ------
    StabilityError
        If the kernel fails ``stability_check``.
    NumericalFailure
        If the renewal defect is still above ``tol`` after ``max_iter`` sweeps.
    """
    report = require_stable(kernel)
    h = kernel.default_step() if step is None else float(step)
    if not h > 0:
        raise ValueError("step must be positive")
    n = int(math.ceil(horizon / h - 1e-9))
    grid = np.arange(n + 1) * h
    phi = kernel.value(grid)
    psi = np.zeros_like(phi)
    residual = math.inf
    it = 0
    for it in range(max_iter + 1):
        update = phi + _trapezoid_convolution(phi, psi, h)
        residual = float(np.max(np.abs(update - psi)))
        if residual <= tol:
            break
        psi = psi + damping * (update - psi)
    else:
        raise NumericalFailure(
            f"renewal iteration did not converge in {max_iter} sweeps (residual {residual:.3g})",
            residual=residual)
    psi.setflags(write=False)
    l1 = report.l1
    l1_est = float(np.trapezoid(psi, dx=h)) if psi.size > 1 else 0.0
    phi_trap = float(np.trapezoid(phi, dx=h)) if phi.size > 1 else 0.0
    # discretized mass identity is l1_h / (1 - l1_h); quadrature error propagates by 1/(1 - l1)^2
    quad_err = abs(phi_trap - float(kernel.integral(grid[-1]))) / (1.0 - l1) ** 2
    quad_err += tol * grid[-1]
    return PsiTable(
        step=h, horizon=float(grid[-1]), values=psi, residual=residual,
        l1_estimate=l1_est, tail_bound=_tail_bound(kernel, grid[-1], l1),
        quadrature_error=quad_err, iterations=it, tol=tol)


def _check_horizon(psi, t):
    if t < 0 or t > psi.horizon + 1e-9 * max(1.0, psi.horizon):
        raise OutOfRangeError(f"t = {t} outside psi table horizon [0, {psi.horizon}]")


def mean_intensity(kernel, mu, psi, t):
    """E[lambda_t] = mu * (1 + int_0^t psi)."""
    _check_horizon(psi, t)
    if kernel.family == "zero":
        return float(mu)
    cum = psi.cumulative()
    return float(mu * (1.0 + np.interp(t, psi.times, cum)))


def mean_compensator(kernel, mu, psi, T):
    """int_0^T E[lambda_s] ds = mu * (T + int_0^T int_0^s psi)."""
    _check_horizon(psi, T)
    if kernel.family == "zero":
        return float(mu * T)
    cum = psi.cumulative()
    h = psi.step
    cum2 = np.concatenate(([0.0], np.cumsum(0.5 * h * (cum[1:] + cum[:-1]))))
    return float(mu * (T + np.interp(T, psi.times, cum2)))
