"""Normalized functionals, distances to the Gaussian limit, cumulants, rate fits."""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps
from scipy.special import ndtr, ndtri

from .errors import ConfigError, ContractError, NumericalFailure

TAGS = ("F", "Gamma", "V", "S")

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class Sample:
    T: float
    values: np.ndarray = field(repr=False)
    tag: str = "F"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 2:
            raise ContractError("a sample needs at least two values")
        if not np.all(np.isfinite(v)):
            raise ContractError("sample contains non-finite values")
        if self.tag not in TAGS:
            raise ContractError(f"unknown functional tag {self.tag!r}")
        object.__setattr__(self, "values", v)

    @property
    def M(self):
        return self.values.size


def normalize_values(S, compensator, tag, params, T, mean_comp=None):
    """Vectorized normalization of S_T into F_T, Gamma_T, V_T or S_T / sqrt(T)."""
    S = np.asarray(S, dtype=float)
    rt = math.sqrt(T)
    if tag == "F":
        if compensator is None:
            raise ContractError("F_T needs the pathwise compensator")
        return (S - params.m * np.asarray(compensator, dtype=float)) / rt
    if tag == "Gamma":
        return (S - params.varpi * T) / rt
    if tag == "V":
        if mean_comp is None:
            raise ContractError("V_T needs int_0^T E[lambda_s] ds")
        return (S - params.m * mean_comp) / rt
    if tag == "S":
        return S / rt
    raise ContractError(f"unknown functional tag {tag!r}")


def normalize(path, tag, params, T, mean_comp=None):
    """Normalized functional of one ``PathResult``."""
    comp = getattr(path, "compensator", None)
    return float(normalize_values(path.S, comp, tag, params, T, mean_comp))


# -- Wasserstein-1 to N(0, s^2) -------------------------------------------------

def _G(x, s):
    """Antiderivative of Phi(x/s) vanishing at -inf."""
    z = x / s
    return x * ndtr(z) + s * np.exp(-0.5 * z * z) / _SQRT_2PI


def _Gc(x, s):
    """int_x^inf (1 - Phi(v/s)) dv."""
    z = x / s
    return s * np.exp(-0.5 * z * z) / _SQRT_2PI - x * ndtr(-z)


def _int_cdf(a, b, s):
    """int_a^b Phi(x/s) dx for a <= b, using the tail-stable antiderivative on each side of 0."""
    neg_hi = np.minimum(b, 0.0)
    neg = np.where(a < 0.0, _G(np.minimum(neg_hi, 0.0), s) - _G(np.minimum(a, 0.0), s), 0.0)
    pos_lo = np.maximum(a, 0.0)
    pos = np.where(b > 0.0, (b - pos_lo) - (_Gc(pos_lo, s) - _Gc(np.maximum(b, 0.0), s)), 0.0)
    return neg + pos


def w1_to_normal_exact(values, variance):
    """int |F_M(x) - Phi(x / s)| dx computed piecewise between order statistics."""
    s = math.sqrt(variance)
    x = np.sort(np.asarray(values, dtype=float))
    M = x.size
    a, b = x[:-1], x[1:]
    c = np.arange(1, M) / M
    cross = np.clip(s * ndtri(c), a, b)
    below = c * (cross - a) - _int_cdf(a, cross, s)
    above = _int_cdf(cross, b, s) - c * (b - cross)
    interior = float(np.sum(below + above))
    return interior + float(_G(x[0], s)) + float(_Gc(x[-1], s))


@dataclass
class DistanceEstimate:
    raw: float
    offset: float
    debiased: float
    se: float
    M: int
    target_variance: float
    kind: str = "wasserstein"
    advisory: str = ""
    null_values: np.ndarray = field(default=None, repr=False)
    details: dict = field(default_factory=dict, repr=False)

    @property
    def reported(self):
        return max(self.debiased, 0.0)


def _null_summary(null, raw, M, variance, kind, advisory="", details=None):
    null = np.asarray(null, dtype=float)
    offset = float(null.mean())
    K = null.size
    se = float(null.std(ddof=1) * math.sqrt(1.0 + 1.0 / K)) if K > 1 else math.nan
    return DistanceEstimate(raw=raw, offset=offset, debiased=raw - offset, se=se, M=M,
                            target_variance=variance, kind=kind, advisory=advisory,
                            null_values=null, details=details or {})


def wasserstein1_to_normal(sample, gamma2, replicates=64, rng=None):
    """Exact empirical W1 to N(0, gamma2), debiased by the mean W1 of
    ``replicates`` Gaussian samples of the same size."""
    if not gamma2 > 0:
        raise ContractError("target variance must be positive")
    values = sample.values if isinstance(sample, Sample) else np.asarray(sample, float)
    M = values.size
    advisory = "M < 100: estimate floor dominates" if M < 100 else ""
    rng = np.random.default_rng(0) if rng is None else rng
    raw = w1_to_normal_exact(values, gamma2)
    sd = math.sqrt(gamma2)
    null = [w1_to_normal_exact(rng.normal(0.0, sd, M), gamma2) for _ in range(replicates)]
    return _null_summary(null, raw, M, gamma2, "wasserstein", advisory)


# -- smooth-class surrogate ---------------------------------------------------

@dataclass(frozen=True)
class SinusoidDictionary:
    """Test functions h(x) = scale * sin(omega x + phase)."""

    omegas: tuple
    phases: tuple
    scales: tuple

    @classmethod
    def default(cls):
        omegas, phases, scales = [], [], []
        for k in range(-3, 3):
            w = 2.0 ** k
            for ph in (0.0, math.pi / 2):
                omegas.append(w)
                phases.append(ph)
                scales.append(min(1.0, w ** -4))
        return cls(tuple(omegas), tuple(phases), tuple(scales))

    def certify(self):
        """Every h must satisfy max_{1<=i<=4} ||h^{(i)}||_inf <= 1."""
        for w, c in zip(self.omegas, self.scales):
            worst = max(c * w**i for i in range(1, 5))
            if worst > 1.0 + 1e-12:
                raise ConfigError(
                    f"dictionary element omega={w}, scale={c} has derivative sup {worst:g} > 1")
        return self

    def __len__(self):
        return len(self.omegas)

    def evaluate_means(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([c * np.mean(np.sin(w * x + ph))
                         for w, ph, c in zip(self.omegas, self.phases, self.scales)])

    def gaussian_means(self, variance):
        return np.array([c * math.sin(ph) * math.exp(-0.5 * variance * w * w)
                         for w, ph, c in zip(self.omegas, self.phases, self.scales)])


def smooth_distance_surrogate(sample, gamma2, dictionary=None, replicates=64, rng=None):
    """max_h |mean h(sample) - E h(N(0, gamma2))| over a certified dictionary.

    A lower bound for the smooth (four-derivative) distance, debiased like
    ``wasserstein1_to_normal``.
    """
    d = (dictionary or SinusoidDictionary.default()).certify()
    values = sample.values if isinstance(sample, Sample) else np.asarray(sample, float)
    M = values.size
    target = d.gaussian_means(gamma2)
    gaps = d.evaluate_means(values) - target
    raw = float(np.max(np.abs(gaps)))
    rng = np.random.default_rng(0) if rng is None else rng
    sd = math.sqrt(gamma2)
    null = [float(np.max(np.abs(d.evaluate_means(rng.normal(0.0, sd, M)) - target)))
            for _ in range(replicates)]
    return _null_summary(null, raw, M, gamma2, "smooth-surrogate",
                         details={"gaps": gaps.tolist(), "argmax": int(np.argmax(np.abs(gaps)))})


def smooth_distance_surrogate_given_counts(counts, T, marks, gamma2, dictionary=None,
                                           replicates=64, rng=None):
    """Surrogate for S_T / sqrt(T) with the marks integrated out exactly.

    Given H_T = n, E[exp(i w S_T / sqrt(T)) | n] = cf(w / sqrt(T))^n, so each
    dictionary mean is estimated from conditional expectations instead of
    raw draws.  The debias offset is the mean of max_h |se_h Z_h| over
    ``replicates`` standard normal vectors Z.
    """
    d = (dictionary or SinusoidDictionary.default()).certify()
    n = np.asarray(counts, dtype=float)
    M = n.size
    target = d.gaussian_means(gamma2)
    means = np.empty(len(d))
    ses = np.empty(len(d))
    rt = math.sqrt(T)
    for j, (w, ph, c) in enumerate(zip(d.omegas, d.phases, d.scales)):
        cf = complex(marks.characteristic(np.array([w / rt]))[0])
        r, arg = abs(cf), math.atan2(cf.imag, cf.real)
        cond = c * np.power(r, n) * np.sin(ph + n * arg)
        means[j] = cond.mean()
        ses[j] = cond.std(ddof=1) / math.sqrt(M)
    gaps = means - target
    raw = float(np.max(np.abs(gaps)))
    rng = np.random.default_rng(0) if rng is None else rng
    null = [float(np.max(np.abs(ses * rng.standard_normal(len(d))))) for _ in range(replicates)]
    return _null_summary(null, raw, M, gamma2, "smooth-surrogate",
                         details={"gaps": gaps.tolist(), "se": ses.tolist(),
                                  "argmax": int(np.argmax(np.abs(gaps))),
                                  "estimator": "mark-integrated"})


# -- cumulants ----------------------------------------------------------------

def k_statistics(x):
    """Unbiased k-statistics k1..k4."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        raise ContractError("k-statistics up to order 4 need at least 4 values")
    mean = x.mean()
    dev = x - mean
    m2 = np.mean(dev**2)
    m3 = np.mean(dev**3)
    m4 = np.mean(dev**4)
    k2 = n * m2 / (n - 1)
    k3 = n * n * m3 / ((n - 1) * (n - 2))
    k4 = n * n * ((n + 1) * m4 - 3 * (n - 1) * m2 * m2) / ((n - 1) * (n - 2) * (n - 3))
    return np.array([mean, k2, k3, k4])


@dataclass
class CumulantEstimates:
    k1: float
    k2: float
    k3: float
    k4: float
    se: tuple

    def as_array(self):
        return np.array([self.k1, self.k2, self.k3, self.k4])


def k_cumulants(sample, n_boot=200, rng=None):
    values = sample.values if isinstance(sample, Sample) else np.asarray(sample, float)
    if values.size < 10:
        raise ContractError("need at least 10 values for cumulant estimates")
    k = k_statistics(values)
    rng = np.random.default_rng(0) if rng is None else rng
    n = values.size
    boot = np.array([k_statistics(values[rng.integers(0, n, n)]) for _ in range(n_boot)])
    se = tuple(float(s) for s in boot.std(axis=0, ddof=1))
    return CumulantEstimates(*(float(v) for v in k), se=se)


# -- rate fits ------------------------------------------------------------------

@dataclass
class RateFit:
    horizons: list
    distances: list
    slope: float
    intercept: float
    slope_se: float
    r2: float
    dropped: list = field(default_factory=list)

    def to_dict(self):
        return {"horizons": list(self.horizons), "distances": list(self.distances),
                "slope": self.slope, "intercept": self.intercept,
                "slope_se": self.slope_se, "r2": self.r2, "dropped": list(self.dropped)}


def fit_rate(points):
    """Least squares of log d on log T; non-positive distances are dropped."""
    kept, dropped = [], []
    for T, d in points:
        if d > 0 and math.isfinite(d):
            kept.append((float(T), float(d)))
        else:
            dropped.append(float(T))
    if dropped:
        warnings.warn(f"dropping non-positive distances at T = {dropped}", stacklevel=2)
    if len(kept) < 3:
        raise NumericalFailure(f"rate fit needs >= 3 positive distances, got {len(kept)}")
    T = np.array([p[0] for p in kept])
    d = np.array([p[1] for p in kept])
    res = sps.linregress(np.log(T), np.log(d))
    r2 = float(res.rvalue**2) if np.ptp(np.log(d)) > 0 else 1.0
    return RateFit(T.tolist(), d.tolist(), float(res.slope), float(res.intercept),
                   float(res.stderr), r2, dropped)
