"""Jump-mark laws for the compound process S_t = sum_{i <= H_t} X_i."""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidMarksError

_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class MarkDistribution:
    """One of: dirac(c), rademacher, centered_normal(variance), two_point(p, a, b)
    with P(X = a) = p, or a finite discrete table."""

    family: str
    params: tuple = ()
    values: np.ndarray = field(default=None, compare=False, repr=False)
    probabilities: np.ndarray = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.family == "discrete":
            v = np.asarray(self.values, dtype=float)
            p = np.asarray(self.probabilities, dtype=float)
            if v.ndim != 1 or v.shape != p.shape or v.size == 0:
                raise InvalidMarksError("discrete marks need equal-length values and probabilities")
            if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
                raise InvalidMarksError(f"probabilities must be >= 0 and sum to 1 (sum={p.sum()!r})")
            object.__setattr__(self, "values", v)
            object.__setattr__(self, "probabilities", p)
        elif self.family == "two_point":
            p, a, b = self.params
            if not 0.0 <= p <= 1.0:
                raise InvalidMarksError(f"two-point probability must lie in [0, 1], got {p}")
        elif self.family == "centered_normal":
            if not self.params[0] > 0:
                raise InvalidMarksError("centered-normal variance must be positive")
        elif self.family not in ("dirac", "rademacher"):
            raise InvalidMarksError(f"unknown mark family {self.family!r}")

    @classmethod
    def dirac(cls, c=1.0):
        return cls("dirac", (float(c),))

    @classmethod
    def rademacher(cls):
        return cls("rademacher")

    @classmethod
    def centered_normal(cls, variance):
        return cls("centered_normal", (float(variance),))

    @classmethod
    def two_point(cls, p, a, b):
        return cls("two_point", (float(p), float(a), float(b)))

    @classmethod
    def discrete(cls, values, probabilities):
        return cls("discrete", (), np.asarray(values, float), np.asarray(probabilities, float))

    def _atoms(self):
        """Support points and weights for the lattice families."""
        if self.family == "dirac":
            return np.array([self.params[0]]), np.array([1.0])
        if self.family == "rademacher":
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        if self.family == "two_point":
            p, a, b = self.params
            return np.array([a, b]), np.array([p, 1.0 - p])
        if self.family == "discrete":
            return self.values, self.probabilities
        return None

    def moments(self):
        return moments(self)

    def sample(self, rng, n):
        return sample_marks(self, rng, n)

    def characteristic(self, u):
        """E[exp(i u X)] for real ``u`` (array-valued)."""
        u = np.asarray(u, dtype=float)
        if self.family == "centered_normal":
            return np.exp(-0.5 * self.params[0] * u**2).astype(complex)
        if self.family == "rademacher":
            return np.cos(u).astype(complex)
        x, w = self._atoms()
        return np.exp(1j * np.multiply.outer(u, x)) @ w

    def to_dict(self):
        f = self.family
        if f == "dirac":
            return {"family": f, "c": self.params[0]}
        if f == "rademacher":
            return {"family": f}
        if f == "centered_normal":
            return {"family": f, "variance": self.params[0]}
        if f == "two_point":
            p, a, b = self.params
            return {"family": f, "p": p, "a": a, "b": b}
        return {"family": f, "values": self.values.tolist(),
                "probabilities": self.probabilities.tolist()}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        family = d.pop("family", None)
        keys = {
            "dirac": ("c",), "rademacher": (), "centered_normal": ("variance",),
            "two_point": ("p", "a", "b"), "discrete": ("values", "probabilities"),
        }
        if family not in keys:
            raise InvalidMarksError(f"unknown mark family {family!r}")
        if set(d) != set(keys[family]):
            raise InvalidMarksError(
                f"{family} marks take keys {list(keys[family])}, got {sorted(d)}")
        if family == "discrete":
            return cls.discrete(d["values"], d["probabilities"])
        return cls(family, tuple(float(d[k]) for k in keys[family]))


def moments(dist):
    """Return (E X, E X^2, E X^3, E X^4) in closed form."""
    if dist.family == "centered_normal":
        s2 = dist.params[0]
        return 0.0, s2, 0.0, 3.0 * s2 * s2
    if dist.family == "rademacher":
        return 0.0, 1.0, 0.0, 1.0
    x, w = dist._atoms()
    return tuple(float(np.dot(w, x**k)) for k in (1, 2, 3, 4))


@dataclass(frozen=True)
class HypothesisCheck:
    ok: bool
    mean: float
    third_moment: float
    message: str = ""

    def __bool__(self):
        return self.ok


def check_fast_rate_hypothesis(dist):
    """E X = E X^3 = 0, tested on the closed-form moments."""
    m, _, m3, m4 = moments(dist)
    bad = []
    if abs(m) > _ZERO_TOL:
        bad.append(f"E[X] = {m:g}")
    if abs(m3) > _ZERO_TOL:
        bad.append(f"E[X^3] = {m3:g}")
    if not math.isfinite(m4):
        bad.append("E[X^4] is infinite")
    return HypothesisCheck(not bad, m, m3, "; ".join(bad))


def sample_marks(dist, rng, n):
    """n i.i.d. draws from ``dist`` using the caller's generator."""
    n = int(n)
    if n < 0:
        raise ValueError("n must be >= 0")
    f = dist.family
    if f == "dirac":
        return np.full(n, dist.params[0])
    if f == "rademacher":
        return 2.0 * rng.integers(0, 2, size=n) - 1.0
    if f == "centered_normal":
        return rng.normal(0.0, math.sqrt(dist.params[0]), size=n)
    if f == "two_point":
        p, a, b = dist.params
        return np.where(rng.random(n) < p, a, b)
    idx = np.searchsorted(np.cumsum(dist.probabilities), rng.random(n), side="right")
    return dist.values[np.minimum(idx, dist.values.size - 1)]
