"""Asymptotic parameters of the compound Hawkes CLTs."""
from dataclasses import asdict, dataclass

from .errors import StabilityError
from .kernel import kernel_l1
from .marks import moments


def _check(l1):
    if not 0.0 <= l1 < 1.0:
        raise StabilityError(f"need 0 <= ||phi||_1 < 1, got {l1}", "l1_norm", l1)


def gamma2(mu, l1, theta2):
    """Limit variance of the compensated functional: mu * theta2 / (1 - l1)."""
    _check(l1)
    return mu * theta2 / (1.0 - l1)


def sigma2(mu, l1):
    """Counting-process variance mu / (1 - l1); gamma2 with unit second moment."""
    return gamma2(mu, l1, 1.0)


def zeta2(mu, l1, theta2, m):
    """Limit variance of (S_T - varpi T) / sqrt(T)."""
    _check(l1)
    if theta2 < m * m - 1e-12:
        raise ValueError(f"second moment {theta2} is below squared mean {m * m}")
    return mu * (theta2 + l1 * (theta2 - m * m) * (l1 - 2.0)) / (1.0 - l1) ** 3


def varpi(mu, m, l1):
    """Asymptotic drift of S_T / T."""
    _check(l1)
    return mu * m / (1.0 - l1)


def offspring_bound(l1, psi_l1):
    """Bound ||phi||_1 (1 + ||psi||_1) on the expected integrated intensity surplus."""
    if l1 < 0 or psi_l1 < 0:
        raise ValueError("inputs must be non-negative")
    return l1 * (1.0 + psi_l1)


@dataclass(frozen=True)
class AsymptoticParams:
    mu: float
    l1: float
    m: float
    theta2: float
    gamma2: float
    zeta2: float
    sigma2: float
    varpi: float

    @classmethod
    def from_model(cls, mu, kernel, marks):
        l1 = kernel_l1(kernel)
        m, th2, _, _ = moments(marks)
        return cls(mu=float(mu), l1=l1, m=m, theta2=th2,
                   gamma2=gamma2(mu, l1, th2), zeta2=zeta2(mu, l1, th2, m),
                   sigma2=sigma2(mu, l1), varpi=varpi(mu, m, l1))

    def target_variance(self, tag):
        return self.zeta2 if tag in ("Gamma", "V") else self.gamma2

    def to_dict(self):
        return asdict(self)
