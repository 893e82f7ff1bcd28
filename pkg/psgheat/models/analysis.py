from dataclasses import asdict, dataclass
from typing import Optional

from psgheat.errors import ConfigurationError


@dataclass(frozen=True)
class RecursionParams:
    """Constants of e_{n+1} <= e_n(1 - c1/(n+nu) + c2/(n+nu)^2) + c3/(n+nu)^2.

    K and nu are chosen so that e_1 = K/(1+nu) holds with equality.
    """

    c1: float
    c2: float
    c3: float
    e1: float
    K: float
    nu: float

    def bound(self, n):
        return self.K / (n + self.nu)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class EfficiencyParams:
    mu: float
    theta: float
    M1: float
    M2: float
    L: Optional[float] = None
    u_bar_norm_bound: float = 0.0
    initial_error: Optional[float] = None  # e_1 = ||u_1 - u_bar||^2

    def __post_init__(self):
        issues = []
        if not self.mu > 0:
            issues.append(f"mu must be positive, got {self.mu}")
        if not self.theta > 0:
            issues.append(f"theta must be positive, got {self.theta}")
        if self.M1 < 0 or self.M2 < 0:
            issues.append("growth constants M1, M2 must be nonnegative")
        if issues:
            raise ConfigurationError("invalid efficiency parameters", issues=issues)

    @property
    def c1(self):
        return 2.0 * self.mu * self.theta

    @property
    def c2(self):
        return 2.0 * self.theta ** 2 * self.M2

    @property
    def c3(self):
        return self.theta ** 2 * (self.M1 + 2.0 * self.M2 * self.u_bar_norm_bound ** 2)

    def to_dict(self):
        data = asdict(self)
        data.update({'c1': self.c1, 'c2': self.c2, 'c3': self.c3})
        return data


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log n, log error)"""

    slope: float
    intercept: float
    r_squared: float
    n_lo: int
    n_hi: int
    points: int

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ModelConstants:
    poincare: float
    C1: float
    C2: float
    a_min: float
    diameter: float

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class GrowthConstants:
    """||G(u)|| <= A + B||u||, hence E||G||^2 <= M1 + M2||u||^2"""

    A: float
    B: float
    M1: float
    M2: float
    L: float

    def to_dict(self):
        return asdict(self)
