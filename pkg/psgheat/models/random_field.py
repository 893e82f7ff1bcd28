from dataclasses import dataclass

from psgheat.errors import ConfigurationError


@dataclass(frozen=True)
class TruncatedNormalSpec:
    """Normal(mean, std_dev) conditioned on (lower, upper)"""

    mean: float = 2.0
    std_dev: float = 0.25
    lower: float = 0.5
    upper: float = 3.5

    def __post_init__(self):
        issues = self.validate()
        if issues:
            raise ConfigurationError("invalid truncated normal spec", issues=issues)

    def validate(self):
        issues = []
        if not self.std_dev > 0:
            issues.append(f"std must be positive, got {self.std_dev}")
        if not self.lower > 0:
            issues.append(f"lower bound must be positive (conductivity), got {self.lower}")
        if not self.lower < self.mean < self.upper:
            issues.append(f"mean {self.mean} must lie strictly inside ({self.lower}, {self.upper})")
        return issues

    @classmethod
    def from_dict(cls, data):
        return cls(
            mean=float(data.get('mean', 2.0)),
            std_dev=float(data.get('std', 0.25)),
            lower=float(data.get('lower', 0.5)),
            upper=float(data.get('upper', 3.5)),
        )

    def to_dict(self):
        return {'mean': self.mean, 'std': self.std_dev, 'lower': self.lower, 'upper': self.upper}


@dataclass(frozen=True)
class SampleDraw:
    """Realized conductivity a(omega_n) for counter n (or (n, k))"""

    master_seed: int
    counter: tuple
    value: float

    def to_dict(self):
        return {'master_seed': self.master_seed, 'counter': list(self.counter), 'value': self.value}
