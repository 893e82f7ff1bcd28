import math
from dataclasses import dataclass, field, fields
from typing import List, Optional

from psgheat.errors import ConfigurationError
from psgheat.models.mesh import GridFunction


class StepSizeRule:
    """Exogenous step size policy tau_n, n >= 1.

    `decay_exponent` is p in tau_n ~ n^-p (0 for non-decaying rules); it drives
    the bias summability check.
    """

    kind = None
    decay_exponent = 0.0
    robbins_monro_satisfied = False

    def tau(self, n):
        raise NotImplementedError

    def _check_positive(self, **params):
        issues = [f"{name} must be strictly positive, got {value}" for name, value in params.items()
                  if not value > 0]
        if issues:
            raise ConfigurationError(f"invalid {self.kind} step size rule", issues=issues)

    def to_dict(self):
        names = {v: k for k, v in _ALIASES.items()}
        data = {'kind': self.kind}
        data.update({names.get(f.name, f.name): getattr(self, f.name) for f in fields(self)})
        return data

    @staticmethod
    def from_dict(data):
        data = {_ALIASES.get(k, k): v for k, v in dict(data).items()}
        kind = data.pop('kind', None)
        rule_cls = STEP_RULES.get(kind)
        if rule_cls is None:
            raise ConfigurationError(f"unknown step rule kind: {kind}",
                                     issues=[f"kind must be one of {sorted(STEP_RULES)}"])
        allowed = {f.name for f in fields(rule_cls)}
        unknown = sorted(set(data) - allowed)
        if unknown:
            raise ConfigurationError(f"unknown keys for {kind} rule: {unknown}", issues=unknown)
        try:
            return rule_cls(**{k: float(v) if k != 'N' else int(v) for k, v in data.items()})
        except TypeError as e:
            raise ConfigurationError(f"incomplete {kind} rule: {e}")


@dataclass(frozen=True)
class Constant(StepSizeRule):
    tau_value: float

    kind = 'constant'

    def __post_init__(self):
        self._check_positive(tau=self.tau_value)

    def tau(self, n):
        return self.tau_value


@dataclass(frozen=True)
class PolyDecay(StepSizeRule):
    """tau_n = theta / (n + nu)"""

    theta: float
    nu: float = 0.0

    kind = 'poly_decay'
    decay_exponent = 1.0
    robbins_monro_satisfied = True

    def __post_init__(self):
        self._check_positive(theta=self.theta)
        if not self.nu > -1:
            raise ConfigurationError(f"nu must exceed -1 so that n + nu > 0, got {self.nu}")

    def tau(self, n):
        return self.theta / (n + self.nu)


@dataclass(frozen=True)
class SqrtDecay(StepSizeRule):
    """tau_n = theta * D / (sqrt(M) * sqrt(n))"""

    theta: float
    diameter: float
    sqrt_M: float

    kind = 'sqrt_decay'
    decay_exponent = 0.5

    def __post_init__(self):
        self._check_positive(theta=self.theta, diameter=self.diameter, sqrt_M=self.sqrt_M)

    def tau(self, n):
        return self.theta * self.diameter / (self.sqrt_M * n ** 0.5)


@dataclass(frozen=True)
class FixedHorizonConstant(StepSizeRule):
    """tau_n = D / (sqrt(M) * sqrt(N)) for a run of exactly N steps"""

    diameter: float
    sqrt_M: float
    N: int

    kind = 'fixed_horizon_constant'

    def __post_init__(self):
        self._check_positive(diameter=self.diameter, sqrt_M=self.sqrt_M, N=self.N)

    def tau(self, n):
        return self.diameter / (self.sqrt_M * math.sqrt(self.N))


@dataclass(frozen=True)
class PowerDecay(StepSizeRule):
    """tau_n = theta / n^gamma with 1/2 < gamma < 1"""

    theta: float
    gamma: float

    kind = 'power_decay'
    robbins_monro_satisfied = True

    def __post_init__(self):
        self._check_positive(theta=self.theta)
        if not 0.5 < self.gamma < 1.0:
            raise ConfigurationError(f"gamma must lie in (0.5, 1), got {self.gamma}")

    @property
    def decay_exponent(self):
        return self.gamma

    def tau(self, n):
        return self.theta / n ** self.gamma


STEP_RULES = {
    rule.kind: rule for rule in (Constant, PolyDecay, SqrtDecay, FixedHorizonConstant, PowerDecay)
}

# JSON key -> field name
_ALIASES = {'tau': 'tau_value', 'D': 'diameter'}


@dataclass(frozen=True)
class BiasSpec:
    """Deterministic bias r_n with ||r_n|| = K_n = magnitude * n^-decay"""

    magnitude: float
    decay: float = 0.0
    direction: str = 'fixed'  # fixed | alternating

    def __post_init__(self):
        issues = []
        if self.magnitude < 0:
            issues.append(f"bias magnitude must be nonnegative, got {self.magnitude}")
        if self.direction not in ('fixed', 'alternating'):
            issues.append(f"bias direction must be 'fixed' or 'alternating', got {self.direction}")
        if issues:
            raise ConfigurationError("invalid bias spec", issues=issues)

    def K(self, n):
        return self.magnitude * n ** (-self.decay)

    def sign(self, n):
        return 1.0 if self.direction == 'fixed' or n % 2 == 1 else -1.0

    @classmethod
    def from_dict(cls, data):
        unknown = sorted(set(data) - {'magnitude', 'decay', 'direction'})
        if unknown:
            raise ConfigurationError(f"unknown bias keys: {unknown}", issues=unknown)
        return cls(float(data.get('magnitude', 0.0)), float(data.get('decay', 0.0)),
                   data.get('direction', 'fixed'))

    def to_dict(self):
        return {'magnitude': self.magnitude, 'decay': self.decay, 'direction': self.direction}


@dataclass(frozen=True)
class PsgConfig:
    max_iterations: int
    step_rule: StepSizeRule
    master_seed: int = 0
    averaging_start: Optional[int] = None
    initial_control: str = 'zero'
    telemetry_cadence: int = 1
    objective_samples: int = 100

    def __post_init__(self):
        issues = []
        if self.max_iterations < 1:
            issues.append(f"N must be at least 1, got {self.max_iterations}")
        if self.averaging_start is not None and not 1 <= self.averaging_start <= self.max_iterations:
            issues.append(f"averaging start i must lie in [1, N], got {self.averaging_start}")
        if self.objective_samples < 1:
            issues.append(f"m must be at least 1, got {self.objective_samples}")
        if self.telemetry_cadence < 1:
            issues.append(f"telemetry cadence must be at least 1, got {self.telemetry_cadence}")
        if self.master_seed < 0:
            issues.append(f"master seed must be nonnegative, got {self.master_seed}")
        if issues:
            raise ConfigurationError("invalid PSG config", issues=issues)

    def to_dict(self):
        return {
            'N': self.max_iterations,
            'step_rule': self.step_rule.to_dict(),
            'master_seed': self.master_seed,
            'averaging_start': self.averaging_start,
            'initial_control': self.initial_control,
            'telemetry_cadence': self.telemetry_cadence,
            'm': self.objective_samples,
        }


@dataclass
class RunRecord:
    """Per-iteration telemetry plus the final and averaged iterates"""

    rows: List[dict] = field(default_factory=list)
    final: Optional[GridFunction] = None
    averaged: Optional[GridFunction] = None
    config: Optional[PsgConfig] = None
    envelope: Optional[object] = None  # predicted iterate-error curve, when one applies

    def __repr__(self):
        return f"<RunRecord rows={len(self.rows)}>"

    def column(self, name):
        return [row.get(name) for row in self.rows]

    def to_dict(self):
        return {
            'rows': self.rows,
            'config': self.config.to_dict() if self.config else None,
            'final': self.final.values.tolist() if self.final is not None else None,
            'averaged': self.averaged.values.tolist() if self.averaged is not None else None,
        }
