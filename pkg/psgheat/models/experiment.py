from dataclasses import dataclass, field, replace
from typing import List, Optional

from psgheat.errors import ConfigurationError
from psgheat.models.psg import BiasSpec, FixedHorizonConstant, PolyDecay, SqrtDecay, StepSizeRule
from psgheat.models.random_field import TruncatedNormalSpec

EXPERIMENT_KINDS = ('strongly_convex', 'convex', 'fem_mms', 'lemma_oracle')
REFERENCE_KINDS = ('expected', 'analytic', 'long_run')
OBJECTIVE_ERROR_MODES = ('expected', 'sampled')

ALLOWED_KEYS = {
    'kind', 'n_div', 'N', 'iterations', 'step_rule', 'field', 'seed', 'master_seed', 'm',
    'objective_samples', 'averaging_start', 'output_dir', 'bias', 'seeds', 'replicate_seeds',
    'compare_unbiased', 'telemetry_cadence', 'initial_control', 'reference', 'objective_error',
    'lambda', 'a_bar', 'box', 'levels', 'trials', 'horizon', 'nu_constants', 'fixed_conductivity',
    'rate_window',
}
FIELD_KEYS = {'mean', 'std', 'lower', 'upper', 'master_seed'}
REFERENCE_KEYS = {'kind', 'iterations', 'refine'}


def _default_step_rule(kind):
    if kind == 'convex':
        return SqrtDecay(theta=500.0, diameter=1.0, sqrt_M=3.9)
    return PolyDecay(theta=1.0 / 3.0, nu=0.0)


@dataclass(frozen=True)
class ReferenceSpec:
    kind: str = 'expected'
    iterations: int = 10000
    refine: int = 2

    def to_dict(self):
        return {'kind': self.kind, 'iterations': self.iterations, 'refine': self.refine}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated JSON experiment config"""

    kind: str
    n_div: int = 32
    iterations: int = 1000
    step_rule: Optional[StepSizeRule] = None
    field_spec: TruncatedNormalSpec = field(default_factory=TruncatedNormalSpec)
    master_seed: int = 0
    objective_samples: int = 100
    averaging_start: Optional[int] = None
    output_dir: Optional[str] = None
    bias: Optional[BiasSpec] = None
    seeds: Optional[int] = None
    replicate_seeds: Optional[List[int]] = None
    compare_unbiased: bool = False
    telemetry_cadence: int = 10
    initial_control: Optional[str] = None
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    objective_error: str = 'sampled'
    lam: Optional[float] = None
    a_bar: float = 2.0
    box: tuple = (-1.0, 1.0)
    levels: tuple = (8, 16, 32, 64)
    trials: int = 100
    horizon: int = 100000
    nu_constants: Optional[dict] = None
    fixed_conductivity: bool = False
    rate_window: Optional[tuple] = None

    @property
    def lambda_value(self):
        if self.lam is not None:
            return self.lam
        return 2.0 if self.kind == 'strongly_convex' else 0.0

    @property
    def start_control(self):
        if self.initial_control is not None:
            return self.initial_control
        return 'sine_bump' if self.kind == 'strongly_convex' else 'zero'

    @property
    def averaging(self):
        return self.averaging_start is not None

    def with_seed(self, seed):
        return replace(self, master_seed=int(seed))

    def without_bias(self):
        return replace(self, bias=None)

    @classmethod
    def from_dict(cls, data, defaults=None):
        """Build from parsed JSON; unknown keys and bad values raise ConfigurationError"""
        if not isinstance(data, dict):
            raise ConfigurationError("experiment config must be a JSON object")
        defaults = defaults or {}
        issues = []

        unknown = sorted(set(data) - ALLOWED_KEYS)
        if unknown:
            issues.append(f"unknown keys: {unknown}")
        kind = data.get('kind')
        if kind not in EXPERIMENT_KINDS:
            issues.append(f"kind must be one of {list(EXPERIMENT_KINDS)}, got {kind!r}")
        if issues:
            raise ConfigurationError("invalid experiment config", issues=issues)

        field_data = dict(data.get('field') or {})
        unknown_field = sorted(set(field_data) - FIELD_KEYS)
        if unknown_field:
            raise ConfigurationError("invalid field spec", issues=[f"unknown keys: {unknown_field}"])
        seed = data.get('seed', data.get('master_seed', field_data.pop('master_seed', 0)))
        field_data.pop('master_seed', None)

        reference_data = dict(data.get('reference') or {})
        unknown_ref = sorted(set(reference_data) - REFERENCE_KEYS)
        if unknown_ref:
            raise ConfigurationError("invalid reference", issues=[f"unknown keys: {unknown_ref}"])
        reference = ReferenceSpec(
            kind=reference_data.get('kind', 'expected'),
            iterations=int(reference_data.get('iterations', 10000)),
            refine=int(reference_data.get('refine', 2)),
        )
        if reference.kind not in REFERENCE_KINDS:
            issues.append(f"reference.kind must be one of {list(REFERENCE_KINDS)}")
        if reference.refine < 1 or reference.iterations < 1:
            issues.append("reference.refine and reference.iterations must be at least 1")

        objective_error = data.get('objective_error', 'sampled')
        if objective_error not in OBJECTIVE_ERROR_MODES:
            issues.append(f"objective_error must be one of {list(OBJECTIVE_ERROR_MODES)}")

        box = tuple(float(v) for v in data.get('box', (-1.0, 1.0)))
        if len(box) != 2 or box[0] > box[1]:
            issues.append(f"box must be [lower, upper] with lower <= upper, got {list(box)}")

        levels = tuple(int(v) for v in data.get('levels', (8, 16, 32, 64)))
        if len(levels) < 2 or any(v < 1 for v in levels):
            issues.append("levels must list at least two positive n_div values")

        replicate_seeds = data.get('replicate_seeds')
        if replicate_seeds is not None:
            replicate_seeds = [int(s) for s in replicate_seeds]
        seeds = data.get('seeds')
        if seeds is not None and int(seeds) < 2:
            issues.append(f"seeds must be at least 2, got {seeds}")

        rate_window = data.get('rate_window')
        if rate_window is not None:
            rate_window = tuple(int(v) for v in rate_window)
            if len(rate_window) != 2 or rate_window[0] >= rate_window[1]:
                issues.append("rate_window must be [n_lo, n_hi] with n_lo < n_hi")

        nu_constants = data.get('nu_constants')
        if nu_constants is not None and set(nu_constants) != {'c1', 'c2', 'c3', 'e1'}:
            issues.append("nu_constants must give exactly c1, c2, c3, e1")

        initial_control = data.get('initial_control')
        if initial_control is not None and not _valid_initial_control(initial_control):
            issues.append(f"initial_control must be zero, sine_bump or constant:<c>, got {initial_control!r}")

        if issues:
            raise ConfigurationError("invalid experiment config", issues=issues)

        step_rule = (StepSizeRule.from_dict(data['step_rule'])
                     if data.get('step_rule') else _default_step_rule(kind))
        bias = BiasSpec.from_dict(data['bias']) if data.get('bias') else None

        try:
            config = cls(
                kind=kind,
                n_div=int(data.get('n_div', defaults.get('n_div', 32))),
                iterations=int(data.get('N', data.get('iterations', defaults.get('iterations', 1000)))),
                step_rule=step_rule,
                field_spec=TruncatedNormalSpec.from_dict(field_data),
                master_seed=int(seed),
                objective_samples=int(data.get('m', data.get('objective_samples',
                                                                defaults.get('objective_samples', 100)))),
                averaging_start=(int(data['averaging_start'])
                                 if data.get('averaging_start') is not None
                                 else (1 if kind == 'convex' else None)),
                output_dir=data.get('output_dir'),
                bias=bias,
                seeds=int(seeds) if seeds is not None else None,
                replicate_seeds=replicate_seeds,
                compare_unbiased=bool(data.get('compare_unbiased', False)),
                telemetry_cadence=int(data.get('telemetry_cadence',
                                               defaults.get('telemetry_cadence', 10))),
                initial_control=initial_control,
                reference=reference,
                objective_error=objective_error,
                lam=float(data['lambda']) if data.get('lambda') is not None else None,
                a_bar=float(data.get('a_bar', 2.0)),
                box=box,
                levels=levels,
                trials=int(data.get('trials', 100)),
                horizon=int(data.get('horizon', 100000)),
                nu_constants={k: float(v) for k, v in nu_constants.items()} if nu_constants else None,
                fixed_conductivity=bool(data.get('fixed_conductivity', False)),
                rate_window=rate_window,
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid experiment config: {e}")
        config.validate()
        return config

    def validate(self):
        issues = []
        if self.n_div < 1:
            issues.append(f"n_div must be at least 1, got {self.n_div}")
        if self.iterations < 1:
            issues.append(f"N must be at least 1, got {self.iterations}")
        if self.objective_samples < 1:
            issues.append(f"m must be at least 1, got {self.objective_samples}")
        if self.averaging_start is not None and not 1 <= self.averaging_start <= self.iterations:
            issues.append(f"averaging_start must lie in [1, N], got {self.averaging_start}")
        if isinstance(self.step_rule, FixedHorizonConstant) and self.step_rule.N != self.iterations:
            issues.append(f"fixed_horizon_constant rule is sized for N={self.step_rule.N}, "
                          f"run has N={self.iterations}")
        if self.master_seed < 0:
            issues.append(f"seed must be nonnegative, got {self.master_seed}")
        if self.lambda_value < 0:
            issues.append(f"lambda must be nonnegative, got {self.lambda_value}")
        if not self.field_spec.lower < self.a_bar < self.field_spec.upper:
            issues.append(f"a_bar {self.a_bar} must lie inside the conductivity bounds")
        if self.trials < 1 or self.horizon < 1:
            issues.append("trials and horizon must be at least 1")
        if issues:
            raise ConfigurationError("invalid experiment config", issues=issues)
        return self

    def to_dict(self):
        return {
            'kind': self.kind,
            'n_div': self.n_div,
            'N': self.iterations,
            'step_rule': self.step_rule.to_dict() if self.step_rule else None,
            'field': dict(self.field_spec.to_dict(), master_seed=self.master_seed),
            'seed': self.master_seed,
            'm': self.objective_samples,
            'averaging_start': self.averaging_start,
            'output_dir': self.output_dir,
            'bias': self.bias.to_dict() if self.bias else None,
            'seeds': self.seeds,
            'replicate_seeds': self.replicate_seeds,
            'compare_unbiased': self.compare_unbiased,
            'telemetry_cadence': self.telemetry_cadence,
            'initial_control': self.start_control,
            'reference': self.reference.to_dict(),
            'objective_error': self.objective_error,
            'lambda': self.lambda_value,
            'a_bar': self.a_bar,
            'box': list(self.box),
            'levels': list(self.levels),
            'trials': self.trials,
            'horizon': self.horizon,
            'nu_constants': self.nu_constants,
            'fixed_conductivity': self.fixed_conductivity,
            'rate_window': list(self.rate_window) if self.rate_window else None,
        }


def _valid_initial_control(name):
    if name in ('zero', 'sine_bump'):
        return True
    if isinstance(name, str) and name.startswith('constant:'):
        try:
            float(name.split(':', 1)[1])
            return True
        except ValueError:
            return False
    return False
