import json

import numpy as np
import pytest

from psgheat.errors import ConfigurationError, PsgHeatError
from psgheat.models.analysis import RateFit
from psgheat.models.experiment import ExperimentConfig
from psgheat.models.psg import PolyDecay, SqrtDecay
from psgheat.utils.artifacts import dumps
from psgheat.utils.validation import validate_config, validate_summary


class TestExperimentConfig:
    def test_strongly_convex_defaults(self):
        config = ExperimentConfig.from_dict({'kind': 'strongly_convex'})
        assert config.step_rule == PolyDecay(theta=1 / 3)
        assert config.lambda_value == 2.0
        assert config.start_control == 'sine_bump'
        assert not config.averaging
        assert config.reference.kind == 'expected'
        assert config.objective_error == 'sampled'

    def test_convex_defaults(self):
        config = ExperimentConfig.from_dict({'kind': 'convex'})
        assert isinstance(config.step_rule, SqrtDecay)
        assert config.lambda_value == 0.0
        assert config.averaging_start == 1
        assert config.start_control == 'zero'

    def test_app_defaults_fill_missing_values(self):
        config = ExperimentConfig.from_dict({'kind': 'convex'}, defaults={'n_div': 8, 'iterations': 40})
        assert (config.n_div, config.iterations) == (8, 40)
        assert ExperimentConfig.from_dict({'kind': 'convex', 'N': 7}, defaults={'iterations': 40}).iterations == 7

    def test_seed_aliases(self):
        assert ExperimentConfig.from_dict({'kind': 'convex', 'seed': 5}).master_seed == 5
        assert ExperimentConfig.from_dict({'kind': 'convex', 'field': {'master_seed': 6}}).master_seed == 6

    def test_round_trip(self):
        data = {
            'kind': 'strongly_convex', 'n_div': 16, 'N': 200, 'seed': 3, 'm': 10,
            'step_rule': {'kind': 'poly_decay', 'theta': 0.5, 'nu': 2.0},
            'field': {'mean': 2.0, 'std': 0.2, 'lower': 0.5, 'upper': 3.5},
            'bias': {'magnitude': 0.1, 'decay': 2.0, 'direction': 'alternating'},
            'reference': {'kind': 'analytic'}, 'objective_error': 'sampled', 'rate_window': [20, 200],
        }
        config = ExperimentConfig.from_dict(data)
        assert ExperimentConfig.from_dict(config.to_dict()).to_dict() == config.to_dict()
        assert config.step_rule == PolyDecay(theta=0.5, nu=2.0)

    @pytest.mark.parametrize('data', [
        {'kind': 'strongly_convex', 'learning_rate': 0.1},
        {'kind': 'parabolic'},
        {'kind': 'convex', 'field': {'mean': 2.0, 'shape': 1.0}},
        {'kind': 'convex', 'reference': {'kind': 'oracle'}},
        {'kind': 'convex', 'objective_error': 'exact'},
        {'kind': 'convex', 'box': [1.0, -1.0]},
        {'kind': 'convex', 'seeds': 1},
        {'kind': 'convex', 'rate_window': [100, 10]},
        {'kind': 'convex', 'nu_constants': {'c1': 2.0}},
        {'kind': 'convex', 'initial_control': 'random'},
        {'kind': 'convex', 'N': 10, 'averaging_start': 11},
        {'kind': 'convex', 'seed': -1},
        {'kind': 'convex', 'a_bar': 5.0},
        {'kind': 'convex', 'step_rule': {'kind': 'poly_decay', 'theta': -1.0}},
        {'kind': 'convex', 'bias': {'magnitude': 0.1, 'sign': 1}},
        {'kind': 'convex', 'N': 100, 'step_rule': {'kind': 'fixed_horizon_constant', 'D': 1.0, 'sqrt_M': 3.9, 'N': 50}},
    ])
    def test_invalid_configs(self, data):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(data)

    def test_fixed_horizon_rule_matches_run_length(self):
        rule = {'kind': 'fixed_horizon_constant', 'D': 1.0, 'sqrt_M': 3.9, 'N': 100}
        config = ExperimentConfig.from_dict({'kind': 'convex', 'N': 100, 'step_rule': rule})
        assert config.step_rule.N == config.iterations

    def test_unknown_keys_listed(self):
        with pytest.raises(ConfigurationError) as excinfo:
            ExperimentConfig.from_dict({'kind': 'convex', 'alpha': 1, 'beta': 2})
        assert "unknown keys: ['alpha', 'beta']" in excinfo.value.issues

    def test_not_an_object(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_dict(['convex'])

    def test_with_seed_and_without_bias(self):
        config = ExperimentConfig.from_dict({'kind': 'convex', 'bias': {'magnitude': 0.1, 'decay': 1.0}})
        assert config.with_seed(9).master_seed == 9
        assert config.without_bias().bias is None
        assert config.bias is not None


class TestErrors:
    def test_to_dict_carries_details(self):
        error = ConfigurationError('bad', issues=['x'], path='cfg.json')
        assert error.to_dict() == {'error': 'bad', 'kind': 'ConfigurationError', 'issues': ['x'], 'path': 'cfg.json'}
        assert isinstance(error, PsgHeatError)


class TestValidation:
    def test_validate_config(self):
        assert validate_config({'kind': 'convex'}) == []
        assert validate_config({'kind': 'convex', 'zeta': 1})

    def test_validate_lemma_summary(self):
        summary = {'kind': 'lemma_oracle', 'code_version': '1.0.0', 'trials': 3, 'horizon': 10, 'violations': 0}
        assert validate_summary(summary) == []
        assert validate_summary(dict(summary, violations=True))

    def test_validate_unknown_kind(self):
        assert validate_summary({'kind': 'other'}) == ["unknown summary kind: 'other'"]
        assert validate_summary([]) == ['summary must be a JSON object']


class TestArtifactJson:
    def test_non_finite_values_become_null(self):
        text = dumps({'a': float('nan'), 'b': [np.inf, 1.5], 'c': np.float64(-np.inf), 'd': np.array([np.nan, 2.0])})
        assert json.loads(text) == {'a': None, 'b': [None, 1.5], 'c': None, 'd': [None, 2.0]}

    def test_nested_records_are_cleaned(self):
        fit = RateFit(slope=float('nan'), intercept=0.0, r_squared=1.0, n_lo=1, n_hi=2, points=2)
        assert json.loads(dumps({'fit': fit}))['fit']['slope'] is None
