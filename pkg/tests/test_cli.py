import json
import os

import pandas as pd
import pytest

from psgheat.app import create_app
from psgheat.cli import EXIT_CONFIG, EXIT_SOLVER
from psgheat.utils.artifacts import TRAJECTORY_COLUMNS, read_json
from psgheat.utils.validation import validate_summary


@pytest.fixture
def write_config(tmp_path):
    def write(data, name='config.json'):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding='utf-8')
        return str(path)
    return write


def small_run(tmp_path, **extra):
    data = {
        'kind': 'strongly_convex', 'n_div': 8, 'N': 30, 'm': 5, 'seed': 7, 'telemetry_cadence': 5,
        'output_dir': str(tmp_path / 'out'),
    }
    data.update(extra)
    return data


class TestRun:
    def test_strongly_convex_run_writes_artifacts(self, runner, write_config, tmp_path):
        result = runner.invoke(args=['run', write_config(small_run(tmp_path))])
        assert result.exit_code == 0, result.output

        out = tmp_path / 'out'
        trajectory = pd.read_csv(out / 'trajectory.csv')
        assert list(trajectory.columns[:len(TRAJECTORY_COLUMNS)]) == TRAJECTORY_COLUMNS
        assert list(trajectory['n']) == list(range(1, 31))
        assert trajectory['j_hat_avg_m'].notna().sum() == 7
        # single-sample objective error on every row
        assert trajectory['err_obj'].notna().all()

        control = pd.read_csv(out / 'control_final.csv')
        assert list(control.columns) == ['x', 'y', 'u']
        assert len(control) == 81

        summary = read_json(out / 'summary.json')
        assert validate_summary(summary) == []
        assert summary['final']['feasible']
        assert summary['config']['seed'] == 7
        assert summary['grad_bound_violations'] == 0
        # default nu = 0 is not the nu the iterate bound is proven for
        envelopes = summary['envelopes']
        assert envelopes['nu_run'] == 0.0 and envelopes['nu_lemma'] > 0
        assert envelopes['envelope_applies'] is False

    def test_envelope_applies_when_run_uses_recursion_nu(self, runner, write_config, tmp_path):
        first = small_run(tmp_path, N=5, output_dir=str(tmp_path / 'a'))
        assert runner.invoke(args=['run', write_config(first, 'a.json')]).exit_code == 0
        nu = read_json(tmp_path / 'a' / 'summary.json')['envelopes']['nu_lemma']

        second = small_run(tmp_path, N=5, output_dir=str(tmp_path / 'b'),
                           step_rule={'kind': 'poly_decay', 'theta': 1 / 3, 'nu': nu})
        assert runner.invoke(args=['run', write_config(second, 'b.json')]).exit_code == 0
        assert read_json(tmp_path / 'b' / 'summary.json')['envelopes']['envelope_applies'] is True

    def test_identical_configs_give_identical_artifacts(self, runner, write_config, tmp_path):
        for name in ('a', 'b'):
            data = small_run(tmp_path, output_dir=str(tmp_path / name))
            assert runner.invoke(args=['run', write_config(data, f'{name}.json')]).exit_code == 0
        first = pd.read_csv(tmp_path / 'a' / 'trajectory.csv').drop(columns='wall_ms')
        second = pd.read_csv(tmp_path / 'b' / 'trajectory.csv').drop(columns='wall_ms')
        pd.testing.assert_frame_equal(first, second, check_exact=True)
        control = [(tmp_path / name / 'control_final.csv').read_bytes() for name in ('a', 'b')]
        assert control[0] == control[1]

    def test_convex_run_with_sampled_objective(self, runner, write_config, tmp_path):
        data = small_run(tmp_path, kind='convex', N=20, objective_error='sampled')
        result = runner.invoke(args=['run', write_config(data)])
        assert result.exit_code == 0, result.output
        trajectory = pd.read_csv(tmp_path / 'out' / 'trajectory.csv')
        assert trajectory['err_control_avg'].notna().all()
        assert trajectory['err_obj'].notna().sum() == trajectory['j_hat_avg_m'].notna().sum()
        assert 'u_avg' in pd.read_csv(tmp_path / 'out' / 'control_final.csv').columns

    def test_default_output_dir(self, app, runner, write_config, tmp_path):
        data = small_run(tmp_path, N=5)
        del data['output_dir']
        assert runner.invoke(args=['run', write_config(data)]).exit_code == 0
        assert os.path.exists(os.path.join(app.config['OUTPUT_DIR'], 'strongly_convex-seed7', 'summary.json'))

    def test_missing_config_file(self, runner, tmp_path):
        result = runner.invoke(args=['run', str(tmp_path / 'nope.json')])
        assert result.exit_code == EXIT_CONFIG
        assert 'ConfigurationError' in result.output

    def test_invalid_json(self, runner, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{"kind": ', encoding='utf-8')
        assert runner.invoke(args=['run', str(path)]).exit_code == EXIT_CONFIG

    def test_unknown_key(self, runner, write_config, tmp_path):
        result = runner.invoke(args=['run', write_config(small_run(tmp_path, momentum=0.9))])
        assert result.exit_code == EXIT_CONFIG
        assert 'momentum' in result.output

    def test_constant_bias_rejected_with_error_file(self, runner, write_config, tmp_path):
        data = small_run(tmp_path, bias={'magnitude': 0.1, 'decay': 0.0})
        result = runner.invoke(args=['run', write_config(data)])
        assert result.exit_code == EXIT_CONFIG
        error = read_json(tmp_path / 'out' / 'error.json')
        assert error['kind'] == 'BiasScheduleError'
        assert error['issues']

    def test_solver_failure_exit_code(self, tmp_path, write_config):
        app = create_app('testing', overrides={'OUTPUT_DIR': str(tmp_path / 'runs'), 'CG_MAX_ITER_FACTOR': 0})
        result = app.test_cli_runner().invoke(args=['run', write_config(small_run(tmp_path))])
        assert result.exit_code == EXIT_SOLVER
        error = read_json(tmp_path / 'out' / 'error.json')
        assert error['kind'] in ('SolverError', 'IterationError')


class TestReplicate:
    def test_identical_seeds_give_identical_summaries(self, runner, write_config, tmp_path):
        data = small_run(tmp_path, N=10, replicate_seeds=[3, 3])
        result = runner.invoke(args=['replicate', write_config(data)])
        assert result.exit_code == 0, result.output

        out = tmp_path / 'out'
        aggregate = read_json(out / 'aggregate.json')
        assert aggregate['seeds'] == [3, 3]
        assert not aggregate['partial']
        assert aggregate['final_err_control_std'] == 0.0
        first = read_json(out / 'rep-00-seed-3' / 'summary.json')
        second = read_json(out / 'rep-01-seed-3' / 'summary.json')
        assert first['final'] == second['final']
        assert first['rate_fits'] == second['rate_fits']

    def test_aggregate_is_strict_json(self, runner, write_config, tmp_path):
        data = small_run(tmp_path, kind='convex', N=20, replicate_seeds=[1, 2])
        result = runner.invoke(args=['replicate', write_config(data)])
        assert result.exit_code == 0, result.output

        def reject(token):
            raise ValueError(f'non-finite token {token}')

        text = (tmp_path / 'out' / 'aggregate.json').read_text(encoding='utf-8')
        aggregate = json.loads(text, parse_constant=reject)
        # averaged objective error exists only at n = 1, 5, 10, 15, 20
        mean = aggregate['curves']['err_obj']['mean']
        assert [n for n, v in zip(aggregate['n'], mean) if v is not None] == [1, 5, 10, 15, 20]
        assert all(v is not None for v in aggregate['curves']['err_control']['std'])

    def test_seed_count_option(self, runner, write_config, tmp_path):
        result = runner.invoke(args=['replicate', write_config(small_run(tmp_path, N=5)), '--seeds', '2'])
        assert result.exit_code == 0, result.output
        aggregate = read_json(tmp_path / 'out' / 'aggregate.json')
        assert aggregate['seeds'] == [7, 8]
        assert os.path.isdir(tmp_path / 'out' / 'seed-8')

    def test_single_seed_rejected(self, runner, write_config, tmp_path):
        result = runner.invoke(args=['replicate', write_config(small_run(tmp_path)), '--seeds', '1'])
        assert result.exit_code == EXIT_CONFIG

    def test_needs_trajectory_kind(self, runner, write_config):
        result = runner.invoke(args=['replicate', write_config({'kind': 'lemma_oracle'})])
        assert result.exit_code == EXIT_CONFIG


class TestStudies:
    def test_lemma(self, app, runner):
        result = runner.invoke(args=['lemma', '--trials', '10', '--horizon', '1000'])
        assert result.exit_code == 0, result.output
        summary = read_json(os.path.join(app.config['OUTPUT_DIR'], 'lemma_oracle', 'summary.json'))
        assert summary['violations'] == 0
        assert validate_summary(summary) == []

    def test_lemma_rejects_empty_study(self, runner):
        assert runner.invoke(args=['lemma', '--trials', '0']).exit_code == EXIT_CONFIG

    def test_mms(self, app, runner):
        result = runner.invoke(args=['mms', '--levels', '4,8,16'])
        assert result.exit_code == 0, result.output
        out = os.path.join(app.config['OUTPUT_DIR'], 'fem_mms')
        assert validate_summary(read_json(os.path.join(out, 'summary.json'))) == []
        assert len(pd.read_csv(os.path.join(out, 'mms.csv'))) == 3

    @pytest.mark.parametrize('levels', ['8', '8,x', '0,8'])
    def test_mms_rejects_bad_levels(self, runner, levels):
        assert runner.invoke(args=['mms', '--levels', levels]).exit_code == EXIT_CONFIG

    def test_run_dispatches_lemma_config(self, runner, write_config, tmp_path):
        data = {'kind': 'lemma_oracle', 'trials': 5, 'horizon': 200, 'output_dir': str(tmp_path / 'lemma')}
        assert runner.invoke(args=['run', write_config(data)]).exit_code == 0
        assert read_json(tmp_path / 'lemma' / 'summary.json')['trials'] == 5
