"""Batch entry point.

    psg run <config.json>
    psg replicate <config.json> --seeds k
    psg mms --levels 8,16,32,64
    psg lemma --trials 100 --horizon 100000

Exit codes: 0 success, 2 configuration error, 3 solver/iteration/sampling failure.
"""
import json
import os

import click
from flask import current_app
from flask.cli import FlaskGroup, with_appcontext

from psgheat.errors import (
    ConfigurationError, IterationError, PsgHeatError, SamplingError, SolverError
)
from psgheat.models.experiment import ExperimentConfig
from psgheat.services import experiments
from psgheat.utils.artifacts import RunArtifactWriter, dumps

EXIT_CONFIG = 2
EXIT_SOLVER = 3


def exit_code_for(error):
    if isinstance(error, (SolverError, IterationError, SamplingError)):
        return EXIT_SOLVER
    return EXIT_CONFIG


def load_config(path):
    try:
        with open(path, encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigurationError(f"cannot read config {path}: {e.strerror}", path=path)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"config {path} is not valid JSON: {e.msg}", path=path, line=e.lineno)
    app_config = current_app.config
    return ExperimentConfig.from_dict(data, defaults={
        'n_div': app_config['DEFAULT_N_DIV'],
        'iterations': app_config['DEFAULT_ITERATIONS'],
        'objective_samples': app_config['DEFAULT_OBJECTIVE_SAMPLES'],
        'telemetry_cadence': app_config['DEFAULT_TELEMETRY_CADENCE'],
    })


def _report_failure(error, output_dir):
    payload = error.to_dict()
    click.echo(dumps(payload))
    if output_dir:
        try:
            RunArtifactWriter(output_dir).write_error(payload)
        except OSError as e:
            current_app.logger.warning(f"Could not write error.json to {output_dir}: {e}")
    code = exit_code_for(error)
    current_app.logger.error(f"{payload['kind']}: {payload['error']} (exit {code})")
    raise click.exceptions.Exit(code)


def _output_dir(config=None, default_name=None):
    settings = current_app.config
    override = settings.get('OUTPUT_DIR_OVERRIDE')
    if config is not None:
        return experiments.resolve_output_dir(config, settings, override=override)
    return override or os.path.join(settings['OUTPUT_DIR'], default_name)


@click.command('run')
@click.argument('config_path')
@with_appcontext
def run_command(config_path):
    """Run one experiment from a JSON config"""
    output_dir = None
    try:
        config = load_config(config_path)
        output_dir = _output_dir(config)
        current_app.logger.info(f"Running {config.kind} into {output_dir}")
        summary = experiments.run_experiment(config, current_app.config, output_dir)
    except PsgHeatError as e:
        _report_failure(e, output_dir)
    click.echo(dumps({
        'output_dir': output_dir,
        'kind': summary['kind'],
        'final': summary.get('final'),
        'rate_fits': summary.get('rate_fits') or summary.get('rate_fit'),
        'violations': summary.get('violations'),
    }))


@click.command('replicate')
@click.argument('config_path')
@click.option('--seeds', 'seeds', type=int, default=None, help='Number of seeded runs (k >= 2)')
@with_appcontext
def replicate_command(config_path, seeds):
    """Run k seeded trajectories and write aggregate.json"""
    output_dir = None
    try:
        config = load_config(config_path)
        if config.kind not in ('strongly_convex', 'convex'):
            raise ConfigurationError(f"replicate needs a trajectory experiment, got {config.kind}")
        if seeds is not None and seeds < 2:
            raise ConfigurationError(f"--seeds must be at least 2, got {seeds}")
        output_dir = _output_dir(config)
        aggregate = experiments.replicate(config, seeds=seeds, settings=current_app.config,
                                          output_dir=output_dir)
    except PsgHeatError as e:
        _report_failure(e, output_dir)
    click.echo(dumps({
        'output_dir': output_dir,
        'seeds': aggregate['seeds'],
        'partial': aggregate['partial'],
        'final_err_control_mean': aggregate['final_err_control_mean'],
        'envelope_domination': aggregate.get('envelope_domination'),
        'final_error_ratio': aggregate.get('final_error_ratio'),
    }))


def _parse_levels(value):
    try:
        levels = tuple(int(v) for v in value.split(',') if v.strip())
    except ValueError:
        raise ConfigurationError(f"--levels must be comma separated integers, got {value!r}")
    if len(levels) < 2 or any(v < 1 for v in levels):
        raise ConfigurationError(f"--levels needs at least two positive values, got {value!r}")
    return levels


@click.command('mms')
@click.option('--levels', default='8,16,32,64', show_default=True, help='Comma separated n_div values')
@click.option('--a-bar', 'a_bar', type=float, default=2.0, show_default=True)
@with_appcontext
def mms_command(levels, a_bar):
    """Manufactured-solution order study for the state solve"""
    output_dir = None
    try:
        output_dir = _output_dir(default_name='fem_mms')
        summary = experiments.mms_study(_parse_levels(levels), a_bar=a_bar,
                                        settings=current_app.config, output_dir=output_dir)
    except PsgHeatError as e:
        _report_failure(e, output_dir)
    click.echo(dumps({'output_dir': output_dir, 'rate_fit': summary['rate_fit'],
                      'order_ok': summary['order_ok']}))


@click.command('lemma')
@click.option('--trials', type=int, default=100, show_default=True)
@click.option('--horizon', type=int, default=100000, show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
@with_appcontext
def lemma_command(trials, horizon, seed):
    """Brute-force check of the recursion bound on random admissible tuples"""
    output_dir = None
    try:
        if trials < 1 or horizon < 1:
            raise ConfigurationError("--trials and --horizon must be at least 1")
        output_dir = _output_dir(default_name='lemma_oracle')
        summary = experiments.lemma_study(trials, horizon, seed=seed, settings=current_app.config,
                                          output_dir=output_dir)
    except PsgHeatError as e:
        _report_failure(e, output_dir)
    click.echo(dumps({'output_dir': output_dir, 'trials': summary['trials'],
                      'horizon': summary['horizon'], 'violations': summary['violations']}))


def register_commands(app):
    for command in (run_command, replicate_command, mms_command, lemma_command):
        app.cli.add_command(command)


def _create_app():
    from psgheat.app import create_app
    return create_app()


main = FlaskGroup(create_app=_create_app, add_default_commands=False, add_version_option=False,
                  help="Projected stochastic gradient experiments")
