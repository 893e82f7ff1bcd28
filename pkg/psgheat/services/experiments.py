"""Experiment orchestration: trajectories, seed replication, MMS and recursion studies."""
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from psgheat import __version__
from psgheat.core import analysis
from psgheat.core.fem import P1Space, build_mesh, restrict_by_injection
from psgheat.core.heat_model import (
    HeatModel, analytic_case, exact_state, initial_control, project_box
)
from psgheat.core.psg import HeatGradientOracle, run_psg, step_sums, wrap_with_bias
from psgheat.core.sampling import draw, inverse_moments
from psgheat.errors import AnalysisError, PsgHeatError
from psgheat.models.analysis import EfficiencyParams
from psgheat.models.mesh import ElementField
from psgheat.models.psg import (
    FixedHorizonConstant, PolyDecay, PowerDecay, PsgConfig, SqrtDecay
)
from psgheat.utils.artifacts import RunArtifactWriter

logger = logging.getLogger(__name__)

DEFAULT_SETTINGS = {
    'CG_TOLERANCE': 1e-10,
    'CG_MAX_ITER_FACTOR': 10,
    'REPLICATION_WORKERS': 1,
    'OBJECTIVE_WORKERS': 1,
    'RATE_FIT_WINDOW_FRACTION': 0.9,
    'FLOAT_FORMAT': '%.17g',
    'REFERENCE_MAX_ITER': 2000,
}


def _setting(settings, key):
    if settings is not None and key in settings:
        return settings[key]
    return DEFAULT_SETTINGS[key]


@dataclass
class Problem:
    """Seed-independent part of a trajectory experiment"""

    space: P1Space
    model: HeatModel
    u_bar: object
    u_ref: object
    reference_info: dict
    moments: tuple
    j_ref: float


def make_space(n_div, settings=None):
    return P1Space(
        build_mesh(n_div),
        tol=_setting(settings, 'CG_TOLERANCE'),
        max_iter_factor=_setting(settings, 'CG_MAX_ITER_FACTOR'),
    )


def resolve_step_rule(config):
    """Apply the nu override computed from user-supplied recursion constants"""
    rule = config.step_rule
    if config.nu_constants and isinstance(rule, PolyDecay):
        recursion = analysis.lemma_constants(**config.nu_constants)
        logger.info(f"PolyDecay nu set to {recursion.nu:.6g} from recursion constants")
        rule = replace(rule, nu=recursion.nu)
    return rule


def psg_config_for(config):
    return PsgConfig(
        max_iterations=config.iterations,
        step_rule=resolve_step_rule(config),
        master_seed=config.master_seed,
        averaging_start=config.averaging_start,
        initial_control=config.start_control,
        telemetry_cadence=config.telemetry_cadence,
        objective_samples=config.objective_samples,
    )


def build_model(config, n_div, settings=None):
    space = make_space(n_div, settings)
    model_config, u_bar = analytic_case(
        config.kind, space.mesh, lam=config.lambda_value, a_bar=config.a_bar,
        box=config.box, field_spec=config.field_spec,
    )
    return HeatModel(model_config, space), u_bar


def build_oracle(model, config):
    oracle = HeatGradientOracle(
        model, config.master_seed,
        fixed_conductivity=config.a_bar if config.fixed_conductivity else None,
    )
    if config.bias is not None:
        oracle = wrap_with_bias(oracle, config.bias, resolve_step_rule(config), horizon=config.iterations)
    return oracle


def _long_run_reference(config, settings):
    fine_config = replace(
        config, n_div=config.n_div * config.reference.refine,
        iterations=config.reference.iterations, bias=None,
        averaging_start=1 if config.averaging_start is not None else None,
    )
    fine_model, _ = build_model(fine_config, fine_config.n_div, settings)
    record = run_psg(
        build_oracle(fine_model, fine_config),
        lambda v: project_box(v, fine_model.config.box),
        replace(psg_config_for(fine_config), telemetry_cadence=max(1, fine_config.iterations // 10)),
    )
    fine_u = record.averaged if record.averaged is not None else record.final
    return fine_model.mesh, fine_u


def prepare_problem(config, settings=None):
    model, u_bar = build_model(config, config.n_div, settings)
    moments = inverse_moments(config.field_spec)
    kind = config.reference.kind
    started = time.perf_counter()

    if kind == 'analytic':
        u_ref, info = u_bar, {}
    elif kind == 'expected':
        u_ref, info = model.expected_optimum(
            u0=u_bar, moments=moments, max_iter=_setting(settings, 'REFERENCE_MAX_ITER')
        )
    else:
        fine_mesh, fine_u = _long_run_reference(config, settings)
        u_ref = restrict_by_injection(fine_u, fine_mesh, model.mesh)
        info = {'iterations': config.reference.iterations, 'refine': config.reference.refine}

    info = dict(info, kind=kind, seconds=time.perf_counter() - started,
                distance_to_analytic=model.space.l2_norm(u_ref - u_bar))
    logger.info(f"reference '{kind}' ready on {model.mesh.tag}: {info}")
    return Problem(
        space=model.space, model=model, u_bar=u_bar, u_ref=u_ref, reference_info=info,
        moments=moments, j_ref=model.expected_objective(u_ref, moments),
    )


class HeatTelemetry:
    """Objective estimates per row.

    j_hat_avg_m is the m-sample mean of J(v, omega_{n,k}), k = 1..m, at the
    telemetry cadence, where v is the averaged iterate when averaging is on
    and u_n otherwise. Samples are reduced in counter order.
    """

    def __init__(self, problem, config, workers=1):
        self.problem = problem
        self.model = problem.model
        self.config = config
        self.workers = max(1, int(workers))
        self.spec = config.field_spec
        self._w_ref = self.model.unit_state(problem.u_ref)

    def __repr__(self):
        return f"<HeatTelemetry mode={self.config.objective_error} m={self.config.objective_samples}>"

    def _on_cadence(self, n):
        return n == 1 or n % self.config.telemetry_cadence == 0 or n == self.config.iterations

    def _draw_values(self, n):
        counters = [(n, k) for k in range(1, self.config.objective_samples + 1)]
        if self.workers == 1:
            return [draw(self.spec, self.config.master_seed, c).value for c in counters]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return [d.value for d in pool.map(lambda c: draw(self.spec, self.config.master_seed, c), counters)]

    def m_sample_objectives(self, n, v, w_v):
        values = self._draw_values(n)
        j_v = np.array([self.model.objective_from_unit_state(v, w_v, a) for a in values])
        j_ref = np.array([self.model.objective_from_unit_state(self.problem.u_ref, self._w_ref, a)
                          for a in values])
        return float(j_v.mean()), float(j_ref.mean())

    def __call__(self, n, u, averaged, sample):
        space = self.problem.space
        v = averaged if averaged is not None else u
        w_v = self.model.unit_state(v)
        row = {
            'err_control_avg': space.l2_norm(averaged - self.problem.u_ref) if averaged is not None else None,
            'j_hat_avg_m': None,
        }
        sampled_ref = None
        if self._on_cadence(n):
            row['j_hat_avg_m'], sampled_ref = self.m_sample_objectives(n, v, w_v)

        if self.config.objective_error == 'expected':
            j_v = self.model.expected_objective(v, self.problem.moments, unit_state=w_v)
            row['err_obj'] = j_v - self.problem.j_ref
        elif averaged is not None:
            row['err_obj'] = row['j_hat_avg_m'] - sampled_ref if sampled_ref is not None else None
        else:
            a_n = sample.draw.value
            row['err_obj'] = sample.per_sample_objective - self.model.objective_from_unit_state(
                self.problem.u_ref, self._w_ref, a_n
            )
        return row


def _safe_fit(ns, errors, window, label):
    try:
        return analysis.fit_rate(ns, errors, window=window).to_dict()
    except AnalysisError as e:
        logger.warning(f"rate fit for {label} skipped: {e}")
        return {'error': str(e)}


def envelope_summary(config, problem, rule, u1):
    """Predicted bounds matching the run's step rule"""
    model = problem.model
    space = problem.space
    constants = analysis.model_constants(config.field_spec.lower)
    growth = analysis.gradient_growth_constants(
        constants, model.lam, space.l2_norm(model.config.y_d),
        space.l2_norm(model.config.e_d) if model.config.e_d is not None else 0.0,
    )
    e1 = space.l2_norm(u1 - problem.u_ref) ** 2
    N = config.iterations
    ns = np.arange(1, N + 1)
    result = {'growth': growth.to_dict(), 'e1': e1}

    if isinstance(rule, PolyDecay):
        params = EfficiencyParams(
            mu=max(model.lam, 1e-300), theta=rule.theta, M1=growth.M1, M2=growth.M2, L=growth.L,
            u_bar_norm_bound=space.l2_norm(problem.u_ref), initial_error=e1,
        )
        try:
            env = analysis.predicted_envelopes(params, ns)
        except AnalysisError as e:
            result.update({'kind': 'strongly_convex', 'refused': str(e)})
            return result, None
        result.update({
            'kind': 'strongly_convex',
            'params': params.to_dict(),
            'K': env['recursion'].K,
            'nu_lemma': env['recursion'].nu,
            'nu_run': rule.nu,
            # the bound is proven for tau_n = theta/(n + nu_lemma) only
            'envelope_applies': math.isclose(rule.nu, env['recursion'].nu, rel_tol=1e-9, abs_tol=1e-12),
            'iterate_final': float(env['iterate'][-1]),
            'objective_final': float(env['objective'][-1]),
        })
        if not result['envelope_applies']:
            logger.info(f"step rule nu={rule.nu:.6g} differs from the recursion bound's "
                        f"nu={env['recursion'].nu:.6g}; envelopes are indicative only")
        return result, env['iterate']

    # Bounded admissible set: D_C = sup ||u - u_1|| over the box, M from the gradient chain
    box = model.config.box
    D_C = space.l2_norm(np.maximum(np.abs(box.u_b.values - u1.values), np.abs(u1.values - box.u_a.values)))
    M = analysis.gradient_bound(
        constants, space.l2_norm(model.config.y_d),
        space.l2_norm(model.config.e_d) if model.config.e_d is not None else 0.0,
        u_max=max(space.l2_norm(box.u_a), space.l2_norm(box.u_b)), lam=model.lam,
    ) ** 2
    result.update({'D_C': D_C, 'M': M})
    if isinstance(rule, SqrtDecay):
        curve = analysis.averaged_envelope(rule, D_C ** 2, M, ns)
        result.update({
            'kind': 'sqrt_rule',
            'form': analysis.sqrt_rule_envelope(rule.theta, rule.diameter, M, ns)['form'],
            'averaged_bound_final': float(curve[-1]),
        })
    elif isinstance(rule, FixedHorizonConstant):
        result.update({'kind': 'fixed_horizon', 'bound': analysis.fixed_horizon_envelope(D_C, M, rule.N)})
    elif isinstance(rule, PowerDecay):
        env = analysis.power_rule_envelope(rule, D_C, growth.M1, growth.M2,
                                           space.l2_norm(problem.u_ref), e1, N)
        result.update(dict(env, kind='power_rule'))
    else:
        sum_tau, sum_tau_sq = step_sums(rule, N)
        result.update({'kind': 'averaged', 'bound': (D_C ** 2 + M * sum_tau_sq) / (2.0 * sum_tau)})
    return result, None


def run_trajectory(config, settings=None, output_dir=None, problem=None):
    """Run one seeded PSG trajectory; returns (summary, RunRecord)"""
    problem = problem or prepare_problem(config, settings)
    model = problem.model
    space = problem.space
    psg_config = psg_config_for(config)
    oracle = build_oracle(model, config)
    u1 = initial_control(config.start_control, model.mesh)
    telemetry = HeatTelemetry(problem, config, workers=_setting(settings, 'OBJECTIVE_WORKERS'))

    logger.info(f"run start: kind={config.kind} seed={config.master_seed} N={config.iterations} "
                f"n_div={config.n_div}")
    started = time.perf_counter()
    record = run_psg(oracle, lambda v: project_box(v, model.config.box), psg_config,
                     u_ref=problem.u_ref, u1=u1, telemetry=telemetry)
    elapsed = time.perf_counter() - started

    ns = record.column('n')
    window = config.rate_window or analysis.default_window(
        config.iterations, _setting(settings, 'RATE_FIT_WINDOW_FRACTION')
    )
    fits = {
        'iterate_error': _safe_fit(ns, record.column('err_control'), window, 'err_control'),
        'objective_error': _safe_fit(ns, record.column('err_obj'), window, 'err_obj'),
    }
    if config.averaging:
        fits['averaged_iterate_error'] = _safe_fit(ns, record.column('err_control_avg'), window,
                                                   'err_control_avg')
        cadenced = [(n, e) for n, e in zip(ns, record.column('err_obj')) if e is not None]
        if config.objective_error == 'sampled' and cadenced:
            fits['objective_error'] = _safe_fit([c[0] for c in cadenced], [c[1] for c in cadenced],
                                                window, 'err_obj (cadenced)')

    rule = psg_config.step_rule
    envelopes, iterate_envelope = envelope_summary(config, problem, rule, u1)

    constants = analysis.model_constants(config.field_spec.lower)
    e_d_norm = space.l2_norm(model.config.e_d) if model.config.e_d is not None else 0.0
    grad_bound = analysis.gradient_bound(
        constants, space.l2_norm(model.config.y_d), e_d_norm,
        u_max=max(space.l2_norm(model.config.box.u_a), space.l2_norm(model.config.box.u_b)),
        lam=model.lam,
    )
    grad_norms = np.array(record.column('grad_norm'), dtype=float)

    final_target = record.averaged if record.averaged is not None else record.final
    summary = {
        'kind': config.kind,
        'code_version': __version__,
        'config': config.to_dict(),
        'mesh': model.mesh.to_dict(),
        'reference': problem.reference_info,
        'moments': {'E_inv_a': problem.moments[0], 'E_inv_a2': problem.moments[1]},
        'final': {
            'err_control': space.l2_norm(record.final - problem.u_ref),
            'err_control_avg': (space.l2_norm(record.averaged - problem.u_ref)
                                if record.averaged is not None else None),
            'err_obj': model.expected_objective(final_target, problem.moments) - problem.j_ref,
            'feasible': model.config.box.contains(record.final),
        },
        'rate_fits': fits,
        'rate_window': list(window),
        'envelopes': envelopes,
        'max_grad_norm': float(np.max(grad_norms)),
        'grad_bound': grad_bound,
        'grad_bound_violations': int(np.sum(grad_norms > grad_bound)),
        'seconds': elapsed,
    }
    logger.info(f"run finished: kind={config.kind} seed={config.master_seed} in {elapsed:.1f}s, "
                f"final err_control={summary['final']['err_control']:.4g}")

    if output_dir:
        writer = RunArtifactWriter(output_dir, float_format=_setting(settings, 'FLOAT_FORMAT'))
        writer.write_trajectory(record.rows)
        writer.write_control(model.mesh, record.final, record.averaged)
        writer.write_summary(summary)
    record.envelope = iterate_envelope
    return summary, record


def _aggregate_column(records, name):
    curves = np.array([[np.nan if v is None else v for v in r.column(name)] for r in records], dtype=float)
    if curves.size == 0 or np.all(np.isnan(curves)):
        return None
    # rows off the telemetry cadence are empty in every seed and stay masked
    masked = np.ma.masked_invalid(curves)
    return {
        'mean': masked.mean(axis=0).tolist(None),
        'std': masked.std(axis=0).tolist(None),
    }


def _replicate_runs(config, seeds, settings, output_dir, problem, label):
    """Results keyed by position in seeds (repeated seeds get their own run directory)"""
    summaries, records, failures = {}, {}, {}
    repeated = len(set(seeds)) < len(seeds)

    def run_one(index, seed):
        name = f"rep-{index:02d}-seed-{seed}" if repeated else f"seed-{seed}"
        seed_dir = os.path.join(output_dir, name) if output_dir else None
        return run_trajectory(config.with_seed(seed), settings, seed_dir, problem=problem)

    workers = max(1, int(_setting(settings, 'REPLICATION_WORKERS')))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_one, i, seed) for i, seed in enumerate(seeds)]
        for i, future in enumerate(futures):
            try:
                summaries[i], records[i] = future.result()
            except PsgHeatError as e:
                logger.error(f"{label} run for seed {seeds[i]} failed: {e}")
                failures[i] = e
    if not summaries:
        raise next(iter(failures.values()))
    return summaries, records, failures


def replicate(config, seeds=None, settings=None, output_dir=None):
    """Run k seeded trajectories and aggregate mean/std error curves"""
    seed_list = config.replicate_seeds or [
        config.master_seed + i for i in range(seeds or config.seeds or 2)
    ]
    if len(seed_list) < 2:
        raise AnalysisError(f"replication needs at least 2 seeds, got {len(seed_list)}")

    problem = prepare_problem(config, settings)
    summaries, records, failures = _replicate_runs(
        config, seed_list, settings, output_dir, problem, 'biased' if config.bias else 'replicate'
    )
    ordered = [records[i] for i in sorted(records)]
    ns = ordered[0].column('n')
    curves = {name: _aggregate_column(ordered, name)
              for name in ('err_control', 'err_obj', 'err_control_avg')}

    final_errors = [summaries[i]['final']['err_control'] for i in sorted(summaries)]
    aggregate = {
        'kind': config.kind,
        'code_version': __version__,
        'seeds': seed_list,
        'completed_seeds': [seed_list[i] for i in sorted(summaries)],
        'failed_seeds': {str(seed_list[i]): e.to_dict() for i, e in failures.items()},
        'partial': bool(failures),
        'n': ns,
        'curves': curves,
        'final_err_control_mean': float(np.mean(final_errors)),
        'final_err_control_std': float(np.std(final_errors)),
    }

    envelope = ordered[0].envelope
    if envelope is not None and curves['err_control'] is not None:
        aggregate['envelope_domination'] = analysis.envelope_domination(
            ns, curves['err_control']['mean'], envelope
        )
        aggregate['envelope'] = summaries[min(summaries)]['envelopes']

    if config.compare_unbiased and config.bias is not None:
        twin = config.without_bias()
        twin_dir = os.path.join(output_dir, 'unbiased') if output_dir else None
        twin_summaries, _, twin_failures = _replicate_runs(twin, seed_list, settings, twin_dir, problem,
                                                           'unbiased')
        twin_final = [twin_summaries[i]['final']['err_control'] for i in sorted(twin_summaries)]
        aggregate['unbiased'] = {
            'final_err_control_mean': float(np.mean(twin_final)),
            'failed_seeds': [int(seed_list[i]) for i in twin_failures],
        }
        aggregate['final_error_ratio'] = aggregate['final_err_control_mean'] / aggregate['unbiased'][
            'final_err_control_mean']
        aggregate['partial'] = aggregate['partial'] or bool(twin_failures)

    if output_dir:
        RunArtifactWriter(output_dir, float_format=_setting(settings, 'FLOAT_FORMAT')).write_aggregate(aggregate)
    logger.info(f"replication finished: {len(summaries)}/{len(seed_list)} seeds")
    return aggregate


def mms_study(levels=(8, 16, 32, 64), a_bar=2.0, settings=None, output_dir=None):
    """L2 error of the state solve against y = -sin(2 pi x1) sin(2 pi x2) / (32 pi^2) (a_bar = 2)"""
    lam = 2.0
    exact = exact_state('strongly_convex', a_bar=a_bar, lam=lam)
    rows = []
    for n_div in levels:
        space = make_space(n_div, settings)
        mesh = space.mesh
        u = mesh.interpolate(lambda x, y: -0.5 * np.sin(2 * math.pi * x) * np.sin(2 * math.pi * y))
        K = space.stiffness_for(ElementField.constant(mesh, a_bar))
        w = space.solve(K, space.load(u))
        rows.append({
            'n_div': n_div,
            'h_min': mesh.h_min,
            'nodes': mesh.node_count,
            'l2_error': space.l2_error(w, exact),
            'nodal_max_error': float(np.max(np.abs(w.values - exact(mesh.x, mesh.y)))),
        })
        logger.debug(f"mms n_div={n_div}: L2 error {rows[-1]['l2_error']:.4e}")

    fit = analysis.fit_rate([r['n_div'] for r in rows], [r['l2_error'] for r in rows], min_points=2)
    summary = {
        'kind': 'fem_mms',
        'code_version': __version__,
        'a_bar': a_bar,
        'levels': list(levels),
        'rows': rows,
        'rate_fit': fit.to_dict(),
        'order_ok': abs(fit.slope + 2.0) <= 0.3,
    }
    if output_dir:
        writer = RunArtifactWriter(output_dir, float_format=_setting(settings, 'FLOAT_FORMAT'))
        writer.write_table('mms.csv', rows)
        writer.write_summary(summary)
    return summary


def lemma_study(trials=100, horizon=100000, seed=0, settings=None, output_dir=None):
    started = time.perf_counter()
    tuples = analysis.random_admissible_tuples(trials, seed=seed)
    result = analysis.recursion_violations(tuples, horizon)
    summary = dict(result, kind='lemma_oracle', code_version=__version__, seed=seed,
                   seconds=time.perf_counter() - started)
    logger.info(f"lemma oracle: {result['violations']} violations over {trials} tuples, horizon {horizon}")
    if output_dir:
        RunArtifactWriter(output_dir, float_format=_setting(settings, 'FLOAT_FORMAT')).write_summary(summary)
    return summary


def run_experiment(config, settings=None, output_dir=None):
    """Dispatch on the experiment kind; returns the summary dict"""
    if config.kind == 'fem_mms':
        return mms_study(config.levels, a_bar=config.a_bar, settings=settings, output_dir=output_dir)
    if config.kind == 'lemma_oracle':
        return lemma_study(config.trials, config.horizon, seed=config.master_seed,
                           settings=settings, output_dir=output_dir)
    summary, _ = run_trajectory(config, settings, output_dir)
    return summary


def resolve_output_dir(config, settings=None, override: Optional[str] = None):
    """Environment override wins over the config's output_dir, then OUTPUT_DIR/<kind>"""
    if override:
        return override
    if config.output_dir:
        return config.output_dir
    root = (settings or {}).get('OUTPUT_DIR') or os.path.join(os.getcwd(), 'runs')
    return os.path.join(root, f"{config.kind}-seed{config.master_seed}")
