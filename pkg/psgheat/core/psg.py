"""Projected stochastic gradient iteration.

    for n = 1..N:
        draw xi_n
        G_n = G(u_n, xi_n)
        u_{n+1} = proj(u_n - tau_n G_n)
"""
import logging
import time

import numpy as np

from psgheat.core.heat_model import initial_control
from psgheat.core.sampling import draw
from psgheat.errors import (
    BiasScheduleError, ConfigurationError, IterationError, SamplingError, SolverError
)
from psgheat.models.mesh import ElementField, GridFunction
from psgheat.models.psg import RunRecord
from psgheat.models.random_field import SampleDraw

logger = logging.getLogger(__name__)


def tau(rule, n):
    if n < 1:
        raise ConfigurationError(f"step index must be at least 1, got {n}")
    return float(rule.tau(n))


def step_sums(rule, N):
    """Partial sums (sum tau_n, sum tau_n^2) over n = 1..N"""
    n = np.arange(1, N + 1, dtype=float)
    taus = np.broadcast_to(np.asarray(rule.tau(n), dtype=float), n.shape)
    return float(np.sum(taus)), float(np.sum(taus ** 2))


def averaging_weights(rule, i, N):
    """gamma_n = tau_n / sum_{l=i}^N tau_l for n = i..N"""
    if not 1 <= i <= N:
        raise ConfigurationError(f"empty averaging window [{i}, {N}]")
    n = np.arange(i, N + 1, dtype=float)
    taus = np.broadcast_to(np.asarray(rule.tau(n), dtype=float), n.shape)
    return taus / np.sum(taus)


class RunningAverage:
    """Weighted running mean sum(w_n u_n) / sum(w_n) without storing the history"""

    def __init__(self):
        self.total_weight = 0.0
        self._acc = None
        self._mesh_tag = None

    def __repr__(self):
        return f"<RunningAverage weight={self.total_weight:.6g}>"

    @property
    def empty(self):
        return self._acc is None

    def add(self, weight, u):
        if self._acc is None:
            self._acc = np.zeros(len(u))
            self._mesh_tag = u.mesh_tag
        self._acc += weight * u.values
        self.total_weight += weight

    @property
    def value(self):
        if self._acc is None:
            return None
        return GridFunction(self._mesh_tag, self._acc / self.total_weight)


def averaged_iterate(history, i, N):
    """Averaged iterate over n = i..N from a history of (tau_n, u_n), n = 1, 2, ..."""
    if not 1 <= i <= N or N > len(history):
        raise ConfigurationError(f"empty averaging window [{i}, {N}] for a history of {len(history)}")
    average = RunningAverage()
    for tau_n, u_n in history[i - 1:N]:
        average.add(tau_n, u_n)
    return average.value


class GradientOracle:
    """Produces G(u_n, xi_n) for iteration counter n"""

    mesh = None
    space = None

    def sample(self, u, n):
        raise NotImplementedError

    def bias_direction(self):
        """Unit vector (in the L2 norm) along the all-ones interior function"""
        direction = np.where(self.mesh.boundary_mask, 0.0, 1.0)
        fn = GridFunction(self.mesh.tag, direction)
        return fn / self.space.l2_norm(fn)


class HeatGradientOracle(GradientOracle):
    """Stochastic gradient of the heat control problem for a counter-keyed draw a(omega_n)"""

    def __init__(self, model, master_seed, fixed_conductivity=None):
        self.model = model
        self.mesh = model.mesh
        self.space = model.space
        self.master_seed = master_seed
        self.fixed_conductivity = fixed_conductivity

    def __repr__(self):
        return f"<HeatGradientOracle seed={self.master_seed} fixed={self.fixed_conductivity}>"

    def sample(self, u, n):
        if self.fixed_conductivity is not None:
            sample = SampleDraw(self.master_seed, (n,), float(self.fixed_conductivity))
            return self.model.stochastic_gradient(
                u, sample, conductivity=ElementField.constant(self.mesh, sample.value)
            )
        return self.model.stochastic_gradient(u, draw(self.model.config.field_spec, self.master_seed, n))


class BiasedOracle(GradientOracle):
    """Emits G(u, xi_n) + r_n with ||r_n|| = K_n along a deterministic direction"""

    def __init__(self, inner, spec, direction):
        self.inner = inner
        self.spec = spec
        self.direction = direction
        self.mesh = inner.mesh
        self.space = inner.space

    def __repr__(self):
        return f"<BiasedOracle {self.spec.to_dict()} around {self.inner!r}>"

    def bias(self, n):
        return self.spec.sign(n) * self.spec.K(n) * self.direction

    def sample(self, u, n):
        sample = self.inner.sample(u, n)
        if self.spec.magnitude == 0.0:
            return sample
        return sample.with_gradient(sample.g + self.bias(n))


def check_bias_schedule(spec, rule, horizon=None):
    """Accept K_n = K n^-q iff sum tau_n K_n < inf and sup K_n < inf for the rule's decay"""
    if spec.magnitude == 0.0:
        return True
    if spec.decay < 0:
        logger.warning(f"rejected bias schedule {spec.to_dict()}: K_n is unbounded")
        raise BiasScheduleError(
            f"bias magnitudes K_n = {spec.magnitude} n^{-spec.decay} are unbounded",
            issues=["sup K_n must be finite"],
        )
    p = rule.decay_exponent
    if horizon:
        n = np.arange(1, horizon + 1, dtype=float)
        taus = np.broadcast_to(np.asarray(rule.tau(n), dtype=float), n.shape)
        partial = float(np.sum(taus * spec.K(n)))
        logger.info(f"bias schedule partial sum of tau_n K_n over {horizon} steps: {partial:.6g}")
    if p + spec.decay <= 1.0:
        logger.warning(f"rejected bias schedule {spec.to_dict()} for {rule.kind} rule")
        raise BiasScheduleError(
            f"sum tau_n K_n diverges for {rule.kind} steps (decay {p}) with bias decay {spec.decay}",
            issues=[f"need step decay + bias decay > 1, got {p} + {spec.decay}"],
        )
    return True


def wrap_with_bias(oracle, spec, rule, direction=None, horizon=None):
    check_bias_schedule(spec, rule, horizon=horizon)
    if direction is None:
        direction = oracle.bias_direction()
    return BiasedOracle(oracle, spec, direction)


def run_psg(oracle, projection, config, u_ref=None, u1=None, telemetry=None):
    """Run N projected stochastic gradient steps and collect telemetry.

    `telemetry(n, u_n, averaged, sample)` may return extra columns for row n.
    Rows describe the iterate u_n at which the gradient is evaluated;
    `final` is u_{N+1}.
    """
    rule = config.step_rule
    space = oracle.space
    u = u1 if u1 is not None else initial_control(config.initial_control, oracle.mesh)
    average = RunningAverage() if config.averaging_start is not None else None
    record = RunRecord(config=config)

    logger.info(
        f"PSG start: N={config.max_iterations} rule={rule.kind} seed={config.master_seed}"
    )
    for n in range(1, config.max_iterations + 1):
        started = time.perf_counter()
        tau_n = tau(rule, n)
        try:
            sample = oracle.sample(u, n)
        except (SolverError, SamplingError) as e:
            logger.error(f"PSG iteration {n} failed: {e}")
            raise IterationError(f"iteration {n} failed: {e}", iteration=n, cause=e.to_dict()) from e

        if average is not None and n >= config.averaging_start:
            average.add(tau_n, u)
        averaged = average.value if average is not None else None

        row = {
            'n': n,
            'tau': tau_n,
            'a_sample': sample.draw.value,
            'j_hat': sample.per_sample_objective,
            'err_control': space.l2_norm(u - u_ref) if u_ref is not None else None,
            'grad_norm': space.l2_norm(sample.g),
        }
        if telemetry is not None:
            row.update(telemetry(n, u, averaged, sample) or {})

        u_next = projection(u - tau_n * sample.g)
        if not u_next.is_finite():
            logger.error(f"PSG iteration {n} produced a non-finite iterate")
            raise IterationError(f"non-finite iterate at iteration {n}", iteration=n)

        row['wall_ms'] = (time.perf_counter() - started) * 1000.0
        record.rows.append(row)
        if n % config.telemetry_cadence == 0:
            logger.debug(f"n={n} tau={tau_n:.4g} err_control={row['err_control']} j_hat={row['j_hat']:.6g}")
        u = u_next

    record.final = u
    record.averaged = average.value if average is not None else None
    logger.info(f"PSG finished {config.max_iterations} steps")
    return record
