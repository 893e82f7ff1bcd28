"""Counter-keyed truncated normal conductivity draws.

The stream for counter n (or (n, k)) is seeded from (master_seed, counter)
alone, so a draw never depends on how many other draws were made before it.
"""
import logging

import numpy as np
from scipy import stats

from psgheat.errors import SamplingError
from psgheat.models.mesh import ElementField
from psgheat.models.random_field import SampleDraw

logger = logging.getLogger(__name__)

MAX_REJECTIONS = 1_000_000


def _counter_tuple(counter):
    if isinstance(counter, (tuple, list)):
        return tuple(int(c) for c in counter)
    return (int(counter),)


def counter_rng(master_seed, counter):
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=_counter_tuple(counter)))


def draw(spec, master_seed, counter):
    """Rejection-sample Normal(mean, std) until the value lands in (lower, upper)"""
    rng = counter_rng(master_seed, counter)
    for _ in range(MAX_REJECTIONS):
        value = rng.normal(spec.mean, spec.std_dev)
        if spec.lower < value < spec.upper:
            return SampleDraw(int(master_seed), _counter_tuple(counter), float(value))
    logger.error(f"no accepted draw for counter {counter} after {MAX_REJECTIONS} proposals")
    raise SamplingError(
        f"rejection sampling exceeded {MAX_REJECTIONS} proposals",
        counter=list(_counter_tuple(counter)),
        spec=spec.to_dict(),
    )


def draw_values(spec, master_seed, counters):
    return np.array([draw(spec, master_seed, c).value for c in counters])


def field_from_draw(sample, mesh):
    """Spatially constant conductivity a(x, omega) = a(omega)"""
    return ElementField.constant(mesh, sample.value)


def _frozen_distribution(spec):
    lo = (spec.lower - spec.mean) / spec.std_dev
    hi = (spec.upper - spec.mean) / spec.std_dev
    return stats.truncnorm(lo, hi, loc=spec.mean, scale=spec.std_dev)


def analytic_mean(spec):
    return float(_frozen_distribution(spec).mean())


def analytic_variance(spec):
    return float(_frozen_distribution(spec).var())


def inverse_moments(spec):
    """(E[1/a], E[1/a^2]) under the truncated normal"""
    dist = _frozen_distribution(spec)
    first = dist.expect(lambda a: 1.0 / a)
    second = dist.expect(lambda a: 1.0 / a ** 2)
    return float(first), float(second)
