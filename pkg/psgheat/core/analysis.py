"""Efficiency bounds, the recursion oracle and convergence-rate fits."""
import logging
import math

import numpy as np

from psgheat.errors import AnalysisError
from psgheat.models.analysis import GrowthConstants, ModelConstants, RateFit, RecursionParams

logger = logging.getLogger(__name__)

RECURSION_SLACK = 1e-9


def lemma_constants(c1, c2, c3, e1):
    """K = (c3 + e1 c2)/(c1 - 1), nu = K/e1 - 1 for the recursion

        e_{n+1} <= e_n (1 - c1/(n+nu) + c2/(n+nu)^2) + c3/(n+nu)^2
    """
    if not c1 > 1:
        raise AnalysisError(f"recursion bound needs c1 > 1, got c1={c1}", c1=c1)
    if c2 < 0 or c3 < 0:
        raise AnalysisError(f"c2 and c3 must be nonnegative, got c2={c2}, c3={c3}")
    if not e1 > 0:
        raise AnalysisError(f"e1 must be positive for a finite nu, got e1={e1}")
    if not c3 + e1 * c2 > 0:
        raise AnalysisError(f"c3 + e1 c2 must be positive for a nonzero bound K, got c2={c2}, c3={c3}")
    K = (c3 + e1 * c2) / (c1 - 1.0)
    nu = K / e1 - 1.0
    return RecursionParams(c1=c1, c2=c2, c3=c3, e1=e1, K=K, nu=nu)


def contraction_nonnegative(params):
    """1 - c1/m + c2/m^2 >= 0 for every m >= 1 + nu"""
    m0 = 1.0 + params.nu
    if m0 <= 0:
        return False

    def factor(m):
        return 1.0 - params.c1 / m + params.c2 / m ** 2

    if params.c2 > 0:
        m_star = 2.0 * params.c2 / params.c1
        if m_star >= m0:
            return factor(m_star) >= 0.0
    return factor(m0) >= 0.0


def random_admissible_tuples(count, seed=0, max_attempts=None):
    """Random (c1, c2, c3, e1) with c1 > 1 and a nonnegative contraction factor"""
    rng = np.random.default_rng(seed)
    max_attempts = max_attempts or 1000 * count
    accepted = []
    attempts = 0
    while len(accepted) < count:
        attempts += 1
        if attempts > max_attempts:
            raise AnalysisError(f"only {len(accepted)} admissible tuples in {max_attempts} attempts")
        params = lemma_constants(
            c1=rng.uniform(1.05, 4.0),
            c2=rng.uniform(0.0, 2.0),
            c3=rng.uniform(0.05, 5.0),
            e1=rng.uniform(0.05, 5.0),
        )
        if contraction_nonnegative(params):
            accepted.append(params)
    logger.debug(f"drew {count} admissible tuples in {attempts} attempts")
    return accepted


def recursion_violations(tuples, horizon):
    """Iterate the recursion with equality and count n with e_n > K/(n+nu)"""
    c1 = np.array([t.c1 for t in tuples])
    c2 = np.array([t.c2 for t in tuples])
    c3 = np.array([t.c3 for t in tuples])
    K = np.array([t.K for t in tuples])
    nu = np.array([t.nu for t in tuples])
    e = np.array([t.e1 for t in tuples])

    violations = np.zeros(len(tuples), dtype=int)
    first = np.full(len(tuples), -1)
    worst = np.zeros(len(tuples))
    with np.errstate(divide='ignore', invalid='ignore'):
        for n in range(1, horizon + 1):
            m = n + nu
            bound = K / m
            # a bound that is zero, negative or undefined cannot certify anything
            ratio = np.where(np.isfinite(bound) & (bound > 0), e / bound, np.inf)
            ratio = np.where(np.isnan(ratio), np.inf, ratio)
            bad = ratio > 1.0 + RECURSION_SLACK
            violations += bad
            first = np.where(bad & (first < 0), n, first)
            worst = np.maximum(worst, ratio)
            e = e * (1.0 - c1 / m + c2 / m ** 2) + c3 / m ** 2

    total = int(violations.sum())
    if total:
        logger.warning(f"recursion oracle found {total} violations over horizon {horizon}")
    return {
        'trials': len(tuples),
        'horizon': horizon,
        'violations': total,
        'violating_tuples': [
            dict(tuples[k].to_dict(), first_violation=int(first[k]))
            for k in np.flatnonzero(violations)
        ],
        'max_ratio': float(worst.max()) if len(tuples) else 0.0,
    }


def predicted_envelopes(params, ns):
    """Iterate envelope sqrt(K/(n+nu)) and objective envelope L K / (2(n+nu))"""
    if params.initial_error is None:
        raise AnalysisError("initial error e1 = ||u_1 - u_bar||^2 is required")
    if not params.c1 > 1:
        raise AnalysisError(f"envelope refused: c1 = 2 mu theta = {params.c1} <= 1", c1=params.c1)
    recursion = lemma_constants(params.c1, params.c2, params.c3, params.initial_error)
    ns = np.asarray(ns, dtype=float)
    iterate = np.sqrt(recursion.K / (ns + recursion.nu))
    objective = None
    if params.L is not None:
        objective = params.L * recursion.K / (2.0 * (ns + recursion.nu))
    return {'recursion': recursion, 'n': ns, 'iterate': iterate, 'objective': objective}


def objective_envelope(params, ns):
    if params.L is None:
        raise AnalysisError("the objective envelope needs the Lipschitz constant L")
    return predicted_envelopes(params, ns)['objective']


def fixed_horizon_envelope(diameter, M, N):
    """D_C sqrt(M) / sqrt(N) for the constant rule tuned to horizon N"""
    if M <= 0 or N < 1:
        raise AnalysisError(f"need M > 0 and N >= 1, got M={M}, N={N}")
    return diameter * math.sqrt(M) / math.sqrt(N)


def sqrt_rule_envelope(theta, diameter, M, ns, C_r=None):
    """C(r) max(theta, 1/theta) D_C sqrt(M)/sqrt(N); slope form n^-1/2 unless C(r) is given"""
    ns = np.asarray(ns, dtype=float)
    if C_r is None:
        return {'form': 'slope', 'slope': -0.5, 'values': ns ** -0.5}
    scale = C_r * max(theta, 1.0 / theta) * diameter * math.sqrt(M)
    return {'form': 'bound', 'slope': -0.5, 'values': scale / np.sqrt(ns)}


def averaged_envelope(rule, e1, M, ns):
    """(e_1 + M sum tau_n^2) / (2 sum tau_n) for the average from i = 1 under E||G||^2 <= M"""
    ns = np.asarray(ns, dtype=int)
    n_all = np.arange(1, int(ns.max()) + 1, dtype=float)
    taus = np.broadcast_to(np.asarray(rule.tau(n_all), dtype=float), n_all.shape)
    sum_tau = np.cumsum(taus)
    sum_tau_sq = np.cumsum(taus ** 2)
    return (e1 + M * sum_tau_sq[ns - 1]) / (2.0 * sum_tau[ns - 1])


def horizon_Q(rule, e1, M1, M2, u_bar_norm, N):
    """Q_n = Q_{n-1}(1 + 2 tau_n^2 M2) + tau_n^2 (M1 + 2 M2 ||u_bar||^2), Q_0 = e1"""
    q = np.empty(N)
    current = e1
    drift = M1 + 2.0 * M2 * u_bar_norm ** 2
    for n in range(1, N + 1):
        t2 = rule.tau(n) ** 2
        current = current * (1.0 + 2.0 * t2 * M2) + t2 * drift
        q[n - 1] = current
    return q


def power_rule_envelope(rule, D_S, M1, M2, u_bar_norm, e1, N):
    """Averaged-objective bound for tau_n = theta/n^gamma with Q taken over n <= N only"""
    theta, gamma = rule.theta, rule.gamma
    Q = float(horizon_Q(rule, e1, M1, M2, u_bar_norm, N).max())
    R = 2.0 * M2 * Q + M1 + 2.0 * M2 * u_bar_norm ** 2
    numerator = (1.0 - gamma) * D_S ** 2 + 2.0 * R * theta ** 2 * gamma * (1.0 - gamma) / (2.0 * gamma - 1.0)
    bound = numerator / (2.0 * theta * (N + 1) ** (1.0 - gamma))
    return {'Q': Q, 'R': R, 'bound': bound, 'truncated_horizon': True}


def fit_rate(ns, errors, window=None, min_points=5):
    """Least-squares slope of log(error) against log(n) over n in window"""
    ns = np.asarray(ns, dtype=float)
    errors = np.array([np.nan if e is None else e for e in errors], dtype=float)
    if ns.shape != errors.shape:
        raise AnalysisError(f"{ns.size} indices for {errors.size} errors")

    lo, hi = window if window is not None else (ns.min(), ns.max())
    in_window = (ns >= lo) & (ns <= hi) & np.isfinite(errors)
    positive = in_window & (errors > 0)
    nonpositive = int(np.sum(in_window & (errors <= 0)))
    if positive.sum() < min_points:
        raise AnalysisError(
            f"rate fit needs {min_points} positive points in [{lo}, {hi}], "
            f"got {int(positive.sum())} ({nonpositive} nonpositive)",
            nonpositive=nonpositive,
        )

    x = np.log(ns[positive])
    y = np.log(errors[positive])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    spread = np.sum((y - y.mean()) ** 2)
    r_squared = 1.0 - np.sum(residual ** 2) / spread if spread > 0 else 1.0
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r_squared),
        n_lo=int(ns[positive].min()),
        n_hi=int(ns[positive].max()),
        points=int(positive.sum()),
    )


def default_window(n_max, fraction=0.9):
    """Last `fraction` of the iterations"""
    return (max(1, n_max - int(round(n_max * fraction))), n_max)


def model_constants(a_min, diameter=math.sqrt(2.0)):
    if not a_min > 0:
        raise AnalysisError(f"a_min must be positive, got {a_min}")
    poincare = diameter / math.pi
    C = poincare ** 2 / a_min
    return ModelConstants(poincare=poincare, C1=C, C2=C, a_min=a_min, diameter=diameter)


def gradient_growth_constants(constants, lam, y_d_norm, e_d_norm=0.0):
    """||G(u)|| <= A + B||u|| with A = C2(||y_D|| + C1||e_D||), B = lambda + C1 C2"""
    A = constants.C2 * (y_d_norm + constants.C1 * e_d_norm)
    B = lam + constants.C1 * constants.C2
    return GrowthConstants(A=A, B=B, M1=2.0 * A ** 2, M2=2.0 * B ** 2, L=lam + constants.C1 ** 2)


def gradient_bound(constants, y_d_norm, e_d_norm=0.0, u_max=1.0, lam=0.0):
    """lambda ||u|| + C2(||y_D|| + C1(||u|| + ||e_D||)) at ||u|| = u_max"""
    return lam * u_max + constants.C2 * (y_d_norm + constants.C1 * (u_max + e_d_norm))


def envelope_domination(ns, curve, envelope, rtol=1e-9):
    curve = np.asarray(curve, dtype=float)
    envelope = np.asarray(envelope, dtype=float)
    crossings = np.flatnonzero(curve > envelope * (1.0 + rtol))
    return {
        'dominated': bool(crossings.size == 0),
        'crossings': int(crossings.size),
        'first_crossing': int(np.asarray(ns)[crossings[0]]) if crossings.size else None,
        'max_ratio': float(np.max(curve / envelope)) if curve.size else 0.0,
    }
