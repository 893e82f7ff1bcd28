import math

import hypothesis as hyp
import numpy as np
import pytest

from psgheat.core import analysis
from psgheat.errors import AnalysisError, ConfigurationError
from psgheat.models.analysis import EfficiencyParams, RecursionParams
from psgheat.models.psg import Constant, PolyDecay, PowerDecay


class TestLemmaConstants:
    def test_worked_example(self):
        params = analysis.lemma_constants(c1=2.0, c2=1.0, c3=1.0, e1=1.0)
        assert params.K == pytest.approx(2.0)
        assert params.nu == pytest.approx(1.0)
        assert params.bound(1) == pytest.approx(1.0)

    def test_initial_error_is_tight(self):
        params = analysis.lemma_constants(c1=1.5, c2=0.3, c3=2.0, e1=0.7)
        assert params.bound(1) == pytest.approx(params.e1)

    @pytest.mark.parametrize('kwargs', [
        {'c1': 1.0, 'c2': 0.1, 'c3': 0.1, 'e1': 1.0},
        {'c1': 0.5, 'c2': 0.1, 'c3': 0.1, 'e1': 1.0},
        {'c1': 2.0, 'c2': -0.1, 'c3': 0.1, 'e1': 1.0},
        {'c1': 2.0, 'c2': 0.1, 'c3': 0.1, 'e1': 0.0},
        {'c1': 2.0, 'c2': 0.0, 'c3': 0.0, 'e1': 1.0},
    ])
    def test_rejected(self, kwargs):
        with pytest.raises(AnalysisError):
            analysis.lemma_constants(**kwargs)

    def test_contraction_check(self):
        assert analysis.contraction_nonnegative(analysis.lemma_constants(2.0, 0.0, 3.0, 1.0))
        # c1 = 4, c2 = 0 and nu near 0 makes 1 - c1/m negative at m = 1 + nu
        tight = RecursionParams(c1=4.0, c2=0.0, c3=0.1, e1=1.0, K=1.0, nu=0.0)
        assert not analysis.contraction_nonnegative(tight)


class TestRecursionOracle:
    def test_admissible_tuples_are_reproducible(self):
        first = analysis.random_admissible_tuples(20, seed=4)
        second = analysis.random_admissible_tuples(20, seed=4)
        assert first == second
        assert all(t.c1 > 1 and analysis.contraction_nonnegative(t) for t in first)

    def test_no_violations(self):
        result = analysis.recursion_violations(analysis.random_admissible_tuples(100, seed=0), 10_000)
        assert result['violations'] == 0
        assert result['trials'] == 100
        assert result['max_ratio'] <= 1.0 + 1e-9

    def test_detects_a_bound_that_is_too_small(self):
        too_small = RecursionParams(c1=2.0, c2=0.0, c3=1.0, e1=1.0, K=0.5, nu=0.0)
        result = analysis.recursion_violations([too_small], 50)
        assert result['violations'] > 0
        assert result['violating_tuples'][0]['first_violation'] == 1

    def test_degenerate_bound_counts_as_violation(self):
        degenerate = RecursionParams(c1=2.0, c2=0.0, c3=0.0, e1=1.0, K=0.0, nu=-1.0)
        result = analysis.recursion_violations([degenerate], 5)
        assert result['violations'] == 5
        assert result['violating_tuples'][0]['first_violation'] == 1
        assert result['max_ratio'] == math.inf

    @pytest.mark.slow
    def test_no_violations_long_horizon(self):
        result = analysis.recursion_violations(analysis.random_admissible_tuples(100, seed=0), 100_000)
        assert result['violations'] == 0


class TestRateFit:
    def test_exact_inverse_law(self):
        ns = np.arange(1, 201)
        fit = analysis.fit_rate(ns, 7.0 / ns)
        assert fit.slope == pytest.approx(-1.0, abs=1e-10)
        assert fit.r_squared == pytest.approx(1.0)
        assert math.exp(fit.intercept) == pytest.approx(7.0)

    def test_exact_inverse_sqrt_law_in_window(self):
        ns = np.arange(1, 1001)
        fit = analysis.fit_rate(ns, 3.0 / np.sqrt(ns), window=(100, 1000))
        assert fit.slope == pytest.approx(-0.5, abs=1e-10)
        assert (fit.n_lo, fit.n_hi, fit.points) == (100, 1000, 901)

    @hyp.given(slope=hyp.strategies.floats(min_value=-3.0, max_value=-0.1),
               scale=hyp.strategies.floats(min_value=1e-3, max_value=1e3))
    @hyp.settings(max_examples=30)
    def test_recovers_power_laws(self, slope, scale):
        ns = np.arange(1, 101, dtype=float)
        fit = analysis.fit_rate(ns, scale * ns ** slope)
        assert fit.slope == pytest.approx(slope, abs=1e-8)

    def test_nonpositive_and_missing_errors_are_skipped(self):
        ns = np.arange(1, 11)
        errors = list(1.0 / ns)
        errors[2], errors[5], errors[7] = 0.0, None, -1.0
        fit = analysis.fit_rate(ns, errors)
        assert fit.points == 7
        assert fit.slope == pytest.approx(-1.0, abs=1e-10)

    def test_too_few_points(self):
        with pytest.raises(AnalysisError) as excinfo:
            analysis.fit_rate([1, 2, 3, 4, 5], [1.0, 0.0, 0.0, 0.0, 0.5])
        assert excinfo.value.details['nonpositive'] == 3

    def test_shape_mismatch(self):
        with pytest.raises(AnalysisError):
            analysis.fit_rate([1, 2, 3], [1.0, 2.0])

    def test_default_window(self):
        assert analysis.default_window(1000) == (100, 1000)
        assert analysis.default_window(5) == (1, 5)


class TestEnvelopes:
    def params(self, theta=1 / 3, e1=1.0):
        return EfficiencyParams(mu=2.0, theta=theta, M1=4.0, M2=8.0, L=2.5, initial_error=e1)

    def test_iterate_envelope_starts_at_initial_error_and_decreases(self):
        env = analysis.predicted_envelopes(self.params(e1=0.8), np.arange(1, 501))
        assert env['iterate'][0] == pytest.approx(math.sqrt(0.8))
        assert np.all(np.diff(env['iterate']) < 0)
        assert env['objective'][-1] == pytest.approx(2.5 * env['recursion'].K / (2 * (500 + env['recursion'].nu)))

    def test_efficiency_constants(self):
        params = EfficiencyParams(mu=2.0, theta=0.5, M1=1.0, M2=3.0, u_bar_norm_bound=2.0)
        assert params.c1 == pytest.approx(2.0)
        assert params.c2 == pytest.approx(1.5)
        assert params.c3 == pytest.approx(0.25 * (1.0 + 24.0))

    def test_refused_without_contraction(self):
        with pytest.raises(AnalysisError):
            analysis.predicted_envelopes(self.params(theta=0.2), [1, 2, 3])

    def test_needs_initial_error(self):
        params = EfficiencyParams(mu=2.0, theta=1.0, M1=1.0, M2=1.0)
        with pytest.raises(AnalysisError):
            analysis.predicted_envelopes(params, [1, 2])

    def test_objective_envelope_needs_lipschitz(self):
        params = EfficiencyParams(mu=2.0, theta=1.0, M1=1.0, M2=1.0, initial_error=1.0)
        with pytest.raises(AnalysisError):
            analysis.objective_envelope(params, [1, 2])

    def test_invalid_efficiency_params(self):
        with pytest.raises(ConfigurationError):
            EfficiencyParams(mu=0.0, theta=1.0, M1=1.0, M2=1.0)

    def test_fixed_horizon(self):
        assert analysis.fixed_horizon_envelope(1.0, 4.0, 100) == pytest.approx(0.2)
        with pytest.raises(AnalysisError):
            analysis.fixed_horizon_envelope(1.0, 0.0, 100)

    def test_sqrt_rule_forms(self):
        ns = np.array([1, 4, 16])
        slope_form = analysis.sqrt_rule_envelope(2.0, 1.0, 9.0, ns)
        assert slope_form['form'] == 'slope'
        assert np.allclose(slope_form['values'], [1.0, 0.5, 0.25])
        bound = analysis.sqrt_rule_envelope(0.5, 1.0, 9.0, ns, C_r=1.5)
        assert np.allclose(bound['values'], 1.5 * 2.0 * 3.0 / np.sqrt(ns))

    def test_averaged_envelope_constant_steps(self):
        ns = np.array([1, 10, 100])
        values = analysis.averaged_envelope(Constant(0.1), 2.0, 4.0, ns)
        assert np.allclose(values, (2.0 + 4.0 * ns * 0.01) / (2 * ns * 0.1))

    def test_horizon_q_grows(self):
        rule = PolyDecay(theta=0.5)
        q = analysis.horizon_Q(rule, 1.0, 2.0, 3.0, 0.5, 50)
        assert q[0] == pytest.approx(1.0 * (1 + 2 * 0.25 * 3.0) + 0.25 * (2.0 + 2 * 3.0 * 0.25))
        assert np.all(np.diff(q) > 0)

    def test_power_rule_envelope(self):
        env = analysis.power_rule_envelope(PowerDecay(theta=0.1, gamma=0.75), 2.0, 1.0, 1.0, 0.5, 1.0, 200)
        assert env['truncated_horizon']
        assert env['bound'] > 0
        assert env['Q'] >= 1.0

    def test_envelope_domination(self):
        ns = np.arange(1, 6)
        envelope = 1.0 / ns
        below = analysis.envelope_domination(ns, 0.5 / ns, envelope)
        assert below['dominated'] and below['crossings'] == 0
        curve = 0.5 / ns
        curve[3] = 1.0
        above = analysis.envelope_domination(ns, curve, envelope)
        assert not above['dominated']
        assert above['first_crossing'] == 4
        assert analysis.envelope_domination(ns, envelope, envelope)['dominated']


class TestModelConstants:
    def test_unit_square(self):
        constants = analysis.model_constants(0.5)
        assert constants.poincare == pytest.approx(0.4502, abs=1e-4)
        assert constants.C1 == constants.C2 == pytest.approx(0.4053, abs=1e-4)
        assert analysis.model_constants(1.0).C1 == pytest.approx(constants.C1 / 2)

    def test_needs_positive_conductivity(self):
        with pytest.raises(AnalysisError):
            analysis.model_constants(0.0)

    def test_growth_constants(self):
        constants = analysis.model_constants(0.5)
        growth = analysis.gradient_growth_constants(constants, 2.0, 3.0, 1.0)
        assert growth.A == pytest.approx(constants.C2 * (3.0 + constants.C1))
        assert growth.B == pytest.approx(2.0 + constants.C1 * constants.C2)
        assert growth.M1 == pytest.approx(2 * growth.A ** 2)
        assert growth.M2 == pytest.approx(2 * growth.B ** 2)
        assert growth.L == pytest.approx(2.0 + constants.C1 ** 2)

    def test_convex_gradient_bound(self):
        constants = analysis.model_constants(0.5)
        bound = analysis.gradient_bound(constants, math.sqrt(5 / 4), math.sqrt(1 + 4 * math.pi ** 4))
        assert bound == pytest.approx(3.863, abs=5e-3)
        assert bound < 3.9
