import numpy as np
import pytest

from jumpflow.flow import FlowContext
from jumpflow.model import FrequencyField, TransitionSchedule, trig_observable
from jumpflow.montecarlo import (SampleCloud, convergence_curve, doubling_ladder, expectation_mc,
                                 fit_decay_exponent, time_average, time_average_curve)
from jumpflow.spectral import expectation_fourier
from jumpflow.theorems import theoretical_limit

from conftest import D1_LIMIT


@pytest.fixture(scope="module")
def cloud():
    from conftest import d1_density
    return SampleCloud.draw(d1_density(), 20000, 0)


class TestExpectationMC:
    def test_constant_observable(self, ctx, cloud):
        one = trig_observable(1, [([0], [1], None)])
        assert expectation_mc(one, cloud, 0.0, ctx) == (1.0, 0.0)

    def test_agrees_with_fourier(self, ctx, G, f0, cloud):
        for t in (0.5, 1.3, 7.77):
            m, s = expectation_mc(G, cloud, t, ctx)
            assert abs(m - expectation_fourier(G, f0, t, ctx)) <= 3 * s

    def test_action_conserved_without_jumps(self, f0, cloud):
        ctx = FlowContext(TransitionSchedule.jump_free(1), FrequencyField.linear([[2 * np.pi]]))
        G = trig_observable(1, [([0], [0, 0, 1], None)])
        vals = [expectation_mc(G, cloud, t, ctx)[0] for t in (0.0, 1.7, 40.0)]
        assert vals[0] == vals[1] == vals[2]

    def test_deterministic(self, ctx, G, f0):
        a = expectation_mc(G, SampleCloud.draw(f0, 500, 9), 2.2, ctx)
        b = expectation_mc(G, SampleCloud.draw(f0, 500, 9), 2.2, ctx)
        assert a == b

    def test_error_scales_like_inverse_sqrt(self, ctx, G, f0):
        errs = [expectation_mc(G, SampleCloud.draw(f0, n, 1), 0.5, ctx)[1] for n in (4000, 16000, 64000)]
        slope = np.polyfit(np.log([4000, 16000, 64000]), np.log(errs), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.05)


class TestTimeAverage:
    def test_constant(self, ctx, f0, cloud):
        c = trig_observable(1, [([0], [2.5], None)])
        for backend, kw in (("fourier", {"f0": f0}), ("mc", {"cloud": cloud})):
            for l in (1, 3):
                assert time_average(c, l, ctx, backend, **kw).value == pytest.approx(2.5, abs=1e-13)

    def test_d1_fourier_close_to_limit(self, ctx, G, f0):
        assert abs(time_average(G, 200, ctx, "fourier", f0=f0).value - D1_LIMIT) <= 2e-3

    def test_jump_free_cos_vanishes(self, f0, cloud):
        ctx = FlowContext(TransitionSchedule.jump_free(1), FrequencyField.linear([[2 * np.pi]]))
        cos = trig_observable(1, [([1], [1], None)])
        for l in (1, 5, 20):
            assert abs(time_average(cos, l, ctx, "fourier", f0=f0).value) <= 1e-14

    def test_quadrature_order_converged(self, ctx, G, f0_mod):
        a = time_average_curve(G, [5, 20], ctx, "fourier", f0=f0_mod, order=8)
        b = time_average_curve(G, [5, 20], ctx, "fourier", f0=f0_mod, order=16)
        for x, y in zip(a, b):
            assert abs(x.value - y.value) < 1e-9

    def test_single_sweep_matches_individual_runs(self, ctx, G, f0_mod):
        curve = time_average_curve(G, [3, 7], ctx, "fourier", f0=f0_mod)
        assert curve[1].value == pytest.approx(time_average(G, 7, ctx, "fourier", f0=f0_mod).value, abs=1e-14)

    def test_rejects_zero_l(self, ctx, G, f0):
        with pytest.raises(ValueError):
            time_average(G, 0, ctx, "fourier", f0=f0)


class TestConvergenceCurve:
    def test_doubling_ladder(self):
        assert doubling_ladder(200) == [10, 20, 40, 80, 160, 200]

    def test_modulated_d1_trend(self, ctx, G, f0_mod):
        limit = theoretical_limit(G, f0_mod, ctx)
        curve = convergence_curve(G, doubling_ladder(160), ctx, limit, "fourier", f0=f0_mod)
        assert curve.error_at(160) < curve.error_at(10)
        assert curve.exponent == pytest.approx(1.0, abs=0.05)

    def test_theta_independent_exact(self, ctx, f0_mod):
        G = trig_observable(1, [([0], [0, 0, 1], None)])
        limit = theoretical_limit(G, f0_mod, ctx)
        curve = convergence_curve(G, [1, 10, 40], ctx, limit, "fourier", f0=f0_mod)
        assert max(r[2] for r in curve.rows) <= 1e-8

    def test_constant_frequency_does_not_decay(self, f0):
        from conftest import d1_density
        ctx = FlowContext(TransitionSchedule(1.0, [0, 0.3, 0.7], [[0], [0.1], [-0.1]]),
                          FrequencyField.constant([0.0]))
        cos = trig_observable(1, [([1], [1], None)])
        curve = convergence_curve(cos, [10, 40, 160], ctx, 0.0, "fourier", f0=d1_density(0.5))
        assert all(r[2] == pytest.approx(0.25) for r in curve.rows)

    def test_fit_exponent(self):
        assert fit_decay_exponent([10, 100], [1.0, 0.1]) == pytest.approx(1.0)
        assert fit_decay_exponent([10, 100], [0.0, 0.0]) is None
