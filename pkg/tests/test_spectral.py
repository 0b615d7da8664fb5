import numpy as np
import pytest

from jumpflow.model import ActionDomain, FrequencyField, Observable, TransitionSchedule, trig_observable
from jumpflow.flow import FlowContext
from jumpflow.spectral import (ActionQuadrature, ImaginaryResidueError, ModeSet, angle_average, angle_grid,
                               coefficient_matrix, continuity_modulus, default_modes, direct_expectation,
                               expectation_fourier, fourier_coefficient, parseval_residual, summability_bound,
                               truncation_tail)

from conftest import d1_density


def exp_cos():
    return Observable(1, lambda I, th: np.exp(np.cos(th[..., 0])) * (1 + 0 * I[..., 0]), name="exp-cos")


class TestModeSet:
    def test_cube_closed_under_negation(self):
        ms = ModeSet.cube(2, 3)
        assert len(ms) == 49
        for m in ms:
            assert tuple(-v for v in m) in ms

    def test_from_modes_adds_partners(self):
        ms = ModeSet.from_modes([(2,)])
        assert (-2,) in ms


class TestQuadrature:
    def test_weights_sum_to_volume(self):
        box = ActionDomain([0.2, -1.0], [0.8, 2.0])
        q = ActionQuadrature.gauss_legendre(box, 32, [3, 2])
        assert q.weights.sum() == pytest.approx(box.volume, rel=1e-12)

    def test_angle_grid_weights(self):
        _, w = angle_grid(2, 16)
        assert w.sum() == pytest.approx((2 * np.pi) ** 2, rel=1e-14)


class TestCoefficients:
    def test_d1_observable(self, G):
        I = np.linspace(0.1, 0.9, 5)[:, None]
        np.testing.assert_allclose(fourier_coefficient(G, I, [0]).real, I[:, 0] ** 2)
        np.testing.assert_allclose(fourier_coefficient(G, I, [1]).real, I[:, 0] / 2)
        np.testing.assert_allclose(fourier_coefficient(G, I, [-1]).real, I[:, 0] / 2)
        assert np.all(fourier_coefficient(G, I, [3]) == 0)

    def test_quadrature_path_matches_exact(self, G):
        I = np.linspace(0.1, 0.9, 5)[:, None]
        modes = np.arange(-4, 5)[:, None]
        exact = coefficient_matrix(G, I, modes, 16, exact=True)
        quad = coefficient_matrix(G, I, modes, 16, exact=False)
        np.testing.assert_allclose(quad, exact, atol=1e-10)

    def test_theta_independent_has_only_mode_zero(self):
        G = trig_observable(1, [([0], [1, 2, 3], None)])
        I = np.array([[0.4]])
        for m in (1, 2, -3):
            assert fourier_coefficient(G, I, [m], exact=False)[0] == pytest.approx(0, abs=1e-14)

    @pytest.mark.parametrize("terms,expected", [
        ([([0], [0, 0, 1], None), ([1], [0, 1], None)], 0.49),
        ([([1], [1], None)], 0.0),
        ([([0], [7], None)], 7.0),
    ])
    def test_angle_average(self, terms, expected):
        G = trig_observable(1, terms)
        assert angle_average(G, [[0.7]])[0] == pytest.approx(expected, abs=1e-14)

    def test_angle_average_generic_observable(self):
        G = Observable(1, lambda I, th: I[..., 0] + np.sin(th[..., 0]) ** 2)
        assert angle_average(G, [[0.3]])[0] == pytest.approx(0.8, abs=1e-12)


class TestParseval:
    def test_cos(self):
        G = trig_observable(1, [([1], [1], None)])
        assert parseval_residual(G, [[0.5]], ModeSet.cube(1, 1))[0] <= 1e-12

    def test_constant(self):
        G = trig_observable(1, [([0], [3], None)])
        assert parseval_residual(G, [[0.5]], ModeSet.cube(1, 2))[0] <= 1e-12

    def test_analytic_function_decays(self):
        G = exp_cos()
        res = [parseval_residual(G, [[0.5]], ModeSet.cube(1, N))[0] for N in (2, 4, 8)]
        assert res[1] < res[0] / 10 and res[2] < res[1] / 10


class TestExpectation:
    def test_t0_matches_direct_quadrature(self, G, ctx):
        f0 = d1_density(0.5, 1.0)
        assert expectation_fourier(G, f0, 0.0, ctx) == pytest.approx(direct_expectation(G, f0), abs=1e-8)

    def test_t0_generic_observable(self, ctx):
        G = exp_cos()
        f0 = d1_density(0.5, 1.0)
        val = expectation_fourier(G, f0, 0.0, ctx, ModeSet.cube(1, 16))
        assert val == pytest.approx(direct_expectation(G, f0), abs=1e-8)

    def test_cos_with_uniform_angles_vanishes(self, ctx, f0):
        G = trig_observable(1, [([1], [1], None)])
        for t in (0.0, 0.45, 3.7, 101.2):
            assert expectation_fourier(G, f0, t, ctx, ModeSet.cube(1, 4)) == pytest.approx(0.0, abs=1e-14)

    def test_theta_independent_follows_shifted_marginal(self, ctx):
        G = trig_observable(1, [([0], [0, 0, 1], None)])
        f0 = d1_density(0.5, 0.3)
        for t, s in ((0.1, 0.0), (0.5, 0.1), (0.8, 0.0), (12.45, 0.1)):
            expected = 0.28 + s + s * s  # uniform moments on [0.2, 0.8]
            assert expectation_fourier(G, f0, t, ctx) == pytest.approx(expected, abs=1e-8)

    def test_imaginary_residue_rejected(self, ctx, f0):
        bad = Observable(1, lambda I, th: np.sin(th[..., 0]) * 0 + 1.0)
        bad.exact_coefficients = True
        bad.fourier_coefficient = lambda I, m: np.full(np.shape(I)[:-1], 1j if m[0] == 0 else 0.0)
        with pytest.raises(ImaginaryResidueError):
            expectation_fourier(bad, f0, 0.3, ctx, ModeSet.cube(1, 1))


class TestSummability:
    def test_trig_polynomial_stabilizes(self, G):
        f0 = d1_density(0.5, 0.0)
        assert truncation_tail(G, f0, 1) == 0.0

    def test_bounded_by_sup_times_mass(self, G):
        f0 = d1_density(0.5, 0.0)
        bound = summability_bound(G, f0, ModeSet.cube(1, 3))
        assert bound <= G.sup_bound(ActionDomain([0.2], [0.8])) * 3 / (2 * np.pi) + 1e-12

    def test_smooth_pair_tail(self):
        f0 = d1_density(0.5, 0.0)
        assert truncation_tail(exp_cos(), f0, 16) <= 1e-8

    def test_continuity_modulus_shrinks_with_refinement(self, G):
        box = ActionDomain([0.2], [0.8])
        coarse = continuity_modulus(G, [1], box, 11, shift=[0.1])
        fine = continuity_modulus(G, [1], box, 101, shift=[0.1])
        assert fine < coarse

    def test_default_modes_prune_by_density(self, G, f0):
        assert default_modes(G, f0).modes.tolist() == [[0]]
        assert len(default_modes(G, d1_density(0.5))) == 3


def test_two_dimensional_t0(ctx2):
    G = trig_observable(2, [((1, -1), [[[1, 0], 1.0]], None), ((0, 0), [[[0, 2], 1.0]], None)])
    from jumpflow.model import ProductDensity
    f0 = ProductDensity(ActionDomain([0.3, 0.4], [0.6, 0.9]), kappa=[0.4, 0.6], mu=[0.2, 1.0])
    assert expectation_fourier(G, f0, 0.0, ctx2) == pytest.approx(direct_expectation(G, f0), abs=1e-8)


def test_jump_free_classical_average(f0):
    ctx = FlowContext(TransitionSchedule.jump_free(1), FrequencyField.linear([[2 * np.pi]]))
    G = trig_observable(1, [([0], [0, 1], None)])
    assert expectation_fourier(G, f0, 17.3, ctx) == pytest.approx(0.5, abs=1e-12)
