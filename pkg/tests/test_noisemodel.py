"""Noise-model tests.

Oracles come first: the negative-binomial pmf is retyped from the
log-gamma form, and click moments are cross-checked by pushing the
photon-number model through detector matrices and reading the moments
off the resulting table, an entirely different code path from the
closed forms under test.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twinbeam.detector import infinite_pixel_matrix
from twinbeam.distributions import JointDistribution, sum_diff_distributions
from twinbeam.errors import FitInfeasibleError, NormalizationError, ValidationError
from twinbeam.noisemodel import (
    FitOptions,
    FitParams,
    fit,
    model_distribution,
    model_noise_reduction,
    multimode_thermal,
    predicted_click_distribution,
    predicted_click_moments,
)
from twinbeam.simulate import forward


def thermal_pmf_oracle(modes, occupation, n):
    if occupation == 0.0:
        return 1.0 if n == 0 else 0.0
    log_p = (
        math.lgamma(n + modes)
        - math.lgamma(n + 1)
        - math.lgamma(modes)
        + n * math.log(occupation / (1.0 + occupation))
        - modes * math.log(1.0 + occupation)
    )
    return math.exp(log_p)


def model_table_oracle(params, n_max):
    table = np.zeros((n_max + 1, n_max + 1))
    for k in range(n_max + 1):
        pair = thermal_pmf_oracle(params.m_p, params.b_p, k)
        for extra_s in range(n_max + 1 - k):
            for extra_i in range(n_max + 1 - k):
                table[k + extra_s, k + extra_i] += (
                    pair
                    * thermal_pmf_oracle(params.m_S, params.b_S, extra_s)
                    * thermal_pmf_oracle(params.m_I, params.b_I, extra_i)
                )
    return table


def click_moments_oracle(params, n_max, c_max):
    # independent route: photon model -> detector matrices -> table moments
    p = model_distribution(params, n_max)
    gs = infinite_pixel_matrix(params.tau_S, params.D_S, n_max, c_max)
    gi = infinite_pixel_matrix(params.tau_I, params.D_I, n_max, c_max)
    f = forward(p, gs, gi)
    return (
        f.moment(1, 0),
        f.moment(0, 1),
        f.moment(2, 0) - f.moment(1, 0) ** 2,
        f.moment(0, 2) - f.moment(0, 1) ** 2,
        f.covariance(),
    )


SMALL = FitParams(m_p=2.0, b_p=0.3, m_S=1.5, b_S=0.2, m_I=0.8, b_I=0.4, tau_S=0.35, tau_I=0.55, D_S=0.2, D_I=0.1)

REFERENCE = FitParams(m_p=628.0, b_p=0.066, m_S=0.46, b_S=0.173, m_I=0.018, b_I=2.32, tau_S=0.207, tau_I=0.205)


class TestMultimodeThermal:
    def test_matches_log_gamma_oracle(self):
        dist = multimode_thermal(3.2, 0.7, 40)
        expected = [thermal_pmf_oracle(3.2, 0.7, n) for n in range(41)]
        np.testing.assert_allclose(dist.values, expected, atol=1e-14)

    def test_single_mode_is_geometric(self):
        dist = multimode_thermal(1.0, 1.0, 45)
        expected = [2.0 ** -(n + 1) for n in range(46)]
        np.testing.assert_allclose(dist.values, expected, rtol=1e-12)

    def test_zero_occupation_is_vacuum(self):
        dist = multimode_thermal(4.0, 0.0, 5)
        assert dist.values[0] == 1.0
        assert dist.values[1:].sum() == 0.0

    def test_moments(self):
        modes, occupation = 5.0, 0.6
        dist = multimode_thermal(modes, occupation, 60)
        assert dist.mean() == pytest.approx(modes * occupation, rel=1e-12)
        assert dist.variance() == pytest.approx(modes * occupation * (1.0 + occupation), rel=1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValidationError):
            multimode_thermal(2.0, -0.1, 10)
        with pytest.raises(ValidationError):
            multimode_thermal(0.0, 0.5, 10)
        with pytest.raises(ValidationError):
            multimode_thermal(2.0, 0.5, -1)

    def test_truncation_loss_is_rejected(self):
        with pytest.raises(NormalizationError):
            multimode_thermal(10.0, 2.0, 8)

    @settings(max_examples=30, deadline=None)
    @given(
        modes=st.floats(0.1, 50.0),
        occupation=st.floats(0.01, 3.0),
    )
    def test_mean_property(self, modes, occupation):
        mean = modes * occupation
        spread = math.sqrt(modes * occupation * (1.0 + occupation))
        n_max = int(math.ceil(mean + 20.0 * spread)) + 25
        dist = multimode_thermal(modes, occupation, n_max)
        assert dist.mean() == pytest.approx(mean, rel=1e-6)


class TestModelDistribution:
    def test_matches_convolution_oracle(self):
        p = model_distribution(SMALL, 24)
        np.testing.assert_allclose(p.values, model_table_oracle(SMALL, 24), atol=1e-14)

    def test_moments(self):
        p = model_distribution(SMALL, 60)
        pair_mean = SMALL.m_p * SMALL.b_p
        assert p.moment(1, 0) == pytest.approx(pair_mean + SMALL.m_S * SMALL.b_S, rel=1e-10)
        assert p.moment(0, 1) == pytest.approx(pair_mean + SMALL.m_I * SMALL.b_I, rel=1e-10)
        # only the paired component correlates the arms
        assert p.covariance() == pytest.approx(pair_mean * (1.0 + SMALL.b_p), rel=1e-10)

    def test_automatic_grid_matches_explicit(self):
        auto = model_distribution(SMALL)
        wide = model_distribution(SMALL, auto.n_max_signal + 15)
        top = auto.n_max_signal + 1
        np.testing.assert_allclose(auto.values, wide.values[:top, :top], atol=1e-13)

    def test_pure_pair_is_diagonal(self):
        params = FitParams(m_p=3.0, b_p=0.25, m_S=0.0, b_S=0.0, m_I=0.0, b_I=0.0)
        p = model_distribution(params, 30)
        off_diagonal = p.values - np.diag(np.diag(p.values))
        assert np.abs(off_diagonal).max() == 0.0


class TestClickMoments:
    def test_closed_form_matches_matrix_forward(self):
        expected = click_moments_oracle(SMALL, n_max=45, c_max=30)
        np.testing.assert_allclose(predicted_click_moments(SMALL), expected, rtol=1e-10)

    def test_unit_efficiency_without_dark_reproduces_photon_moments(self):
        bare = FitParams(m_p=2.0, b_p=0.3, m_S=1.5, b_S=0.2, m_I=0.8, b_I=0.4)
        mean_s, mean_i, var_s, var_i, cov = predicted_click_moments(bare)
        p = model_distribution(bare, 60)
        assert mean_s == pytest.approx(p.moment(1, 0), rel=1e-10)
        assert mean_i == pytest.approx(p.moment(0, 1), rel=1e-10)
        assert var_s == pytest.approx(p.moment(2, 0) - p.moment(1, 0) ** 2, rel=1e-9)
        assert var_i == pytest.approx(p.moment(0, 2) - p.moment(0, 1) ** 2, rel=1e-9)
        assert cov == pytest.approx(p.covariance(), rel=1e-9)

    def test_predicted_distribution_agrees_with_moments(self):
        f = predicted_click_distribution(SMALL)
        mean_s, mean_i, var_s, var_i, cov = predicted_click_moments(SMALL)
        assert f.moment(1, 0) == pytest.approx(mean_s, rel=1e-9)
        assert f.moment(0, 1) == pytest.approx(mean_i, rel=1e-9)
        assert f.covariance() == pytest.approx(cov, rel=1e-8)


class TestNoiseReduction:
    def test_matches_distribution_definition(self):
        # R from the closed form against var(n_S - n_I) / (mean_S + mean_I)
        # computed straight off the photon table
        p = model_distribution(SMALL, 60)
        _, diff = sum_diff_distributions(p)
        expected = diff.variance() / (p.moment(1, 0) + p.moment(0, 1))
        assert model_noise_reduction(SMALL) == pytest.approx(expected, rel=1e-9)

    def test_pure_pair_is_noiseless(self):
        params = FitParams(m_p=3.0, b_p=0.25, m_S=0.0, b_S=0.0, m_I=0.0, b_I=0.0)
        assert model_noise_reduction(params) == 0.0

    def test_zero_mean_rejected(self):
        params = FitParams(m_p=0.0, b_p=0.0, m_S=0.0, b_S=0.0, m_I=0.0, b_I=0.0)
        with pytest.raises(ValidationError):
            model_noise_reduction(params)


class TestReferenceSet:
    """Published figures for the fitted twin-beam data set."""

    def test_photon_statistics(self):
        p = model_distribution(REFERENCE)
        sig, idl = p.marginals()
        assert sig.mean() == pytest.approx(41.52758, abs=1e-4)
        assert idl.mean() == pytest.approx(41.48976, abs=1e-4)
        assert sig.fano() == pytest.approx(1.066, abs=5e-4)
        assert idl.fano() == pytest.approx(1.068, abs=5e-4)
        assert p.covariance_coefficient() == pytest.approx(0.997, abs=5e-4)

    def test_noise_reduction(self):
        # the printed 0.028 disagrees with the quoted parameters by a factor
        # of ten; the closed form from the parameters gives 0.0028
        assert model_noise_reduction(REFERENCE) == pytest.approx(0.002794, abs=1e-5)


class TestFitParamsValidation:
    def test_negative_values_rejected(self):
        with pytest.raises(ValidationError):
            FitParams(m_p=-1.0, b_p=0.1, m_S=0.0, b_S=0.0, m_I=0.0, b_I=0.0)

    def test_occupation_without_modes_rejected(self):
        with pytest.raises(ValidationError):
            FitParams(m_p=0.0, b_p=0.1, m_S=0.0, b_S=0.0, m_I=0.0, b_I=0.0)

    def test_efficiency_range(self):
        with pytest.raises(ValidationError):
            FitParams(m_p=1.0, b_p=0.1, m_S=0.0, b_S=0.0, m_I=0.0, b_I=0.0, tau_S=0.0)
        with pytest.raises(ValidationError):
            FitParams(m_p=1.0, b_p=0.1, m_S=0.0, b_S=0.0, m_I=0.0, b_I=0.0, tau_I=1.2)

    def test_as_params_round_trip(self):
        rebuilt = FitParams(**SMALL.as_params())
        assert rebuilt == SMALL


class TestFitOptionsValidation:
    def test_bad_bounds(self):
        with pytest.raises(ValidationError):
            FitOptions(pair_mode_bounds=(10.0, 1.0))
        with pytest.raises(ValidationError):
            FitOptions(noise_mode_bounds=(0.0, 1.0))

    def test_bad_densities_and_darks(self):
        with pytest.raises(ValidationError):
            FitOptions(coarse_per_decade=0)
        with pytest.raises(ValidationError):
            FitOptions(dark_signal=-0.1)
        with pytest.raises(ValidationError):
            FitOptions(moment_rtol=0.0)
        with pytest.raises(ValidationError):
            FitOptions(click_ceiling=0)


class TestFit:
    def test_round_trip_moments(self):
        truth = FitParams(m_p=20.0, b_p=0.1, m_S=0.5, b_S=0.3, m_I=0.4, b_I=0.2, tau_S=0.6, tau_I=0.5)
        f = predicted_click_distribution(truth)
        opts = FitOptions(
            pair_mode_bounds=(5.0, 80.0),
            noise_mode_bounds=(0.05, 5.0),
            coarse_per_decade=4,
            refine_per_decade=10,
        )
        params, diagnostics = fit(f, opts)
        target = np.array(diagnostics.empirical_moments)
        achieved = np.array(predicted_click_moments(params))
        assert np.max(np.abs(achieved - target) / np.abs(target)) < 1e-6
        assert diagnostics.candidates_evaluated > 0
        assert np.isfinite(diagnostics.entropy)
        assert diagnostics.landscape.shape[1] == 4
        assert diagnostics.noise_reduction >= 0.0

    def test_uncorrelated_histogram_infeasible(self):
        from scipy.stats import poisson

        column = poisson.pmf(np.arange(15), 2.0)
        column /= column.sum()
        f = JointDistribution(np.outer(column, column), kind="click")
        with pytest.raises(FitInfeasibleError):
            fit(f)

    def test_excessive_dark_infeasible(self):
        truth = FitParams(m_p=20.0, b_p=0.1, m_S=0.5, b_S=0.3, m_I=0.4, b_I=0.2, tau_S=0.6, tau_I=0.5)
        f = predicted_click_distribution(truth)
        with pytest.raises(FitInfeasibleError):
            fit(f, FitOptions(dark_signal=10.0, dark_idler=10.0))

    def test_degenerate_histogram_infeasible(self):
        f = JointDistribution(np.array([[1.0, 0.0], [0.0, 0.0]]), kind="click")
        with pytest.raises(FitInfeasibleError):
            fit(f)
