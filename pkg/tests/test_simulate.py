"""Monte Carlo click sampler against analytic transfer-matrix columns."""

import numpy as np
import pytest
from scipy import stats

from twinbeam import (
    DetectorModel,
    FrameSample,
    JointDistribution,
    PixelGroupProfile,
    SimConfig,
    ValidationError,
    bernoulli_matrix,
    empirical_histogram,
    finite_pixel_matrix,
    improved_intense_matrix,
    profile_matrix_exact,
    simulate_clicks,
    simulate_occupancy_clicks,
)
from twinbeam.simulate import forward


def delta_joint(n_s, n_i, top):
    table = np.zeros((top + 1, top + 1))
    table[n_s, n_i] = 1.0
    return JointDistribution(table, kind="photon")


def column_z_scores(counts, expected, trials):
    """Worst z-score of observed category counts against an exact law."""
    observed = np.bincount(counts, minlength=expected.size)[: expected.size]
    se = np.sqrt(np.maximum(expected * (1.0 - expected) * trials, 1e-300))
    return np.max(np.abs(observed - expected * trials) / se)


class TestForward:
    def test_identity(self):
        p = JointDistribution(np.diag([0.3, 0.3, 0.4]), kind="photon")
        eye = bernoulli_matrix(1.0, 2)
        out = forward(p, eye, eye)
        assert np.allclose(out.values, p.values, atol=0)
        assert out.kind == "click"

    def test_shape_mismatch(self):
        p = JointDistribution(np.diag([0.5, 0.5]), kind="photon")
        with pytest.raises(ValidationError):
            forward(p, bernoulli_matrix(1.0, 4), bernoulli_matrix(1.0, 1))


class TestSimulateClicks:
    MODEL = DetectorModel(transmission=0.7, pixels=4, efficiency=0.55, dark_rate=0.03)

    def test_vacuum_frames(self):
        hist, counts = simulate_clicks(
            delta_joint(0, 0, 1),
            DetectorModel(1.0, 4, 0.5, 0.0),
            DetectorModel(1.0, 4, 0.5, 0.0),
            SimConfig(trials=500, seed=1),
        )
        assert np.all(counts == 0)
        assert hist.values[0, 0] == 1.0

    def test_deterministic_given_seed(self):
        p = delta_joint(3, 2, 4)
        config = SimConfig(trials=4000, seed=42)
        _, a = simulate_clicks(p, self.MODEL, self.MODEL, config)
        _, b = simulate_clicks(p, self.MODEL, self.MODEL, config)
        assert np.array_equal(a, b)
        _, c = simulate_clicks(p, self.MODEL, self.MODEL, SimConfig(trials=4000, seed=43))
        assert not np.array_equal(a, c)

    def test_matches_finite_kernel(self):
        trials = 60000
        p = delta_joint(5, 0, 6)
        _, counts = simulate_clicks(p, self.MODEL, self.MODEL, SimConfig(trials=trials, seed=9))
        g = finite_pixel_matrix(self.MODEL, 6)
        assert column_z_scores(counts[:, 0], g.values[:, 5], trials) < 5.0

    def test_poisson_total_darks_can_exceed_pixels(self):
        model = DetectorModel(transmission=1.0, pixels=2, efficiency=0.1, dark_rate=0.9)
        _, counts = simulate_clicks(
            delta_joint(0, 0, 1),
            model,
            model,
            SimConfig(trials=3000, seed=3, dark_model="poisson-total"),
        )
        assert counts.max() > 2  # Poisson(1.8) spills past the pixel count

    def test_per_pixel_darks_capped_at_pixels(self):
        model = DetectorModel(transmission=1.0, pixels=2, efficiency=0.1, dark_rate=0.9)
        _, counts = simulate_clicks(
            delta_joint(0, 0, 1), model, model, SimConfig(trials=3000, seed=3)
        )
        assert counts.max() <= 2

    def test_profile_weighted_matches_profile_kernel(self):
        profile = PixelGroupProfile(
            np.array([3, 5]),
            np.array([0.08, 0.04]),
            np.array([0.6, 0.3]),
            np.array([0.02, 0.05]),
        )
        trials = 60000
        n = 4
        _, counts = simulate_clicks(
            delta_joint(n, 0, n),
            DetectorModel(1.0, 8, 1.0, 0.0),
            DetectorModel(1.0, 8, 1.0, 0.0),
            SimConfig(trials=trials, seed=17, pixel_assignment="profile-weighted"),
            profile_signal=profile,
            profile_idler=profile,
        )
        g = profile_matrix_exact(profile, n, 8)
        assert column_z_scores(counts[:, 0], g.values[:, n], trials) < 5.0

    def test_profile_assignment_requires_profiles(self):
        with pytest.raises(ValidationError):
            simulate_clicks(
                delta_joint(1, 1, 1),
                self.MODEL,
                self.MODEL,
                SimConfig(trials=10, seed=0, pixel_assignment="profile-weighted"),
            )


class TestOccupancySimulator:
    def test_matches_improved_intense_column(self):
        model = DetectorModel(transmission=0.8, pixels=5, efficiency=0.6, dark_rate=0.02)
        trials = 60000
        n = 6
        _, counts = simulate_occupancy_clicks(
            delta_joint(n, 0, n), model, model, SimConfig(trials=trials, seed=23)
        )
        g = improved_intense_matrix(model, n)
        assert column_z_scores(counts[:, 0], g.values[: counts[:, 0].max() + 2, n], trials) < 5.0


class TestEmpiricalHistogram:
    def test_from_array_and_samples(self):
        frames = np.array([[0, 0], [1, 2], [1, 2], [3, 0]])
        hist_a, table_a = empirical_histogram(frames)
        hist_b, table_b = empirical_histogram([FrameSample(*row) for row in frames])
        assert np.array_equal(table_a, table_b)
        assert table_a[1, 2] == 2
        assert hist_a.values[1, 2] == pytest.approx(0.5)
        assert hist_a.kind == "click"

    def test_rejects_bad_input(self):
        with pytest.raises(ValidationError):
            empirical_histogram(np.empty((0, 2), dtype=int))
        with pytest.raises(ValidationError):
            empirical_histogram(np.array([[1, -1]]))
        with pytest.raises(ValidationError):
            empirical_histogram(np.array([[1, 2, 3]]))


class TestConfigValidation:
    def test_bad_trials(self):
        with pytest.raises(ValidationError):
            SimConfig(trials=0)

    def test_bad_modes(self):
        with pytest.raises(ValidationError):
            SimConfig(trials=10, pixel_assignment="nope")
        with pytest.raises(ValidationError):
            SimConfig(trials=10, dark_model="nope")

    def test_frame_sample_nonnegative(self):
        with pytest.raises(ValidationError):
            FrameSample(-1, 0)
