"""Pixel-group-profile matrices against exact rational oracles.

The reference below allocates photons to groups multinomially (with an
explicit miss category), applies each group's exact uniform kernel, and
convolves the group click counts; everything is computed in Fractions and
differs structurally from the production alternating-sum evaluation.
"""

import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from twinbeam import (
    BudgetExceededError,
    DetectorModel,
    PixelGroupProfile,
    ValidationError,
    band_profile,
    finite_pixel_matrix,
    infinite_pixel_matrix,
    profile_matrix_exact,
    profile_matrix_exponential,
    profile_matrix_infinite,
    profile_matrix_lowcount,
)

from test_detector import finite_kernel_oracle


def compositions(total, parts):
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in compositions(total - head, parts - 1):
            yield (head,) + rest


def profile_kernel_oracle(c, n, nu, tau, eta, dark):
    """P(c clicks | n photons) for grouped pixels, exact Fractions.

    Photons choose a group (or miss) multinomially with per-group
    probability nu_j * tau_j; a photon inside group j behaves like the
    uniform kernel with landing certainty and registration eta_j.
    """
    groups = len(nu)
    tau = [Fraction(t) for t in tau]
    eta = [Fraction(e) for e in eta]
    dark = [Fraction(d) for d in dark]
    hit = [nu[j] * tau[j] for j in range(groups)]
    miss = 1 - sum(hit)
    total = Fraction(0)
    for alloc in compositions(n, groups + 1):
        landed, missed = alloc[:groups], alloc[-1]
        weight = Fraction(math.factorial(n))
        for n_j, p_j in zip(alloc, hit + [miss]):
            weight *= p_j**n_j / math.factorial(n_j)
        if weight == 0:
            continue
        # convolve per-group click distributions
        click_law = {0: Fraction(1)}
        for j in range(groups):
            group_law = {
                c_j: finite_kernel_oracle(c_j, landed[j], nu[j], eta[j], dark[j])
                for c_j in range(min(nu[j], c) + 1)
            }
            click_law = {
                a + b: sum(
                    click_law.get(a2, 0) * group_law.get(b2, 0)
                    for a2 in click_law
                    for b2 in group_law
                    if a2 + b2 == a + b
                )
                for a in click_law
                for b in group_law
                if a + b <= c
            }
        total += weight * click_law.get(c, Fraction(0))
    return total


TWO_GROUPS = PixelGroupProfile(
    np.array([2, 3]),
    np.array([0.1, 0.05]),
    np.array([0.7, 0.4]),
    np.array([0.02, 0.01]),
)


class TestExactProfile:
    def test_against_multinomial_oracle(self):
        g = profile_matrix_exact(TWO_GROUPS, 4)
        nu = [2, 3]
        tau = [Fraction(1, 10), Fraction(1, 20)]
        eta = [Fraction(7, 10), Fraction(2, 5)]
        dark = [Fraction(1, 50), Fraction(1, 100)]
        for n in range(5):
            for c in range(min(5, g.c_max) + 1):
                expected = float(profile_kernel_oracle(c, n, nu, tau, eta, dark))
                assert g.values[c, n] == pytest.approx(expected, abs=1e-12), (c, n)

    def test_single_group_reduces_to_uniform(self):
        # criterion: a one-group profile is the uniform finite-pixel case
        model = DetectorModel(transmission=0.8, pixels=7, efficiency=0.45, dark_rate=0.03)
        profile = PixelGroupProfile.uniform(7, 0.45, 0.03, coverage=0.8)
        a = profile_matrix_exact(profile, 10)
        b = finite_pixel_matrix(model, 10, a.c_max)
        assert np.max(np.abs(a.values - b.values)) < 1e-10

    def test_column_defects(self):
        g = profile_matrix_exact(TWO_GROUPS, 12)
        assert g.max_covered_defect() < 1e-10

    def test_variant_tag_and_params(self):
        g = profile_matrix_exact(TWO_GROUPS, 3)
        assert g.variant == "profile-exact"
        assert g.params["pixel_counts"] == [2, 3]


class TestLowcount:
    def test_matches_exact_profile(self):
        a = profile_matrix_exact(TWO_GROUPS, 8, 4)
        b = profile_matrix_lowcount(TWO_GROUPS, 8, 4)
        assert np.max(np.abs(a.values - b.values)) < 1e-12
        assert b.variant == "profile-lowcount"

    def test_budget_guard(self):
        wide = PixelGroupProfile(
            np.array([40, 40]),
            np.array([0.01, 0.01]),
            np.array([0.5, 0.5]),
            np.array([0.05, 0.05]),
        )
        with pytest.raises(BudgetExceededError):
            profile_matrix_lowcount(wide, 60, 40)


class TestInfiniteProfile:
    def test_reduces_to_uniform_infinite(self):
        g = profile_matrix_infinite(TWO_GROUPS, 9)
        inner = infinite_pixel_matrix(TWO_GROUPS.detection_fraction, TWO_GROUPS.dark_mean, 9)
        assert np.array_equal(g.values, inner.values)
        assert g.variant == "profile-infinite"

    def test_against_literal_group_convolution(self):
        # literal story: multinomial split of registered photons over
        # groups, every registered photon fires its own pixel, per-group
        # Poisson darks; convolved over groups
        profile = TWO_GROUPS
        n = 7
        rates = profile.pixel_counts * profile.landing_probabilities * profile.efficiencies
        miss = 1.0 - rates.sum()
        c_top = 12
        column = np.zeros(c_top + 1)
        for split in product(range(n + 1), repeat=2):
            if sum(split) > n:
                continue
            m1, m2 = split
            weight = (
                math.factorial(n)
                / (math.factorial(m1) * math.factorial(m2) * math.factorial(n - m1 - m2))
                * rates[0] ** m1
                * rates[1] ** m2
                * miss ** (n - m1 - m2)
            )
            law = np.zeros(c_top + 1)
            law[min(m1 + m2, c_top)] = 1.0 if m1 + m2 <= c_top else 0.0
            darks = stats.poisson.pmf(np.arange(c_top + 1), profile.dark_mean)
            column += weight * np.convolve(law, darks)[: c_top + 1]
        g = profile_matrix_infinite(profile, n, c_top)
        assert np.allclose(g.values[:, n], column, atol=1e-12)


class TestExponentialProfile:
    def test_close_to_exact_when_weak(self):
        # the closed form double-counts photons across clicks, so its
        # error scales with (n * detection fraction)^2; keep both small
        def build(scale, n_top):
            profile = PixelGroupProfile(
                np.array([100, 100]),
                np.array([0.004 * scale, 0.002 * scale]),
                np.array([0.3, 0.2]),
                np.array([0.0005, 0.00025]),
            )
            a = profile_matrix_exact(profile, n_top, 4)
            b = profile_matrix_exponential(profile, n_top, 4)
            return np.max(np.abs(a.values - b.values))

        coarse = build(0.2, 3)
        fine = build(0.1, 2)
        assert coarse < 2e-3
        assert fine < 3e-4
        assert fine < coarse / 2

    def test_variant_tag(self):
        assert profile_matrix_exponential(TWO_GROUPS, 3).variant == "profile-exponential"


class TestBandProfile:
    def test_two_scale_image(self):
        image = np.array([[2.0, 2.0], [1.0, 1.0]])
        profile = band_profile(image, 2, 0.5, 0.01)
        assert profile.groups == 2
        assert list(profile.pixel_counts) == [2, 2]
        assert profile.coverage == pytest.approx(1.0)
        # landing proportional to intensity: bright pixels get double weight
        ratio = profile.landing_probabilities[1] / profile.landing_probabilities[0]
        assert ratio == pytest.approx(2.0)

    def test_zero_pixels_form_dark_group(self):
        image = np.array([[3.0, 0.0], [3.0, 0.0]])
        profile = band_profile(image, 3, 0.4, 0.02)
        assert profile.pixel_counts[-1] == 2
        assert profile.landing_probabilities[-1] == 0.0
        assert profile.coverage == pytest.approx(1.0)

    def test_rejects_flat_zero_image(self):
        with pytest.raises(ValidationError):
            band_profile(np.zeros((2, 2)), 2, 0.5, 0.0)


class TestValidation:
    def test_mismatched_lengths(self):
        with pytest.raises(ValidationError):
            PixelGroupProfile(np.array([2]), np.array([0.1, 0.2]), np.array([0.5]), np.array([0.0]))

    def test_overcommitted_landing(self):
        with pytest.raises(ValidationError):
            PixelGroupProfile(np.array([10]), np.array([0.2]), np.array([0.5]), np.array([0.0]))

    def test_dark_rate_below_one(self):
        with pytest.raises(ValidationError):
            PixelGroupProfile(np.array([2]), np.array([0.1]), np.array([0.5]), np.array([1.0]))


@given(
    nu=st.lists(st.integers(1, 4), min_size=1, max_size=3),
    seed=st.integers(0, 2**32 - 1),
    n_top=st.integers(0, 6),
)
@settings(max_examples=20, deadline=None)
def test_profile_columns_stochastic(nu, seed, n_top):
    rng = np.random.default_rng(seed)
    groups = len(nu)
    nu = np.array(nu)
    tau = rng.uniform(0.0, 1.0, groups)
    tau /= max(2.0 * float(nu @ tau), 1e-9)
    profile = PixelGroupProfile(nu, tau, rng.uniform(0.1, 1.0, groups), rng.uniform(0.0, 0.2, groups))
    g = profile_matrix_exact(profile, n_top)
    assert np.all(g.values >= 0.0)
    assert g.max_covered_defect() < 1e-10
