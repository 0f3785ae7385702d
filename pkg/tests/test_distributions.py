import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from twinbeam import (
    DegenerateDistributionError,
    Distribution1D,
    JointDistribution,
    NormalizationError,
    ValidationError,
    classical_violation_mask,
    noise_reduction_factor,
    sum_diff_distributions,
)


def poisson_values(mean, top):
    return stats.poisson.pmf(np.arange(top + 1), mean)


def normalized(table):
    table = np.asarray(table, dtype=float)
    return table / table.sum()


class TestDistribution1D:
    def test_poisson_moments(self):
        d = Distribution1D(poisson_values(3.0, 60))
        assert d.mean() == pytest.approx(3.0, abs=1e-12)
        assert d.variance() == pytest.approx(3.0, abs=1e-10)
        assert d.fano() == pytest.approx(1.0, abs=1e-10)

    def test_uniform_entropy(self):
        d = Distribution1D(np.full(8, 0.125))
        assert d.entropy() == pytest.approx(np.log(8.0), abs=1e-14)

    def test_offset_support(self):
        d = Distribution1D([0.25, 0.5, 0.25], offset=-1)
        assert list(d.support()) == [-1, 0, 1]
        assert d.mean() == pytest.approx(0.0, abs=1e-15)
        assert d.variance() == pytest.approx(0.5)

    def test_mass_tolerance(self):
        Distribution1D([1.0 - 5e-11])
        with pytest.raises(NormalizationError):
            Distribution1D([1.0 - 1e-6])
        with pytest.raises(NormalizationError):
            Distribution1D([1.0 + 1e-6])

    def test_negative_entries_rejected(self):
        with pytest.raises(ValidationError):
            Distribution1D([1.1, -0.1])

    def test_zero_mean_fano_degenerate(self):
        d = Distribution1D([1.0])
        with pytest.raises(DegenerateDistributionError):
            d.fano()


class TestJointDistribution:
    def test_marginals_of_product(self):
        a = poisson_values(1.5, 40)
        b = poisson_values(0.7, 40)
        joint = JointDistribution(np.outer(a, b), kind="photon")
        sig, idl = joint.marginals()
        assert np.allclose(sig.values, a, atol=1e-15)
        assert np.allclose(idl.values, b, atol=1e-15)
        assert joint.covariance() == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_moments(self):
        # p(0,0)=.1 p(0,1)=.2 p(1,0)=.3 p(1,1)=.4
        joint = JointDistribution([[0.1, 0.2], [0.3, 0.4]], kind="photon")
        assert joint.moment(1, 0) == pytest.approx(0.7)
        assert joint.moment(0, 1) == pytest.approx(0.6)
        assert joint.moment(1, 1) == pytest.approx(0.4)
        assert joint.covariance() == pytest.approx(0.4 - 0.7 * 0.6)

    def test_diagonal_is_fully_correlated(self):
        joint = JointDistribution(np.diag([0.5, 0.3, 0.2]), kind="photon")
        assert joint.covariance_coefficient() == pytest.approx(1.0, abs=1e-12)
        assert noise_reduction_factor(joint) == pytest.approx(0.0, abs=1e-15)

    def test_zero_variance_marginal_degenerate(self):
        joint = JointDistribution([[0.5, 0.5]], kind="photon")
        with pytest.raises(DegenerateDistributionError):
            joint.covariance_coefficient()

    def test_kind_recorded(self):
        joint = JointDistribution([[1.0]], kind="click")
        assert joint.kind == "click"


class TestSumDiff:
    def test_hand_case(self):
        joint = JointDistribution([[0.1, 0.2], [0.3, 0.4]], kind="photon")
        p_plus, p_minus = sum_diff_distributions(joint)
        # brute-force reference
        plus = np.zeros(3)
        minus = np.zeros(3)
        for ns in range(2):
            for ni in range(2):
                plus[ns + ni] += joint.values[ns, ni]
                minus[ns - ni + 1] += joint.values[ns, ni]
        assert np.allclose(p_plus.values, plus, atol=0)
        assert np.allclose(p_minus.values, minus, atol=0)
        assert p_minus.offset == -1
        assert list(p_minus.support()) == [-1, 0, 1]

    def test_diagonal_sum_even_only(self):
        joint = JointDistribution(np.diag([0.5, 0.3, 0.2]), kind="photon")
        p_plus, p_minus = sum_diff_distributions(joint)
        assert np.all(p_plus.values[1::2] == 0.0)
        assert p_minus.values[p_minus.support() != 0].sum() == 0.0


class TestNoiseReduction:
    def test_product_poisson_is_unity(self):
        a = poisson_values(2.0, 50)
        joint = JointDistribution(np.outer(a, a), kind="photon")
        assert noise_reduction_factor(joint) == pytest.approx(1.0, abs=1e-10)

    def test_vacuum_degenerate(self):
        joint = JointDistribution([[1.0]], kind="photon")
        with pytest.raises(DegenerateDistributionError):
            noise_reduction_factor(joint)


class TestViolationMask:
    def test_product_poisson_never_violates(self):
        a = poisson_values(2.0, 40)
        joint = JointDistribution(np.outer(a, a), kind="photon")
        assert not classical_violation_mask(joint).any()

    def test_diagonal_pair_field_violates(self):
        joint = JointDistribution(np.diag(normalized(poisson_values(2.0, 30))), kind="photon")
        mask = classical_violation_mask(joint)
        assert mask.any()
        # compare one flagged cell against the envelope directly
        sig, idl = joint.marginals()
        ns, ni = np.argwhere(mask)[0]
        envelope = stats.poisson.pmf(ns, sig.mean()) * stats.poisson.pmf(ni, idl.mean())
        assert joint.values[ns, ni] > envelope

    def test_zero_cells_never_flagged(self):
        joint = JointDistribution(np.diag([0.5, 0.5]), kind="photon")
        mask = classical_violation_mask(joint)
        assert not mask[0, 1] and not mask[1, 0]


joint_tables = arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(1, 6)),
    elements=st.floats(0.0, 1.0, allow_nan=False),
).filter(lambda t: t.sum() > 1e-3)


@given(joint_tables)
@settings(max_examples=60, deadline=None)
def test_marginal_moments_consistent(table):
    joint = JointDistribution(normalized(table), kind="photon")
    sig, idl = joint.marginals()
    assert joint.moment(1, 0) == pytest.approx(sig.mean(), rel=1e-12, abs=1e-12)
    assert joint.moment(0, 1) == pytest.approx(idl.mean(), rel=1e-12, abs=1e-12)


@given(joint_tables)
@settings(max_examples=60, deadline=None)
def test_sum_diff_preserve_mass_and_mean(table):
    joint = JointDistribution(normalized(table), kind="photon")
    p_plus, p_minus = sum_diff_distributions(joint)
    sig, idl = joint.marginals()
    assert p_plus.values.sum() == pytest.approx(1.0, abs=1e-12)
    assert p_minus.values.sum() == pytest.approx(1.0, abs=1e-12)
    assert p_plus.mean() == pytest.approx(sig.mean() + idl.mean(), rel=1e-9, abs=1e-12)
    assert p_minus.mean() == pytest.approx(sig.mean() - idl.mean(), rel=1e-9, abs=1e-12)


@given(joint_tables)
@settings(max_examples=60, deadline=None)
def test_covariance_coefficient_bounded(table):
    joint = JointDistribution(normalized(table), kind="photon")
    try:
        coefficient = joint.covariance_coefficient()
    except DegenerateDistributionError:
        return
    assert abs(coefficient) <= 1.0 + 1e-9
