"""Joint and one-dimensional photon/click-number distributions.

Conventions
-----------
* A joint distribution is a dense 2-D array ``values[n_s, n_i]`` over
  nonnegative signal and idler counts starting at zero; ``kind`` records
  whether the axes count photons or camera clicks.  Total mass must lie
  within ``MASS_TOLERANCE`` of one; mass may be missing because of
  truncation to a finite grid, never negative.
* A one-dimensional distribution carries an integer ``offset`` so that
  ``values[k]`` is the probability of ``offset + k``; this lets the
  photon-number difference live on negative integers.
* All statistics use natural logarithms; the convention 0*log(0) = 0
  applies throughout.

Statistics that are undefined for degenerate inputs (Fano factor of a
zero-mean distribution, correlation of a zero-variance marginal) raise
DegenerateDistributionError instead of returning NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateDistributionError, NormalizationError, ValidationError

#: Allowed deviation of the total mass from one (truncation slack).
MASS_TOLERANCE = 1e-10

Kind = Literal["photon", "click"]


def _as_probability_array(values: object, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-D array, got shape {arr.shape}")
    if arr.size == 0:
        raise ValidationError("distribution array must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("distribution contains non-finite entries")
    if np.any(arr < 0.0):
        raise ValidationError("distribution contains negative entries")
    arr.flags.writeable = False
    return arr


def _check_mass(total: float) -> None:
    if not (1.0 - MASS_TOLERANCE <= total <= 1.0 + MASS_TOLERANCE):
        raise NormalizationError(
            f"total mass {total!r} outside [1 - {MASS_TOLERANCE}, 1 + {MASS_TOLERANCE}]"
        )


@dataclass(frozen=True)
class Distribution1D:
    """Probability distribution on integers ``offset .. offset + len - 1``."""

    values: np.ndarray
    offset: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_probability_array(self.values, 1))
        object.__setattr__(self, "offset", int(self.offset))
        _check_mass(float(self.values.sum()))

    def support(self) -> np.ndarray:
        """Integer values carried by each entry of ``values``."""
        return self.offset + np.arange(self.values.size)

    def mean(self) -> float:
        return float(np.dot(self.support(), self.values))

    def variance(self) -> float:
        mu = self.mean()
        return float(np.dot((self.support() - mu) ** 2, self.values))

    def fano(self) -> float:
        """Variance-to-mean ratio; 1 for Poissonian statistics."""
        mu = self.mean()
        if mu == 0.0:
            raise DegenerateDistributionError("Fano factor undefined for zero mean")
        return self.variance() / mu

    def entropy(self) -> float:
        """Shannon entropy in nats."""
        return _entropy(self.values)


@dataclass(frozen=True)
class JointDistribution:
    """Joint distribution of signal (axis 0) and idler (axis 1) counts."""

    values: np.ndarray
    kind: Kind = "photon"

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _as_probability_array(self.values, 2))
        if self.kind not in ("photon", "click"):
            raise ValidationError(f"kind must be 'photon' or 'click', got {self.kind!r}")
        _check_mass(float(self.values.sum()))

    @property
    def n_max_signal(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_max_idler(self) -> int:
        return self.values.shape[1] - 1

    def marginals(self) -> tuple[Distribution1D, Distribution1D]:
        return (
            Distribution1D(self.values.sum(axis=1)),
            Distribution1D(self.values.sum(axis=0)),
        )

    def moment(self, k: int, l: int) -> float:
        """Raw moment <n_s^k * n_i^l>."""
        if k < 0 or l < 0:
            raise ValidationError("moment orders must be nonnegative")
        ns = np.arange(self.values.shape[0], dtype=float) ** k
        ni = np.arange(self.values.shape[1], dtype=float) ** l
        return float(ns @ self.values @ ni)

    def covariance(self) -> float:
        """Central mixed moment <dn_s * dn_i>."""
        # shifted form: the raw-moment difference cancels catastrophically
        # for sharply peaked tables
        ds = np.arange(self.values.shape[0], dtype=float) - self.moment(1, 0)
        di = np.arange(self.values.shape[1], dtype=float) - self.moment(0, 1)
        return float(ds @ self.values @ di)

    def covariance_coefficient(self) -> float:
        """Correlation coefficient of the two counts, in [-1, 1]."""
        sig, idl = self.marginals()
        scale = np.sqrt(sig.variance()) * np.sqrt(idl.variance())
        if scale == 0.0:
            raise DegenerateDistributionError(
                "covariance coefficient undefined for a zero-variance marginal"
            )
        return self.covariance() / scale

    def entropy(self) -> float:
        """Shannon entropy in nats."""
        return _entropy(self.values)


def _entropy(values: np.ndarray) -> float:
    positive = values[values > 0.0]
    return float(-np.dot(positive, np.log(positive)))


def sum_diff_distributions(joint: JointDistribution) -> tuple[Distribution1D, Distribution1D]:
    """Distributions of the count sum and the count difference.

    Returns ``(p_plus, p_minus)`` where ``p_plus`` lives on
    ``0 .. n_max_signal + n_max_idler`` and ``p_minus`` on
    ``-n_max_idler .. n_max_signal`` (offset ``-n_max_idler``).  Mass is
    redistributed exactly: both outputs sum to the input total bit for bit.
    """
    n_s, n_i = joint.values.shape
    ns = np.arange(n_s)[:, None]
    ni = np.arange(n_i)[None, :]
    flat = joint.values.ravel()
    p_plus = np.bincount((ns + ni).ravel(), weights=flat, minlength=n_s + n_i - 1)
    p_minus = np.bincount((ns - ni + n_i - 1).ravel(), weights=flat, minlength=n_s + n_i - 1)
    return (
        Distribution1D(p_plus, offset=0),
        Distribution1D(p_minus, offset=-(n_i - 1)),
    )


def noise_reduction_factor(joint: JointDistribution) -> float:
    """Variance of the count difference over the summed means.

    Values below one indicate correlations stronger than any uncorrelated
    classical (Poissonian) pair of beams.
    """
    sig, idl = joint.marginals()
    denominator = sig.mean() + idl.mean()
    if denominator == 0.0:
        raise DegenerateDistributionError(
            "noise reduction factor undefined for zero total mean"
        )
    diff_var = sig.variance() + idl.variance() - 2.0 * joint.covariance()
    return diff_var / denominator


def classical_violation_mask(joint: JointDistribution) -> np.ndarray:
    """Elementwise test against the classical product-Poisson envelope.

    Entry (n_s, n_i) is True when p(n_s, n_i) strictly exceeds
    ``Poisson(n_s; <n_s>) * Poisson(n_i; <n_i>)`` built from the marginal
    means, the bound obeyed by every classical (nonnegative
    Glauber-Sudarshan) field.  Evaluated in log space with a small relative
    slack: a field sitting exactly on the bound (product Poisson) must not
    be flagged through rounding of the tail terms.  Zero probabilities
    never violate.
    """
    sig, idl = joint.marginals()
    log_envelope = _log_poisson(joint.values.shape[0], sig.mean())[:, None] + _log_poisson(
        joint.values.shape[1], idl.mean()
    )[None, :]
    mask = np.zeros(joint.values.shape, dtype=bool)
    positive = joint.values > 0.0
    with np.errstate(divide="ignore"):
        mask[positive] = np.log(joint.values[positive]) > log_envelope[positive] + 1e-9
    return mask


def _log_poisson(length: int, mean: float) -> np.ndarray:
    n = np.arange(length, dtype=float)
    if mean == 0.0:
        out = np.full(length, -np.inf)
        out[0] = 0.0
        return out
    return n * np.log(mean) - gammaln(n + 1.0) - mean
