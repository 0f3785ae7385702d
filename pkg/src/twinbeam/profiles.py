"""Transfer matrices for cameras with an inhomogeneous illumination profile.

The region of interest is split into groups of macro-pixels, each group
uniformly illuminated: group ``j`` holds ``nu_j`` pixels, a photon lands on
any single one of them with probability ``tau_j``, is registered there with
efficiency ``eta_j``, and every pixel of the group dark-counts with
probability ``d_j`` per frame.  ``sum(nu_j * tau_j)`` is the probability of
hitting the camera at all and may fall below one when geometric losses are
not folded into an upstream loss stage.

Four builders mirror the uniform-illumination variants:

* ``profile_matrix_exact``        exact kernel, extended precision.
* ``profile_matrix_infinite``     many-pixels-per-group limit.
* ``profile_matrix_exponential``  weak-count closed form, plain floats.
* ``profile_matrix_lowcount``     exact kernel organised by click positions,
                                  affordable for small click numbers.

``band_profile`` builds the group decomposition from a measured intensity
image by slicing the intensity range into equal bands.

The exact kernel is evaluated through the same alternating-sum machinery as
the uniform case.  Grouping terms by the total number ``L`` of
photon-induced clicks turns the multi-group sum into

    G(c, n) = sum_L (-1)^(c-L) C(N-L, c-L) S_L(n),
    S_L(n)  = sum over allocations l of L clicks to groups of
              [prod_k C(nu_k, l_k) (1-d_k)^(nu_k-l_k)] * base(l)^n,
    base(l) = 1 - sum_k nu_k tau_k eta_k + sum_k l_k tau_k eta_k,

where the inner sums are positive and all cancellation is confined to the
outer, binomially weighted sum.  The allocation sum over fixed ``L`` uses
the Vandermonde collapse of the per-group click multiplicities, which keeps
the term count polynomial in the click ceiling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
import numpy as np
from scipy.special import gammaln, xlogy

from .detector import (
    DEFAULT_DEFECT_TOL,
    DEFAULT_TAIL_EPS,
    MIN_DIGITS,
    TransferMatrix,
    _check_count,
    _check_probability,
    _dark_margin,
    _support_ceiling,
    infinite_pixel_matrix,
)
from .errors import BudgetExceededError, PrecisionExhaustedError, ValidationError

#: Hard ceiling on the number of alternating-sum terms an exact profile
#: build may evaluate, summed over all columns.
TERM_BUDGET = 10_000_000

_LOG2_10 = math.log2(10.0)
_LN10 = math.log(10.0)


@dataclass(frozen=True)
class PixelGroupProfile:
    """Per-group camera description: pixel counts, landing, efficiency, dark rate.

    ``landing_probabilities[j]`` is the probability that one photon of the
    beam impinges on one particular pixel of group ``j``; the per-group hit
    probability is therefore ``nu_j * tau_j``.
    """

    pixel_counts: np.ndarray
    landing_probabilities: np.ndarray
    efficiencies: np.ndarray
    dark_rates: np.ndarray

    def __post_init__(self) -> None:
        nu = np.atleast_1d(np.asarray(self.pixel_counts))
        tau = np.atleast_1d(np.asarray(self.landing_probabilities, dtype=float))
        eta = np.atleast_1d(np.asarray(self.efficiencies, dtype=float))
        dark = np.atleast_1d(np.asarray(self.dark_rates, dtype=float))
        if not (nu.shape == tau.shape == eta.shape == dark.shape) or nu.ndim != 1 or nu.size == 0:
            raise ValidationError("profile arrays must be equal-length non-empty 1-D sequences")
        if not np.issubdtype(nu.dtype, np.integer) or np.any(nu < 1):
            raise ValidationError("pixel counts must be positive integers")
        for name, arr in (("landing probability", tau), ("efficiency", eta), ("dark rate", dark)):
            if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
                raise ValidationError(f"per-group {name} entries must lie in [0, 1]")
        if np.any(dark >= 1.0):
            raise ValidationError("per-group dark rates must lie below 1")
        coverage = float(nu @ tau)
        if coverage > 1.0 + 1e-12:
            raise ValidationError(
                f"total landing probability sum(nu*tau) = {coverage!r} exceeds 1"
            )
        for name, arr in (
            ("pixel_counts", nu.astype(int)),
            ("landing_probabilities", tau),
            ("efficiencies", eta),
            ("dark_rates", dark),
        ):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def groups(self) -> int:
        return self.pixel_counts.size

    @property
    def pixels(self) -> int:
        return int(self.pixel_counts.sum())

    @property
    def coverage(self) -> float:
        """Probability that a photon lands anywhere on the camera."""
        return float(self.pixel_counts @ self.landing_probabilities)

    @property
    def detection_fraction(self) -> float:
        """Probability that a photon lands on a pixel and is registered."""
        return float(
            self.pixel_counts @ (self.landing_probabilities * self.efficiencies)
        )

    @property
    def miss_probability(self) -> float:
        """Probability that a photon causes no click anywhere."""
        return 1.0 - self.detection_fraction

    @property
    def group_dark_means(self) -> np.ndarray:
        return self.pixel_counts * self.dark_rates

    @property
    def dark_mean(self) -> float:
        return float(self.group_dark_means.sum())

    @classmethod
    def uniform(
        cls, pixels: int, efficiency: float, dark_rate: float, coverage: float = 1.0
    ) -> "PixelGroupProfile":
        """Single-group profile equivalent to a uniformly illuminated camera."""
        pixels = _check_count("pixels", pixels, minimum=1)
        coverage = _check_probability("coverage", coverage)
        return cls(
            np.array([pixels]),
            np.array([coverage / pixels]),
            np.array([float(efficiency)]),
            np.array([float(dark_rate)]),
        )

    def as_params(self) -> dict:
        return {
            "pixel_counts": self.pixel_counts.tolist(),
            "landing_probabilities": self.landing_probabilities.tolist(),
            "efficiencies": self.efficiencies.tolist(),
            "dark_rates": self.dark_rates.tolist(),
        }


def band_profile(
    intensity_image: np.ndarray, bands: int, efficiency: float, dark_rate: float
) -> PixelGroupProfile:
    """Group pixels of an intensity image into equal-width intensity bands.

    Band ``k`` collects pixels with intensity in ``((k-1) dI, k dI]`` where
    ``dI = I_max / bands``; empty bands are dropped.  A pixel's landing
    probability is proportional to its band's mean intensity, normalised so
    the total landing probability is one.  Pixels with exactly zero
    intensity keep their dark counts in a dedicated zero-landing group.
    """
    img = np.asarray(intensity_image, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise ValidationError("intensity image must be a non-empty 2-D array")
    if np.any(img < 0) or not np.all(np.isfinite(img)):
        raise ValidationError("intensity image must be nonnegative and finite")
    bands = _check_count("bands", bands, minimum=1)
    flat = img.ravel()
    i_max = float(flat.max())
    if i_max == 0.0:
        raise ValidationError("intensity image is identically zero")
    pixels = flat.size
    mean_intensity = float(flat.mean())
    band_index = np.minimum(np.ceil(flat * (bands / i_max)).astype(int), bands)
    nu, tau = [], []
    for k in range(1, bands + 1):
        members = flat[band_index == k]
        if members.size == 0:
            continue
        nu.append(members.size)
        tau.append(float(members.mean()) / (mean_intensity * pixels))
    dark_pixels = int((flat == 0.0).sum())
    if dark_pixels:
        nu.append(dark_pixels)
        tau.append(0.0)
    groups = len(nu)
    return PixelGroupProfile(
        np.array(nu),
        np.array(tau),
        np.full(groups, float(efficiency)),
        np.full(groups, float(dark_rate)),
    )


# ---------------------------------------------------------------------------
# exact kernel
# ---------------------------------------------------------------------------


def _bounded_allocations(limits: np.ndarray, cap: int):
    """Yield integer vectors l with l[k] <= limits[k] and sum(l) <= cap."""
    m = len(limits)
    vec = [0] * m

    def rec(k: int, remaining: int):
        if k == m:
            yield tuple(vec)
            return
        for v in range(min(int(limits[k]), remaining) + 1):
            vec[k] = v
            yield from rec(k + 1, remaining - v)

    yield from rec(0, cap)


def _profile_windows(
    profile: PixelGroupProfile, n_max: int, c_max: int, tail_eps: float
) -> tuple[np.ndarray, np.ndarray]:
    fixed = [
        (int(nu), float(d))
        for nu, d in zip(profile.pixel_counts, profile.dark_rates)
        if d > 0
    ]
    detection = profile.detection_fraction
    ceilings = np.empty(n_max + 1, dtype=int)
    tails = np.empty(n_max + 1)
    for n in range(n_max + 1):
        ceilings[n], tails[n] = _support_ceiling(
            n, (1.0, detection), fixed, 0.0, c_max, tail_eps
        )
        if ceilings[n] >= profile.pixels:
            tails[n] = 0.0
    return ceilings, tails


def _required_digits_profile(
    profile: PixelGroupProfile, ceilings: np.ndarray, c_max: int
) -> int:
    """Largest-term bound for the grouped alternating sum, in decimal digits.

    Uses C(N, L) C(N-L, c-L) as a bound on the allocation weights times the
    click-assembly binomial, and the largest admissible base for the power.
    """
    pixels = profile.pixels
    theta = profile.miss_probability
    bump = float((profile.landing_probabilities * profile.efficiencies).max())
    worst = 0.0
    lg = math.lgamma
    for n in range(ceilings.size):
        ch = int(ceilings[n])
        l = np.arange(ch + 1, dtype=float)
        log_weight = (
            (lg(pixels + 1) - gammaln(l + 1.0) - gammaln(pixels - l + 1.0))
            + (
                gammaln(pixels - l + 1.0)
                - gammaln(ch - l + 1.0)
                - gammaln(pixels - ch + 1.0)
            )
        ) / _LN10
        base = theta + l * bump
        with np.errstate(divide="ignore"):
            log_base = np.where(base > 0.0, np.log10(np.maximum(base, 1e-320)), -np.inf)
        power = np.zeros_like(log_base) if n == 0 else n * log_base
        worst = max(worst, float(np.max(log_weight + power)))
    digits = int(math.ceil(worst + 12.0 + math.log10(c_max + 1.0) + 10.0))
    return max(MIN_DIGITS, digits)


def profile_matrix_exact(
    profile: PixelGroupProfile,
    n_max: int,
    c_max: int | None = None,
    *,
    digits: int | None = None,
    tail_eps: float = DEFAULT_TAIL_EPS,
    defect_tol: float = DEFAULT_DEFECT_TOL,
    term_budget: int = TERM_BUDGET,
) -> TransferMatrix:
    """Exact profile transfer matrix via the grouped alternating sum.

    Column windows, precision choice, the post-hoc column-sum check and the
    doubled-precision retry follow the uniform exact builder.  Raises
    BudgetExceededError when the allocation sums would exceed
    ``term_budget`` evaluated terms.
    """
    n_max = _check_count("n_max", n_max)
    pixels = profile.pixels
    if c_max is None:
        c_max = pixels
    c_max = min(_check_count("c_max", c_max), pixels)
    ceilings, tails = _profile_windows(profile, n_max, c_max, tail_eps)
    ch_top = int(ceilings.max())

    per_total = np.zeros(ch_top + 1, dtype=np.int64)
    for alloc in _bounded_allocations(profile.pixel_counts, ch_top):
        per_total[sum(alloc)] += 1
    cumulative = np.cumsum(per_total)
    spent = int(cumulative[ceilings].sum())
    if spent > term_budget:
        raise BudgetExceededError(
            f"exact profile build needs {spent} alternating-sum terms, "
            f"budget is {term_budget}"
        )

    auto = digits is None
    use_digits = _required_digits_profile(profile, ceilings, c_max) if auto else int(digits)
    attempts = [use_digits, 2 * use_digits] if auto else [use_digits]
    last_defect = math.inf
    for attempt_digits in attempts:
        values = _profile_exact_values(profile, n_max, c_max, ceilings, attempt_digits)
        matrix = TransferMatrix(
            values,
            "profile-exact",
            {
                **profile.as_params(),
                "n_max": n_max,
                "c_max": c_max,
                "tail_eps": tail_eps,
                "defect_tol": defect_tol,
            },
            tail_bounds=tails,
            digits=attempt_digits,
        )
        covered = matrix.covered_columns(defect_tol * 0.1)
        defects = matrix.column_defects()
        last_defect = float(defects[covered].max()) if covered.any() else 0.0
        truncated_ok = np.all(matrix.column_sums() <= 1.0 + defect_tol) and np.all(
            (1.0 - matrix.column_sums()) <= tails + defect_tol
        )
        if last_defect <= defect_tol and truncated_ok:
            return matrix
    raise PrecisionExhaustedError(
        f"exact profile build failed its column-sum check (defect {last_defect:.3e} "
        f"> {defect_tol:.1e}) even at {attempts[-1]} digits"
    )


def _profile_exact_values(
    profile: PixelGroupProfile,
    n_max: int,
    c_max: int,
    ceilings: np.ndarray,
    digits: int,
) -> np.ndarray:
    bits = int(math.ceil(digits * _LOG2_10)) + 16
    pixels = profile.pixels
    ch_top = int(ceilings.max())
    values = np.zeros((c_max + 1, n_max + 1))
    with gmpy2.context(precision=bits):
        one = gmpy2.mpfr(1)
        rate = [
            gmpy2.mpfr(t) * gmpy2.mpfr(e)
            for t, e in zip(profile.landing_probabilities, profile.efficiencies)
        ]
        theta = one
        for nu, r in zip(profile.pixel_counts, rate):
            theta -= int(nu) * r
        # per-group tables of (1-d)^(nu-l) for l = 0..min(nu, ch_top)
        survive = []
        for nu, d in zip(profile.pixel_counts, profile.dark_rates):
            full = (one - gmpy2.mpfr(d)) ** int(nu)
            inv = one / (one - gmpy2.mpfr(d))
            table = [full]
            for _ in range(min(int(nu), ch_top)):
                table.append(table[-1] * inv)
            survive.append(table)

        grouped: list[list[tuple]] = [[] for _ in range(ch_top + 1)]
        for alloc in _bounded_allocations(profile.pixel_counts, ch_top):
            total = sum(alloc)
            weight = one
            base = theta
            for k, l in enumerate(alloc):
                weight *= math.comb(int(profile.pixel_counts[k]), l) * survive[k][l]
                if l:
                    base += l * rate[k]
            grouped[total].append((weight, base))

        assembly = [
            [gmpy2.mpz(math.comb(pixels - l, c - l)) for l in range(c + 1)]
            for c in range(ch_top + 1)
        ]
        for n in range(n_max + 1):
            ch = int(ceilings[n])
            s_l = [
                sum((w * b**n for w, b in grouped[l]), gmpy2.mpfr(0))
                for l in range(ch + 1)
            ]
            for c in range(ch + 1):
                acc = gmpy2.mpfr(0)
                for l in range(c + 1):
                    term = assembly[c][l] * s_l[l]
                    acc = acc + term if (c - l) % 2 == 0 else acc - term
                values[c, n] = float(acc)
    return values


# ---------------------------------------------------------------------------
# limit and approximate forms
# ---------------------------------------------------------------------------


def profile_matrix_infinite(
    profile: PixelGroupProfile, n_max: int, c_max: int | None = None
) -> TransferMatrix:
    """Many-pixels-per-group limit of the exact profile kernel.

    Registered clicks of every group follow a multinomial split of a
    binomially thinned photon number, and group dark counts are Poissonian;
    the total click number therefore depends on the profile only through
    the overall detection fraction and the summed dark mean.
    """
    inner = infinite_pixel_matrix(profile.detection_fraction, profile.dark_mean, n_max, c_max)
    return TransferMatrix(
        inner.values,
        "profile-infinite",
        {**profile.as_params(), "n_max": inner.n_max, "c_max": inner.c_max},
        tail_bounds=inner.tail_bounds,
    )


def profile_matrix_exponential(
    profile: PixelGroupProfile, n_max: int, c_max: int | None = None
) -> TransferMatrix:
    """Weak-count closed form of the exact profile kernel, plain floats.

    Per column ``n`` the groups contribute independent binomial-style
    factors with per-pixel success ``d_j (1-A) + n tau_j eta_j`` (A being
    the detection fraction), convolved over groups and scaled by
    ``(1-A)^(n-c)`` unregistered photons.  Approximate by construction; the
    measured worst column defect is stored in the metadata.
    """
    n_max = _check_count("n_max", n_max)
    pixels = profile.pixels
    if c_max is None:
        c_max = min(pixels, n_max + _dark_margin(profile.dark_mean))
    c_max = min(_check_count("c_max", c_max), pixels)
    detection = profile.detection_fraction
    theta = 1.0 - detection

    values = np.zeros((c_max + 1, n_max + 1))
    c = np.arange(c_max + 1)
    for n in range(n_max + 1):
        column = np.ones(1)
        for nu, tau, eta, d in zip(
            profile.pixel_counts,
            profile.landing_probabilities,
            profile.efficiencies,
            profile.dark_rates,
        ):
            top = min(int(nu), c_max)
            cj = np.arange(top + 1.0)
            log_choose = gammaln(nu + 1.0) - gammaln(cj + 1.0) - gammaln(nu - cj + 1.0)
            log_v = log_choose + (nu - cj) * math.log1p(-d) + xlogy(cj, d * theta + n * tau * eta)
            column = np.convolve(column, np.exp(log_v))[: c_max + 1]
        if theta > 0.0:
            column = column * np.exp((n - c[: column.size]) * math.log(theta))
        else:
            # every photon registers: exactly n photon clicks, dark term vanishes
            scale = np.zeros(column.size)
            if n < scale.size:
                scale[n] = 1.0
            column = column * scale
        values[: column.size, n] = column
    params = {**profile.as_params(), "n_max": n_max, "c_max": c_max}
    params["max_column_defect"] = float(np.abs(1.0 - values.sum(axis=0)).max())
    return TransferMatrix(values, "profile-exponential", params, tail_bounds=None)


def profile_matrix_lowcount(
    profile: PixelGroupProfile,
    n_max: int,
    c_max: int,
    *,
    digits: int | None = None,
    tail_eps: float = DEFAULT_TAIL_EPS,
    defect_tol: float = DEFAULT_DEFECT_TOL,
    term_budget: int = TERM_BUDGET,
) -> TransferMatrix:
    """Exact profile kernel organised by the groups that registered each click.

    For every split of ``c`` clicks over groups, the inclusion-exclusion
    runs over subsets of the individual clicks, each carrying the
    registration rate of its group.  Terms grow as compositions times
    ``2^c``, so this form suits small click numbers; above ``term_budget``
    terms the build refuses with BudgetExceededError.
    """
    n_max = _check_count("n_max", n_max)
    c_max = min(_check_count("c_max", c_max), profile.pixels)
    ceilings, tails = _profile_windows(profile, n_max, c_max, tail_eps)
    # windows do not shrink the per-column work here (terms attach to c, not n),
    # but they still certify what mass lies beyond stored rows
    pair_count = 0
    splits: list[list[tuple]] = [[] for _ in range(c_max + 1)]
    for c in range(c_max + 1):
        for split in _exact_splits(profile.pixel_counts, c):
            pair_count += 1 << c
            splits[c].append(split)
        if pair_count > term_budget:
            raise BudgetExceededError(
                f"low-count build needs more than {term_budget} subset terms "
                f"(at click number {c})"
            )

    worst_prefactor = max(
        sum(
            math.lgamma(int(nu) + 1) - math.lgamma(s + 1) - math.lgamma(int(nu) - s + 1)
            for nu, s in zip(profile.pixel_counts, split)
        )
        for c in range(c_max + 1)
        for split in splits[c]
    ) / _LN10
    dark_slack = -c_max * math.log10(1.0 - float(profile.dark_rates.max()))
    use_digits = (
        max(MIN_DIGITS, int(math.ceil(worst_prefactor + dark_slack + 12.0 + 10.0)))
        if digits is None
        else int(digits)
    )

    bits = int(math.ceil(use_digits * _LOG2_10)) + 16
    values = np.zeros((c_max + 1, n_max + 1))
    with gmpy2.context(precision=bits):
        one = gmpy2.mpfr(1)
        rate = [
            gmpy2.mpfr(t) * gmpy2.mpfr(e)
            for t, e in zip(profile.landing_probabilities, profile.efficiencies)
        ]
        theta = one
        for nu, r in zip(profile.pixel_counts, rate):
            theta -= int(nu) * r
        inv_survive = [one / (one - gmpy2.mpfr(d)) for d in profile.dark_rates]
        dark_all = one
        for nu, d in zip(profile.pixel_counts, profile.dark_rates):
            dark_all *= (one - gmpy2.mpfr(d)) ** int(nu)

        # flatten every (split, subset) pair into a coefficient and a base
        terms: list[list[tuple]] = [[] for _ in range(c_max + 1)]
        for c in range(c_max + 1):
            for split in splits[c]:
                prefactor = dark_all
                for k, s in enumerate(split):
                    prefactor *= math.comb(int(profile.pixel_counts[k]), s)
                click_groups = [k for k, s in enumerate(split) for _ in range(s)]
                for mask in range(1 << c):
                    coef = prefactor if (c - mask.bit_count()) % 2 == 0 else -prefactor
                    base = theta
                    for pos in range(c):
                        if mask >> pos & 1:
                            g = click_groups[pos]
                            base += rate[g]
                            coef *= inv_survive[g]
                    terms[c].append((coef, base))
        for n in range(n_max + 1):
            for c in range(c_max + 1):
                acc = gmpy2.mpfr(0)
                for coef, base in terms[c]:
                    acc += coef * base**n
                values[c, n] = float(acc)

    matrix = TransferMatrix(
        values,
        "profile-lowcount",
        {
            **profile.as_params(),
            "n_max": n_max,
            "c_max": c_max,
            "tail_eps": tail_eps,
            "defect_tol": defect_tol,
        },
        tail_bounds=tails,
        digits=use_digits,
    )
    covered = matrix.covered_columns(defect_tol * 0.1)
    if covered.any():
        worst = float(matrix.column_defects()[covered].max())
        if worst > defect_tol:
            raise PrecisionExhaustedError(
                f"low-count build failed its column-sum check (defect {worst:.3e})"
            )
    return matrix


def _exact_splits(limits: np.ndarray, total: int):
    """Yield integer vectors s with s[k] <= limits[k] and sum(s) == total."""
    m = len(limits)
    vec = [0] * m

    def rec(k: int, remaining: int):
        if k == m - 1:
            if remaining <= int(limits[k]):
                vec[k] = remaining
                yield tuple(vec)
            return
        for v in range(min(int(limits[k]), remaining) + 1):
            vec[k] = v
            yield from rec(k + 1, remaining - v)

    yield from rec(0, total)
