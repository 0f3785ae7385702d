"""Click transfer matrices of a multiplexed single-photon camera, uniform illumination.

Model
-----
A region of interest holds ``pixels`` binary macro-pixels.  A photon of the
incident beam survives optical losses with probability ``transmission``,
lands on one of the pixels uniformly at random, and is registered there with
probability ``efficiency``; a pixel also fires spontaneously with per-frame
dark probability ``dark_rate``.  A pixel reports one click no matter how
many photons it caught.  The transfer matrix ``G[c, n]`` is the probability
of observing ``c`` clicks given ``n`` incident photons; every physically
exact variant is column stochastic.

Variants
--------
* ``bernoulli_matrix``        pure loss (binomial thinning), no detector.
* ``finite_pixel_matrix``     exact finite-pixel kernel via the alternating
                              binomial sum, evaluated in extended precision.
* ``infinite_pixel_matrix``   many-pixel limit: binomial detection plus
                              Poisson dark counts.
* ``intense_field_matrix``    occupancy approximation for bright fields
                              (losses, equal-weight pixel occupancy, then the
                              many-pixel detection kernel).
* ``improved_intense_matrix`` same, with the per-pixel mean photon number
                              folded into an effective efficiency.
* ``exponential_approx_matrix`` closed-form weak-count approximation of the
                              exact kernel (no alternating sum, plain floats).
* ``compose``                 matrix product of two variants acting in series.

The exact finite-pixel kernel suffers catastrophic cancellation: its
alternating sum runs over terms up to ~10^300 for thousand-photon columns
while the result is a probability.  Columns are therefore evaluated with
gmpy2 floats whose precision is chosen from a bound on the largest
intermediate term, restricted to a per-column support window certified by a
Chernoff tail bound; the truncated mass bound of every column is kept in the
result so downstream users can tell truncation from numerical defect.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import gmpy2
import numpy as np
from scipy import stats
from scipy.special import gammaln, xlogy

from .errors import PrecisionExhaustedError, ValidationError

#: Exact variants must reproduce unit column sums within this tolerance.
DEFAULT_DEFECT_TOL = 1e-10
#: Per-column truncated-mass budget used when choosing support windows.
DEFAULT_TAIL_EPS = 1e-12
#: Precision floor (decimal digits) for extended-precision evaluation.
MIN_DIGITS = 50

_LOG2_10 = math.log2(10.0)


def _check_probability(name: str, value: float, *, strict_top: bool = False) -> float:
    value = float(value)
    top_ok = value < 1.0 if strict_top else value <= 1.0
    if not (0.0 <= value and top_ok and math.isfinite(value)):
        raise ValidationError(f"{name} must be a probability, got {value!r}")
    return value


@dataclass(frozen=True)
class DetectorModel:
    """Uniformly illuminated detector region.

    transmission : survival probability of a photon on the way to the camera.
    pixels       : number of binary macro-pixels in the region.
    efficiency   : registration probability of a photon that reached a pixel.
    dark_rate    : per-pixel, per-frame dark-count probability.
    """

    transmission: float
    pixels: int
    efficiency: float
    dark_rate: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "transmission", _check_probability("transmission", self.transmission))
        object.__setattr__(self, "efficiency", _check_probability("efficiency", self.efficiency))
        object.__setattr__(self, "dark_rate", _check_probability("dark_rate", self.dark_rate, strict_top=True))
        if int(self.pixels) != self.pixels or self.pixels < 1:
            raise ValidationError(f"pixels must be a positive integer, got {self.pixels!r}")
        object.__setattr__(self, "pixels", int(self.pixels))

    @property
    def detection_probability(self) -> float:
        """Overall probability that an emitted photon is registered somewhere."""
        return self.transmission * self.efficiency

    @property
    def dark_mean(self) -> float:
        """Expected number of dark clicks per frame in the whole region."""
        return self.pixels * self.dark_rate


#: Variants whose columns are exact probabilities (must be column stochastic).
EXACT_VARIANTS = frozenset(
    {"bernoulli", "exact-finite", "infinite", "composed", "profile-exact", "profile-infinite", "profile-lowcount"}
)
#: Variants that are closed-form approximations; their defects are informative only.
APPROXIMATE_VARIANTS = frozenset(
    {"intense", "improved-intense", "exponential", "profile-exponential"}
)


@dataclass(frozen=True)
class TransferMatrix:
    """Click-count response ``values[c, n] = P(c clicks | n input photons)``.

    ``tail_bounds[n]``, when present, is a certified upper bound on the
    probability mass of column ``n`` that lies above ``c_max`` (either
    because the support window was clamped or because the computed range
    simply ends); ``digits`` records the extended precision actually used.
    """

    values: np.ndarray
    variant: str
    params: dict = field(default_factory=dict)
    tail_bounds: np.ndarray | None = None
    digits: int | None = None

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise ValidationError(f"transfer matrix must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("transfer matrix contains non-finite entries")
        if arr.min() < -1e-12:
            raise ValidationError(f"transfer matrix contains negative entries (min {arr.min()!r})")
        np.clip(arr, 0.0, None, out=arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        if self.tail_bounds is not None:
            tb = np.array(self.tail_bounds, dtype=float, copy=True)
            if tb.shape != (arr.shape[1],):
                raise ValidationError("tail_bounds must hold one entry per column")
            tb.flags.writeable = False
            object.__setattr__(self, "tail_bounds", tb)

    @property
    def c_max(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_max(self) -> int:
        return self.values.shape[1] - 1

    def column_sums(self) -> np.ndarray:
        return self.values.sum(axis=0)

    def column_defects(self) -> np.ndarray:
        """Absolute deviation of each column sum from one."""
        return np.abs(1.0 - self.column_sums())

    def covered_columns(self, tol: float = DEFAULT_DEFECT_TOL) -> np.ndarray:
        """Columns whose truncated mass is certified below ``tol``."""
        if self.tail_bounds is None:
            return np.ones(self.values.shape[1], dtype=bool)
        return self.tail_bounds <= tol

    def max_covered_defect(self, tol: float = DEFAULT_DEFECT_TOL) -> float:
        covered = self.covered_columns(tol)
        if not covered.any():
            return math.nan
        return float(self.column_defects()[covered].max())


# ---------------------------------------------------------------------------
# closed-form variants (plain float arithmetic)
# ---------------------------------------------------------------------------


def bernoulli_matrix(transmission: float, n_max: int, c_max: int | None = None) -> TransferMatrix:
    """Binomial thinning: ``values[m, n] = C(n, m) T^m (1-T)^(n-m)``."""
    transmission = _check_probability("transmission", transmission)
    n_max = _check_count("n_max", n_max)
    if c_max is None:
        c_max = n_max
    c_max = _check_count("c_max", c_max)
    n = np.arange(n_max + 1)
    m = np.arange(c_max + 1)
    values = stats.binom.pmf(m[:, None], n[None, :], transmission)
    tail = np.where(n > c_max, _binomial_upper_tail(n, transmission, c_max), 0.0)
    return TransferMatrix(
        values,
        "bernoulli",
        {"transmission": transmission, "n_max": n_max, "c_max": c_max},
        tail_bounds=tail,
    )


def _binomial_upper_tail(n: np.ndarray, p: float, c_max: int) -> np.ndarray:
    return stats.binom.sf(c_max, n, p)


def infinite_pixel_matrix(
    detection_probability: float,
    dark_mean: float,
    n_max: int,
    c_max: int | None = None,
) -> TransferMatrix:
    """Many-pixel limit: binomial registration convolved with Poisson darks."""
    tau = _check_probability("detection_probability", detection_probability)
    if dark_mean < 0 or not math.isfinite(dark_mean):
        raise ValidationError(f"dark_mean must be nonnegative, got {dark_mean!r}")
    n_max = _check_count("n_max", n_max)
    if c_max is None:
        c_max = n_max + _dark_margin(dark_mean)
    c_max = _check_count("c_max", c_max)

    c = np.arange(c_max + 1)
    dark = stats.poisson.pmf(c, dark_mean)
    values = np.empty((c_max + 1, n_max + 1))
    for n in range(n_max + 1):
        registered = stats.binom.pmf(np.arange(min(n, c_max) + 1), n, tau)
        values[:, n] = np.convolve(registered, dark)[: c_max + 1]
    tails = np.array(
        [_chernoff_tail(c_max, [(n, tau)], dark_mean) for n in range(n_max + 1)]
    )
    return TransferMatrix(
        values,
        "infinite",
        {"detection_probability": tau, "dark_mean": dark_mean, "n_max": n_max, "c_max": c_max},
        tail_bounds=tails,
    )


def _dark_margin(dark_mean: float) -> int:
    # wide enough for the Poisson tail to drop below ~1e-14
    return int(math.ceil(dark_mean + 8.0 * math.sqrt(dark_mean) + 10.0))


def compose(outer: TransferMatrix, inner: TransferMatrix) -> TransferMatrix:
    """Chain two responses: the inner output feeds the outer input."""
    if outer.n_max != inner.c_max:
        raise ValidationError(
            f"cannot compose: outer accepts 0..{outer.n_max} but inner emits 0..{inner.c_max}"
        )
    values = outer.values @ inner.values
    # Mass lost by the inner truncation propagates; the outer truncation adds on top.
    tails = None
    if inner.tail_bounds is not None or outer.tail_bounds is not None:
        inner_tail = inner.tail_bounds if inner.tail_bounds is not None else np.zeros(inner.n_max + 1)
        outer_worst = 0.0
        if outer.tail_bounds is not None:
            outer_worst = float(outer.tail_bounds.max())
        tails = np.minimum(1.0, inner_tail + outer_worst)
    return TransferMatrix(
        values,
        "composed",
        {"outer": outer.variant, "inner": inner.variant},
        tail_bounds=tails,
    )


# ---------------------------------------------------------------------------
# equal-weight occupancy (bright-field approximations)
# ---------------------------------------------------------------------------


def occupancy_distribution(pixels: int, photons: int) -> np.ndarray:
    """Distribution of the number of distinct occupied pixels, equal-weight model.

    All ways of distributing ``photons`` indistinguishable photons over
    ``pixels`` distinguishable pixels are taken as equally likely
    (permutations with repetition), giving
    ``P(m2) = C(pixels, m2) C(photons-1, m2-1) / C(pixels+photons-1, pixels-1)``.
    Computed in exact rational arithmetic; returns floats of length
    ``min(pixels, photons) + 1`` indexed by the occupied-pixel count.
    """
    pixels = _check_count("pixels", pixels, minimum=1)
    photons = _check_count("photons", photons)
    if photons == 0:
        return np.array([1.0])
    denom = math.comb(pixels + photons - 1, pixels - 1)
    top = min(pixels, photons)
    out = np.zeros(top + 1)
    for m2 in range(1, top + 1):
        out[m2] = float(
            Fraction(math.comb(pixels, m2) * math.comb(photons - 1, m2 - 1), denom)
        )
    return out


def occupancy_matrix(pixels: int, m_max: int) -> np.ndarray:
    """Column-stochastic matrix of occupancy_distribution columns, 0..m_max photons."""
    rows = min(pixels, m_max) + 1
    out = np.zeros((rows, m_max + 1))
    for m1 in range(m_max + 1):
        col = occupancy_distribution(pixels, m1)
        out[: col.size, m1] = col
    return out


def intense_field_matrix(model: DetectorModel, n_max: int, c_max: int | None = None) -> TransferMatrix:
    """Bright-field approximation: losses, equal-weight occupancy, many-pixel detection.

    Every occupied pixel is treated as holding exactly one photon, so the
    detection stage is the many-pixel kernel with the bare efficiency.
    Approximate: columns need not sum to one exactly.
    """
    n_max = _check_count("n_max", n_max)
    m_top = min(model.pixels, n_max)
    if c_max is None:
        c_max = m_top + _dark_margin(model.dark_mean)
    thinning = bernoulli_matrix(model.transmission, n_max)
    occupancy = occupancy_matrix(model.pixels, n_max)
    detection = infinite_pixel_matrix(model.efficiency, model.dark_mean, m_top, c_max)
    values = detection.values @ occupancy @ thinning.values
    return TransferMatrix(
        values,
        "intense",
        _model_params(model, n_max, c_max),
        tail_bounds=None,
    )


def effective_efficiency(efficiency: float, mean_photons_per_pixel: float) -> float:
    """Registration probability of a pixel holding a Poisson-like photon load."""
    if mean_photons_per_pixel < 0:
        raise ValidationError("mean photon load must be nonnegative")
    return -math.expm1(-_check_probability("efficiency", efficiency) * mean_photons_per_pixel)


def improved_intense_matrix(model: DetectorModel, n_max: int, c_max: int | None = None) -> TransferMatrix:
    """Bright-field approximation with a load-dependent effective efficiency.

    With ``m`` photons spread over ``m2`` occupied pixels, each occupied
    pixel fires with probability ``1 - exp(-efficiency * m / m2)``; dark
    counts stay Poissonian with the regional mean.  The zero-photon column
    is pure dark counts.  Approximate: columns need not sum to one exactly.
    """
    n_max = _check_count("n_max", n_max)
    if c_max is None:
        c_max = min(model.pixels, n_max) + _dark_margin(model.dark_mean)
    c_max = _check_count("c_max", c_max)
    c = np.arange(c_max + 1)
    dark = stats.poisson.pmf(c, model.dark_mean)
    kernel = np.zeros((c_max + 1, n_max + 1))
    kernel[:, 0] = dark
    for m in range(1, n_max + 1):
        weights = occupancy_distribution(model.pixels, m)
        column = np.zeros(c_max + 1)
        for m2 in range(1, weights.size):
            fire = effective_efficiency(model.efficiency, m / m2)
            registered = stats.binom.pmf(np.arange(min(m2, c_max) + 1), m2, fire)
            column += weights[m2] * np.convolve(registered, dark)[: c_max + 1]
        kernel[:, m] = column
    if model.transmission < 1.0:
        values = kernel @ bernoulli_matrix(model.transmission, n_max).values
    else:
        values = kernel
    return TransferMatrix(
        values,
        "improved-intense",
        _model_params(model, n_max, c_max),
        tail_bounds=None,
    )


def exponential_approx_matrix(model: DetectorModel, n_max: int, c_max: int | None = None) -> TransferMatrix:
    """Weak-count closed form of the exact kernel, plain float arithmetic.

    Valid when typical click numbers are far below the pixel count; each of
    ``c`` firing pixels is attributed either one registered photon
    (``efficiency * m / pixels``) or a dark count shielded from registration
    (``dark_rate * (1 - efficiency)``).  Approximate by construction.
    """
    n_max = _check_count("n_max", n_max)
    if c_max is None:
        c_max = min(model.pixels, n_max + _dark_margin(model.dark_mean))
    c_max = _check_count("c_max", c_max)
    if c_max > model.pixels:
        c_max = model.pixels
    eta, d, pixels = model.efficiency, model.dark_rate, model.pixels
    c = np.arange(c_max + 1)[:, None]
    m = np.arange(n_max + 1)[None, :]
    log_choose = gammaln(pixels + 1) - gammaln(c + 1.0) - gammaln(pixels - c + 1.0)
    base = d * (1.0 - eta) + eta * m / pixels
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = (
            log_choose
            + (pixels - c) * math.log1p(-d)
            + (m - c) * (math.log1p(-eta) if eta < 1.0 else -math.inf)
            + xlogy(c, base)
        )
    kernel = np.exp(log_term)
    if eta >= 1.0:
        # the closed form degenerates: with certain registration a photon
        # always clicks, so c > m is impossible and c == m keeps weight 1
        kernel = np.where(m - c < 0, 0.0, kernel)
        kernel = np.where(m - c == 0, np.exp(log_choose + (pixels - c) * math.log1p(-d) + xlogy(c, base)), kernel)
    kernel = np.nan_to_num(kernel, nan=0.0, posinf=0.0)
    if model.transmission < 1.0:
        values = kernel @ bernoulli_matrix(model.transmission, n_max).values
    else:
        values = kernel
    return TransferMatrix(
        values,
        "exponential",
        _model_params(model, n_max, c_max),
        tail_bounds=None,
    )


def _model_params(model: DetectorModel, n_max: int, c_max: int) -> dict:
    return {
        "transmission": model.transmission,
        "pixels": model.pixels,
        "efficiency": model.efficiency,
        "dark_rate": model.dark_rate,
        "n_max": n_max,
        "c_max": c_max,
    }


def _check_count(name: str, value: int, minimum: int = 0) -> int:
    if int(value) != value or value < minimum:
        raise ValidationError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


# ---------------------------------------------------------------------------
# certified tail bounds and support windows
# ---------------------------------------------------------------------------

_THETA_GRID = np.concatenate([np.linspace(1e-4, 2.0, 40), np.linspace(2.2, 30.0, 40)])


def _chernoff_tail(threshold: int, binomials: Sequence[tuple[float, float]], poisson_mean: float = 0.0) -> float:
    """Upper bound on P(X > threshold) for a sum of independent binomials and a Poisson.

    Any positive tilt gives a valid bound, so minimizing over a fixed grid
    keeps the bound certified.
    """
    t = threshold + 1.0
    total_mean = sum(n * p for n, p in binomials) + poisson_mean
    if t <= total_mean:
        return 1.0
    theta = _THETA_GRID
    log_mgf = np.zeros_like(theta)
    e_theta = np.exp(theta)
    for n, p in binomials:
        if n > 0 and p > 0:
            log_mgf = log_mgf + n * np.log1p(p * (e_theta - 1.0))
    if poisson_mean > 0:
        log_mgf = log_mgf + poisson_mean * (e_theta - 1.0)
    exponent = float(np.min(log_mgf - theta * t))
    return min(1.0, math.exp(exponent))


def _support_ceiling(
    n: int,
    binomial_of_n: tuple[float, float] | None,
    fixed_binomials: Sequence[tuple[float, float]],
    poisson_mean: float,
    hard_top: int,
    tail_eps: float,
) -> tuple[int, float]:
    """Smallest click ceiling whose excess mass is certified below tail_eps.

    Returns (ceiling, bound-at-that-ceiling); the ceiling is clamped to
    hard_top, in which case the bound may exceed tail_eps.
    """
    binomials = list(fixed_binomials)
    if binomial_of_n is not None:
        binomials.append((n * binomial_of_n[0], binomial_of_n[1]))

    def bound(t: int) -> float:
        return _chernoff_tail(t, [(nn, pp) for nn, pp in binomials], poisson_mean)

    if bound(hard_top) > tail_eps:
        return hard_top, bound(hard_top)
    lo = 0
    hi = hard_top
    while lo < hi:
        mid = (lo + hi) // 2
        if bound(mid) <= tail_eps:
            hi = mid
        else:
            lo = mid + 1
    return lo, bound(lo)


# ---------------------------------------------------------------------------
# exact finite-pixel kernel (extended precision)
# ---------------------------------------------------------------------------


def required_digits_finite(
    pixels: int,
    dark_rate: float,
    detection_probability: float,
    ceilings: np.ndarray,
    c_max: int,
) -> int:
    """Decimal digits needed to evaluate the finite-pixel alternating sum.

    Bounds the largest intermediate term
    ``C(N, c) C(c, l) (1-d)^(N-l) base_l^n`` over every column's support
    window and adds headroom for the summation length, a 1e-12 absolute
    error target, and a guard band.
    """
    n_values = np.arange(ceilings.size)
    log1md = math.log10(1.0 - dark_rate) if dark_rate < 1.0 else 0.0
    worst = 0.0
    for n in n_values:
        ch = int(ceilings[n])
        l = np.arange(ch + 1, dtype=float)
        base = 1.0 - detection_probability + l * detection_probability / pixels
        log_binom_nl = (
            gammaln(ch + 1.0) - gammaln(l + 1.0) - gammaln(ch - l + 1.0)
        ) / math.log(10.0)
        with np.errstate(divide="ignore"):
            log_base = np.where(base > 0.0, np.log10(np.maximum(base, 1e-320)), -np.inf)
        # base == 0 contributes base^n = 1 for n == 0 and 0 otherwise
        power = np.zeros_like(log_base) if n == 0 else n * log_base
        profile = log_binom_nl - l * log1md + power
        log_pref = (
            gammaln(pixels + 1.0) - gammaln(ch + 1.0) - gammaln(pixels - ch + 1.0)
        ) / math.log(10.0) + pixels * log1md
        candidate = log_pref + float(np.max(profile))
        worst = max(worst, candidate)
    digits = int(math.ceil(worst + 12.0 + math.log10(c_max + 1.0) + 10.0))
    return max(MIN_DIGITS, digits)


def finite_pixel_matrix(
    model: DetectorModel,
    n_max: int,
    c_max: int | None = None,
    *,
    digits: int | None = None,
    tail_eps: float = DEFAULT_TAIL_EPS,
    defect_tol: float = DEFAULT_DEFECT_TOL,
) -> TransferMatrix:
    """Exact finite-pixel transfer matrix via the alternating binomial sum.

    Column ``n``'s entries are computed only inside a support window whose
    excess mass is certified below ``tail_eps`` (clamped at ``c_max``; the
    per-column truncation bound is stored in the result).  Precision is
    auto-selected by required_digits_finite unless ``digits`` is given.
    After the build, covered columns are checked to sum to one within
    ``defect_tol``; on failure the build retries once at doubled precision
    and then raises PrecisionExhaustedError.
    """
    n_max = _check_count("n_max", n_max)
    if c_max is None:
        c_max = model.pixels
    c_max = min(_check_count("c_max", c_max), model.pixels)
    tau = model.detection_probability
    d = model.dark_rate
    pixels = model.pixels

    ceilings = np.empty(n_max + 1, dtype=int)
    tails = np.empty(n_max + 1)
    for n in range(n_max + 1):
        ceilings[n], tails[n] = _support_ceiling(
            n, (1.0, tau), [(pixels, d)], 0.0, c_max, tail_eps
        )
        if ceilings[n] >= pixels:
            # the window spans the whole physical support; nothing is truncated
            tails[n] = 0.0

    auto = digits is None
    use_digits = required_digits_finite(pixels, d, tau, ceilings, c_max) if auto else int(digits)

    attempts = [use_digits, 2 * use_digits] if auto else [use_digits]
    last_defect = math.inf
    for attempt_digits in attempts:
        values = _finite_values(pixels, tau, d, n_max, c_max, ceilings, attempt_digits)
        matrix = TransferMatrix(
            values,
            "exact-finite",
            {**_model_params(model, n_max, c_max), "tail_eps": tail_eps, "defect_tol": defect_tol},
            tail_bounds=tails,
            digits=attempt_digits,
        )
        covered = matrix.covered_columns(defect_tol * 0.1)
        defects = matrix.column_defects()
        last_defect = float(defects[covered].max()) if covered.any() else 0.0
        truncated_ok = np.all(
            matrix.column_sums() <= 1.0 + defect_tol
        ) and np.all((1.0 - matrix.column_sums()) <= tails + defect_tol)
        if last_defect <= defect_tol and truncated_ok:
            return matrix
    raise PrecisionExhaustedError(
        f"finite-pixel build failed its column-sum check (defect {last_defect:.3e} "
        f"> {defect_tol:.1e}) even at {attempts[-1]} digits"
    )


def _finite_values(
    pixels: int,
    tau: float,
    d: float,
    n_max: int,
    c_max: int,
    ceilings: np.ndarray,
    digits: int,
) -> np.ndarray:
    """Evaluate the finite-pixel kernel columns with gmpy2 at fixed precision.

    Per column the alternating sum is run as a forward difference table of
    ``g_l = (1-d)^(-l) * (1 - tau + l tau / N)^n``:
    ``K(c, n) = C(N, c) (1-d)^N  *  Delta^c g[0]``.
    """
    bits = int(math.ceil(digits * _LOG2_10)) + 16
    values = np.zeros((c_max + 1, n_max + 1))
    with gmpy2.context(precision=bits):
        one = gmpy2.mpfr(1)
        tau_m = gmpy2.mpfr(tau)
        d_m = gmpy2.mpfr(d)
        inv_1md = one / (one - d_m)
        pow_1md_N = (one - d_m) ** pixels
        tau_over_n = tau_m / pixels
        prefactors = [pow_1md_N * math.comb(pixels, c) for c in range(c_max + 1)]
        for n in range(n_max + 1):
            ch = int(ceilings[n])
            g = []
            dark_power = one
            for l in range(ch + 1):
                base = one - tau_m + l * tau_over_n
                g.append(dark_power * base**n)
                dark_power *= inv_1md
            values[0, n] = float(prefactors[0] * g[0])
            for c in range(1, ch + 1):
                for l in range(ch - c + 1):
                    g[l] = g[l + 1] - g[l]
                values[c, n] = float(prefactors[c] * g[0])
    return values
