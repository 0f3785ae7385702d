"""Multimode thermal signal+noise model of the twin-beam source.

The photon-pair field is modeled as three independent multimode thermal
components: a paired one feeding both arms with the same photon number, and
one noise component per arm.  A multimode thermal distribution with ``m``
modes of mean occupation ``b`` is negative binomial,

    p(n) = Gamma(n + m) / (n! Gamma(m)) * b^n / (1 + b)^(n + m),

with mean ``m b`` and Fano factor ``1 + b``; ``m`` may be fractional, which
covers effective mode counts fitted from data.  Clicks then follow by
Bernoulli thinning with per-arm efficiency plus additive Poisson dark
counts, for which all five first- and second-order moments exist in closed
form.

``fit`` inverts those closed forms: the five measured moments leave a
three-parameter family indexed by the mode counts, so the mode counts are
scanned on a log grid, the remaining five parameters are solved per
candidate, and the candidate whose predicted click distribution has minimum
Shannon entropy wins.  The per-candidate solve reduces to a scalar
root-find: fixing the paired component's click-variance contribution ``u``
turns each arm's variance-consistency equation into a quadratic in that
arm's efficiency, and only the product of the two efficiencies has to match
the measured cross covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import signal
from scipy.stats import binom, nbinom, poisson

from .distributions import Distribution1D, JointDistribution
from .errors import FitInfeasibleError, ValidationError

#: Acceptable relative round-trip error of the five moments for a candidate.
DEFAULT_MOMENT_RTOL = 1e-6

#: Points of the pair-variance grid scanned for sign changes per candidate.
_U_GRID_POINTS = 400

#: Decades above the measured covariance covered by the pair-variance grid.
_U_GRID_DECADES = 6.0


@dataclass(frozen=True)
class FitParams:
    """Parameters of the three-component model plus the detection chain.

    ``m_p, b_p`` describe the paired component, ``m_S, b_S`` and ``m_I,
    b_I`` the per-arm noise, ``tau_S, tau_I`` the arm efficiencies, and
    ``D_S, D_I`` the mean dark counts per frame.
    """

    m_p: float
    b_p: float
    m_S: float
    b_S: float
    m_I: float
    b_I: float
    tau_S: float = 1.0
    tau_I: float = 1.0
    D_S: float = 0.0
    D_I: float = 0.0

    def __post_init__(self) -> None:
        for name in ("m_p", "b_p", "m_S", "b_S", "m_I", "b_I", "D_S", "D_I"):
            if not getattr(self, name) >= 0.0:
                raise ValidationError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        for modes, occupation in (("m_p", "b_p"), ("m_S", "b_S"), ("m_I", "b_I")):
            if getattr(self, modes) == 0.0 and getattr(self, occupation) > 0.0:
                raise ValidationError(f"{occupation} > 0 requires {modes} > 0")
        for name in ("tau_S", "tau_I"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValidationError(f"{name} must lie in (0, 1], got {getattr(self, name)!r}")

    def as_params(self) -> dict:
        return {
            "m_p": self.m_p,
            "b_p": self.b_p,
            "m_S": self.m_S,
            "b_S": self.b_S,
            "m_I": self.m_I,
            "b_I": self.b_I,
            "tau_S": self.tau_S,
            "tau_I": self.tau_I,
            "D_S": self.D_S,
            "D_I": self.D_I,
        }


@dataclass(frozen=True)
class FitOptions:
    """Controls for :func:`fit`.

    Dark means enter the moment equations when ``include_dark`` is set;
    otherwise they are treated as zero throughout.  Mode counts are scanned
    log-uniformly inside the given bounds, coarsely first and then refined
    once around the minimum-entropy candidate.
    """

    dark_signal: float = 0.0
    dark_idler: float = 0.0
    include_dark: bool = True
    pair_mode_bounds: tuple[float, float] = (1.0, 1e4)
    noise_mode_bounds: tuple[float, float] = (1e-3, 1e2)
    coarse_per_decade: int = 5
    refine_per_decade: int = 25
    moment_rtol: float = DEFAULT_MOMENT_RTOL
    click_ceiling: int | None = None

    def __post_init__(self) -> None:
        if self.dark_signal < 0.0 or self.dark_idler < 0.0:
            raise ValidationError("dark means cannot be negative")
        for low, high in (self.pair_mode_bounds, self.noise_mode_bounds):
            if not 0.0 < low < high:
                raise ValidationError("mode bounds must satisfy 0 < low < high")
        if self.coarse_per_decade < 1 or self.refine_per_decade < 1:
            raise ValidationError("grid densities must be at least 1 per decade")
        if not self.moment_rtol > 0.0:
            raise ValidationError("moment_rtol must be positive")
        if self.click_ceiling is not None and self.click_ceiling < 1:
            raise ValidationError("click_ceiling must be at least 1")


@dataclass(frozen=True)
class FitDiagnostics:
    """Selection record: residuals, entropy landscape, derived figures."""

    empirical_moments: tuple[float, float, float, float, float]
    moment_residuals: np.ndarray
    entropy: float
    landscape: np.ndarray
    noise_reduction: float
    candidates_evaluated: int


def _nb_pmf(counts: np.ndarray, modes: float, occupation: float) -> np.ndarray:
    if occupation <= 0.0 or modes <= 0.0:
        return (counts == 0).astype(float)
    return nbinom.pmf(counts, modes, 1.0 / (1.0 + occupation))


def _nb_ceiling(modes: float, occupation: float, quantile: float = 1e-13) -> int:
    if occupation <= 0.0 or modes <= 0.0:
        return 0
    return int(nbinom.ppf(1.0 - quantile, modes, 1.0 / (1.0 + occupation))) + 1


def multimode_thermal(modes: float, occupation: float, n_max: int) -> Distribution1D:
    """Photon-number distribution of ``modes`` thermal modes at mean ``occupation`` each.

    ``n_max`` must capture all but a negligible tail; the constructor
    rejects a grid that loses more than the standard mass tolerance.
    """
    if occupation < 0.0:
        raise ValidationError(f"mean occupation cannot be negative, got {occupation!r}")
    if occupation > 0.0 and not modes > 0.0:
        raise ValidationError("a positive occupation needs a positive mode count")
    if n_max < 0:
        raise ValidationError("n_max cannot be negative")
    return Distribution1D(_nb_pmf(np.arange(n_max + 1), modes, occupation))


def model_distribution(params: FitParams, n_max: int | None = None) -> JointDistribution:
    """Joint photon-number distribution of pair + per-arm noise components.

    p(n_S, n_I) = sum_k pair(k) noise_S(n_S - k) noise_I(n_I - k): the
    paired component contributes the same k photons to both arms.
    Efficiencies and darks are deliberately not applied here; this is the
    field before detection.  When ``n_max`` is omitted the grid extends to
    the 1 - 1e-13 quantiles of the components, keeping the truncated tail
    below the normalization tolerance.
    """
    if n_max is None:
        n_max = _nb_ceiling(params.m_p, params.b_p) + max(
            _nb_ceiling(params.m_S, params.b_S), _nb_ceiling(params.m_I, params.b_I)
        )
    if n_max < 0:
        raise ValidationError("n_max cannot be negative")
    grid = np.arange(n_max + 1)
    pair = _nb_pmf(grid, params.m_p, params.b_p)
    noise_s = _nb_pmf(grid, params.m_S, params.b_S)
    noise_i = _nb_pmf(grid, params.m_I, params.b_I)
    table = np.zeros((n_max + 1, n_max + 1))
    for k in range(n_max + 1):
        if pair[k] == 0.0:
            continue
        table[k:, k:] += pair[k] * np.outer(noise_s[: n_max + 1 - k], noise_i[: n_max + 1 - k])
    return JointDistribution(table, kind="photon")


def predicted_click_moments(params: FitParams) -> tuple[float, float, float, float, float]:
    """Closed-form click moments (mean_S, mean_I, var_S, var_I, cov).

    Bernoulli thinning by tau_i plus Poisson darks: means and variances
    pick up the usual thinning terms, while the cross covariance keeps only
    the paired component scaled by both efficiencies.
    """
    pair_mean = params.m_p * params.b_p
    pair_var = pair_mean * (1.0 + params.b_p)
    out = []
    for tau, m_n, b_n, dark in (
        (params.tau_S, params.m_S, params.b_S, params.D_S),
        (params.tau_I, params.m_I, params.b_I, params.D_I),
    ):
        photon_mean = pair_mean + m_n * b_n
        photon_var = pair_var + m_n * b_n * (1.0 + b_n)
        out.append(tau * photon_mean + dark)
        out.append(tau * tau * photon_var + tau * (1.0 - tau) * photon_mean + dark)
    mean_s, var_s, mean_i, var_i = out
    cov = params.tau_S * params.tau_I * pair_var
    return (mean_s, mean_i, var_s, var_i, cov)


def model_noise_reduction(params: FitParams) -> float:
    """Noise-reduction factor of the photon-level model in closed form."""
    pair_mean = params.m_p * params.b_p
    noise_s = params.m_S * params.b_S
    noise_i = params.m_I * params.b_I
    denominator = 2.0 * pair_mean + noise_s + noise_i
    if denominator <= 0.0:
        raise ValidationError("noise reduction undefined for a zero-mean model")
    return (noise_s * (1.0 + params.b_S) + noise_i * (1.0 + params.b_I)) / denominator


def predicted_click_distribution(params: FitParams, click_ceiling: int | None = None) -> JointDistribution:
    """Click distribution of the model after thinning and dark counts.

    The paired component is thinned into both arms jointly; thinned noise
    stays negative binomial with occupation scaled by the efficiency, and
    darks convolve in as Poisson.  The grid is sized from the predicted
    moments unless ``click_ceiling`` pins it.
    """
    mean_s, mean_i, var_s, var_i, _ = predicted_click_moments(params)
    if click_ceiling is None:
        top_s = int(math.ceil(mean_s + 12.0 * math.sqrt(max(var_s, 1.0)))) + 6
        top_i = int(math.ceil(mean_i + 12.0 * math.sqrt(max(var_i, 1.0)))) + 6
    else:
        top_s = top_i = click_ceiling
    table = _click_table(params, top_s, top_i)
    return JointDistribution(table, kind="click")


def _click_table(params: FitParams, top_s: int, top_i: int) -> np.ndarray:
    pair_top = _nb_ceiling(params.m_p, params.b_p)
    pair = _nb_pmf(np.arange(pair_top + 1), params.m_p, params.b_p)
    ks = np.arange(pair_top + 1)[:, None]
    thin_s = binom.pmf(np.arange(top_s + 1)[None, :], ks, params.tau_S)
    thin_i = binom.pmf(np.arange(top_i + 1)[None, :], ks, params.tau_I)
    paired = np.einsum("k,ka,kb->ab", pair, thin_s, thin_i)

    def arm_extras(modes: float, occupation: float, tau: float, dark: float, top: int) -> np.ndarray:
        extras = _nb_pmf(np.arange(top + 1), modes, tau * occupation)
        if dark > 0.0:
            extras = np.convolve(extras, poisson.pmf(np.arange(top + 1), dark))[: top + 1]
        return extras

    extra_s = arm_extras(params.m_S, params.b_S, params.tau_S, params.D_S, top_s)
    extra_i = arm_extras(params.m_I, params.b_I, params.tau_I, params.D_I, top_i)
    table = signal.convolve(paired, np.outer(extra_s, extra_i))[: top_s + 1, : top_i + 1]
    return np.clip(table, 0.0, None)


def _entropy(table: np.ndarray) -> float:
    positive = table[table > 0.0]
    return float(-np.dot(positive, np.log(positive)))


@dataclass(frozen=True)
class _Moments:
    mean_s: float
    mean_i: float
    var_s: float
    var_i: float
    cov: float


def _empirical_moments(f: JointDistribution) -> _Moments:
    mean_s = f.moment(1, 0)
    mean_i = f.moment(0, 1)
    return _Moments(
        mean_s=mean_s,
        mean_i=mean_i,
        var_s=f.moment(2, 0) - mean_s**2,
        var_i=f.moment(0, 2) - mean_i**2,
        cov=f.covariance(),
    )


def _arm_efficiencies(u: np.ndarray, pair_mean: np.ndarray, modes: float, net_mean: float, net_var: float) -> np.ndarray:
    """Both roots of the arm consistency quadratic, shape (2, len(u)).

    Eliminating the arm's noise mean between its mean and variance
    equations leaves, for efficiency x,

        x^2 (P^2 - m P + u m) - 2 A P x + (A^2 + m A - m V) = 0

    with P the pair photon mean, A the dark-corrected click mean, V the
    dark-corrected click variance, and m the arm's noise mode count.
    """
    a2 = pair_mean**2 - modes * pair_mean + u * modes
    a1 = -2.0 * net_mean * pair_mean
    a0 = net_mean**2 + modes * net_mean - modes * net_var
    with np.errstate(invalid="ignore", divide="ignore"):
        disc = a1 * a1 - 4.0 * a2 * a0
        sqrt_disc = np.sqrt(np.where(disc >= 0.0, disc, np.nan))
        quad = np.stack([(-a1 - sqrt_disc) / (2.0 * a2), (-a1 + sqrt_disc) / (2.0 * a2)])
        linear = np.where(a1 != 0.0, -a0 / np.where(a1 != 0.0, a1, 1.0), np.nan)
    degenerate = np.abs(a2) <= 1e-14 * (np.abs(a1) + np.abs(a0))
    quad[:, degenerate] = linear[degenerate]
    return quad


def _candidate_solutions(
    m_p: float, m_s: float, m_i: float, mom: _Moments, dark_s: float, dark_i: float
) -> list[FitParams]:
    """All parameter sets with the given mode counts matching the moments."""
    net_mean_s = mom.mean_s - dark_s
    net_mean_i = mom.mean_i - dark_i
    net_var_s = mom.var_s - dark_s
    net_var_i = mom.var_i - dark_i
    if net_mean_s <= 0.0 or net_mean_i <= 0.0:
        return []

    u = np.logspace(math.log10(mom.cov), math.log10(mom.cov) + _U_GRID_DECADES, _U_GRID_POINTS)
    pair_b = 0.5 * (np.sqrt(1.0 + 4.0 * u / m_p) - 1.0)
    pair_mean = m_p * pair_b
    xs = _arm_efficiencies(u, pair_mean, m_s, net_mean_s, net_var_s)
    ys = _arm_efficiencies(u, pair_mean, m_i, net_mean_i, net_var_i)

    def valid(roots: np.ndarray, net_mean: np.ndarray) -> np.ndarray:
        noise_mean = net_mean / np.where(roots > 0.0, roots, np.nan) - pair_mean
        return (roots > 1e-12) & (roots <= 1.0 + 1e-12) & (noise_mean >= -1e-9 * net_mean)

    ok_x = valid(xs, net_mean_s)
    ok_y = valid(ys, net_mean_i)

    solutions: list[tuple[float, float, float]] = []
    for bx in range(2):
        for by in range(2):
            mask = ok_x[bx] & ok_y[by]
            g = np.where(mask, xs[bx] * ys[by] - mom.cov / u, np.nan)
            sign_change = np.isfinite(g[:-1]) & np.isfinite(g[1:]) & (np.sign(g[:-1]) != np.sign(g[1:]))
            for idx in np.nonzero(sign_change)[0]:
                root = _bisect_u(u[idx], u[idx + 1], bx, by, m_p, m_s, m_i, mom, dark_s, dark_i)
                if root is not None:
                    solutions.append(root)
            exact = np.nonzero(np.isfinite(g) & (g == 0.0))[0]
            for idx in exact:
                solutions.append((float(u[idx]), float(xs[bx][idx]), float(ys[by][idx])))

    params_list: list[FitParams] = []
    for u_val, x_val, y_val in solutions:
        made = _params_from_solution(u_val, x_val, y_val, m_p, m_s, m_i, mom, dark_s, dark_i)
        if made is None:
            continue
        if any(
            abs(made.tau_S - prior.tau_S) < 1e-9 and abs(made.tau_I - prior.tau_I) < 1e-9
            for prior in params_list
        ):
            continue
        params_list.append(made)
    return params_list


def _branch_g(
    u_val: float, bx: int, by: int, m_p: float, m_s: float, m_i: float, mom: _Moments, dark_s: float, dark_i: float
) -> tuple[float, float, float]:
    u_arr = np.array([u_val])
    pair_b = 0.5 * (math.sqrt(1.0 + 4.0 * u_val / m_p) - 1.0)
    pair_mean = np.array([m_p * pair_b])
    x = float(_arm_efficiencies(u_arr, pair_mean, m_s, mom.mean_s - dark_s, mom.var_s - dark_s)[bx][0])
    y = float(_arm_efficiencies(u_arr, pair_mean, m_i, mom.mean_i - dark_i, mom.var_i - dark_i)[by][0])
    return x * y - mom.cov / u_val, x, y


def _bisect_u(
    lo: float, hi: float, bx: int, by: int, m_p: float, m_s: float, m_i: float, mom: _Moments, dark_s: float, dark_i: float
) -> tuple[float, float, float] | None:
    g_lo, _, _ = _branch_g(lo, bx, by, m_p, m_s, m_i, mom, dark_s, dark_i)
    for _ in range(80):
        mid = math.sqrt(lo * hi)
        g_mid, x_mid, y_mid = _branch_g(mid, bx, by, m_p, m_s, m_i, mom, dark_s, dark_i)
        if not math.isfinite(g_mid):
            return None
        if g_mid == 0.0 or (hi - lo) <= 1e-14 * hi:
            return (mid, x_mid, y_mid)
        if (g_lo < 0.0) == (g_mid < 0.0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    _, x_mid, y_mid = _branch_g(mid, bx, by, m_p, m_s, m_i, mom, dark_s, dark_i)
    return (mid, x_mid, y_mid)


def _params_from_solution(
    u_val: float, x_val: float, y_val: float, m_p: float, m_s: float, m_i: float, mom: _Moments, dark_s: float, dark_i: float
) -> FitParams | None:
    pair_b = 0.5 * (math.sqrt(1.0 + 4.0 * u_val / m_p) - 1.0)
    pair_mean = m_p * pair_b
    noise_mean_s = (mom.mean_s - dark_s) / x_val - pair_mean
    noise_mean_i = (mom.mean_i - dark_i) / y_val - pair_mean
    if noise_mean_s < -1e-9 or noise_mean_i < -1e-9:
        return None
    try:
        return FitParams(
            m_p=m_p,
            b_p=pair_b,
            m_S=m_s,
            b_S=max(noise_mean_s, 0.0) / m_s,
            m_I=m_i,
            b_I=max(noise_mean_i, 0.0) / m_i,
            tau_S=min(x_val, 1.0),
            tau_I=min(y_val, 1.0),
            D_S=dark_s,
            D_I=dark_i,
        )
    except ValidationError:
        return None


def _moment_scale(mom: _Moments) -> np.ndarray:
    return np.array(
        [
            max(abs(mom.mean_s), 1e-12),
            max(abs(mom.mean_i), 1e-12),
            max(abs(mom.var_s), 1e-12),
            max(abs(mom.var_i), 1e-12),
            max(abs(mom.cov), 1e-12),
        ]
    )


def _log_grid(low: float, high: float, per_decade: int) -> np.ndarray:
    count = max(2, int(round((math.log10(high) - math.log10(low)) * per_decade)) + 1)
    return np.logspace(math.log10(low), math.log10(high), count)


def fit(f: JointDistribution, options: FitOptions | None = None) -> tuple[FitParams, FitDiagnostics]:
    """Fit the three-component model to a click histogram by its moments.

    Scans mode counts on a log grid, solves the remaining five parameters
    per candidate, keeps candidates whose round-trip moments agree within
    ``moment_rtol``, and returns the one minimizing the entropy of the
    predicted click distribution (lexicographic tie-break on the mode
    counts).  Raises a feasibility error when the histogram's covariance
    is not positive or no candidate solves the moment equations.
    """
    opts = options if options is not None else FitOptions()
    mom = _empirical_moments(f)
    if mom.var_s <= 0.0 or mom.var_i <= 0.0:
        raise FitInfeasibleError("click histogram needs positive variance in both arms")
    if mom.cov <= 0.0:
        raise FitInfeasibleError(
            f"click covariance must be positive for a paired model, got {mom.cov!r}"
        )
    dark_s = opts.dark_signal if opts.include_dark else 0.0
    dark_i = opts.dark_idler if opts.include_dark else 0.0
    if mom.mean_s - dark_s <= 0.0 or mom.mean_i - dark_i <= 0.0:
        raise FitInfeasibleError("dark means exceed the measured click means")

    scale = _moment_scale(mom)
    target = np.array([mom.mean_s, mom.mean_i, mom.var_s, mom.var_i, mom.cov])

    def evaluate_grid(
        grid_p: np.ndarray, grid_s: np.ndarray, grid_i: np.ndarray
    ) -> tuple[list[tuple], int]:
        rows = []
        evaluated = 0
        for m_p in grid_p:
            for m_s in grid_s:
                for m_i in grid_i:
                    for cand in _candidate_solutions(float(m_p), float(m_s), float(m_i), mom, dark_s, dark_i):
                        evaluated += 1
                        residual = (np.array(predicted_click_moments(cand)) - target) / scale
                        if np.max(np.abs(residual)) > opts.moment_rtol:
                            continue
                        table = _click_table(cand, *_entropy_grid(mom, opts))
                        rows.append((_entropy(table), (m_p, m_s, m_i), cand, residual))
        return rows, evaluated

    coarse = evaluate_grid(
        _log_grid(*opts.pair_mode_bounds, opts.coarse_per_decade),
        _log_grid(*opts.noise_mode_bounds, opts.coarse_per_decade),
        _log_grid(*opts.noise_mode_bounds, opts.coarse_per_decade),
    )
    rows, evaluated = coarse
    if not rows:
        raise FitInfeasibleError(
            "no mode-count candidate reproduces the five measured moments; "
            "the histogram may be incompatible with a paired-thermal model"
        )
    best = min(rows, key=lambda row: (row[0], row[1]))

    def refine_axis(center: float, bounds: tuple[float, float], per_decade_coarse: int) -> np.ndarray:
        step = 10.0 ** (1.0 / per_decade_coarse)
        low = max(bounds[0], center / step)
        high = min(bounds[1], center * step)
        return _log_grid(low, high, opts.refine_per_decade)

    refined_rows, refined_count = evaluate_grid(
        refine_axis(best[1][0], opts.pair_mode_bounds, opts.coarse_per_decade),
        refine_axis(best[1][1], opts.noise_mode_bounds, opts.coarse_per_decade),
        refine_axis(best[1][2], opts.noise_mode_bounds, opts.coarse_per_decade),
    )
    rows += refined_rows
    evaluated += refined_count
    best = min(rows, key=lambda row: (row[0], row[1]))

    landscape = np.array(
        [[row[1][0], row[1][1], row[1][2], row[0]] for row in rows], dtype=float
    )
    entropy, _, params, residual = best
    diagnostics = FitDiagnostics(
        empirical_moments=(mom.mean_s, mom.mean_i, mom.var_s, mom.var_i, mom.cov),
        moment_residuals=residual * scale,
        entropy=entropy,
        landscape=landscape,
        noise_reduction=model_noise_reduction(params),
        candidates_evaluated=evaluated,
    )
    return params, diagnostics


def _entropy_grid(mom: _Moments, opts: FitOptions) -> tuple[int, int]:
    if opts.click_ceiling is not None:
        return opts.click_ceiling, opts.click_ceiling
    top_s = int(math.ceil(mom.mean_s + 10.0 * math.sqrt(max(mom.var_s, 1.0)))) + 4
    top_i = int(math.ceil(mom.mean_i + 10.0 * math.sqrt(max(mom.var_i, 1.0)))) + 4
    return top_s, top_i
