"""Expectation-maximization recovery of the photon-pair distribution.

Given a measured click histogram ``f`` and one transfer matrix per arm, the
iteration

    rho'(n_S, n_I) = rho(n_S, n_I) * sum_{c_S, c_I} f(c_S, c_I)
                     * G_S(c_S, n_S) * G_I(c_I, n_I) / F(c_S, c_I),

with ``F = G_S rho G_I^T`` the modeled histogram, climbs the likelihood of
the observed clicks and leaves any fixed point unchanged.  Cells with
``f = 0`` contribute nothing; a cell with ``f > 0`` but ``F = 0`` means the
forward model cannot produce an observed outcome and is reported as a model
mismatch instead of a division error.

The iteration preserves total mass only as far as the matrix columns are
complete; with a truncated click range the mass drifts low by the column
defect.  ``reconstruct`` renormalizes at every recorded step and logs the
defect it removed, so the returned trace stays comparable across grids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .detector import TransferMatrix
from .distributions import JointDistribution
from .errors import DegenerateDistributionError, ModelMismatchError, ValidationError

InitialKind = Literal["uniform", "custom"]

#: Iterations before plateau stopping is considered (transients die out first).
PLATEAU_WARMUP = 200


@dataclass(frozen=True)
class EmOptions:
    """Iteration controls for :func:`reconstruct`.

    ``plateau_tol`` bounds the spread of the covariance coefficient over the
    trailing ``plateau_window`` iterations; ``residual_tol`` is the relative
    change of the residual per iteration (measured between consecutive
    recorded steps, so independent of ``record_every``) below which the fit
    is considered stationary.  Either tolerance set to ``None`` (or zero)
    disables that stopping rule, leaving ``max_iterations`` as the only
    stop.  ``floor`` replaces zero entries of a custom start, since the
    update can never leave an exact zero.
    """

    max_iterations: int = 10000
    record_every: int = 1
    floor: float = 1e-100
    plateau_window: int = 50
    plateau_tol: float | None = 1e-5
    residual_tol: float | None = 1e-6
    initial: InitialKind = "uniform"
    initial_distribution: JointDistribution | None = None

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if self.record_every < 1:
            raise ValidationError("record_every must be at least 1")
        if not self.floor > 0.0:
            raise ValidationError("floor must be strictly positive")
        if self.plateau_window < 1:
            raise ValidationError("plateau_window must be at least 1")
        if self.initial not in ("uniform", "custom"):
            raise ValidationError(f"initial must be 'uniform' or 'custom', got {self.initial!r}")
        if self.initial == "custom" and self.initial_distribution is None:
            raise ValidationError("initial='custom' requires initial_distribution")


@dataclass(frozen=True)
class ReconstructionResult:
    """Final distribution plus the recorded convergence trace."""

    p_rec: JointDistribution
    trace_iterations: np.ndarray
    trace_residual: np.ndarray
    trace_covariance: np.ndarray
    trace_mass_defect: np.ndarray
    iterations_run: int
    stop_reason: Literal["max-iterations", "covariance-plateau", "residual-plateau"]


def _conforming_shapes(
    f: JointDistribution, g_signal: TransferMatrix, g_idler: TransferMatrix, rho_shape: tuple[int, int]
) -> None:
    if g_signal.c_max + 1 != f.values.shape[0] or g_idler.c_max + 1 != f.values.shape[1]:
        raise ValidationError(
            f"histogram grid {f.values.shape} does not match matrix click ranges "
            f"({g_signal.c_max + 1}, {g_idler.c_max + 1})"
        )
    if g_signal.n_max + 1 != rho_shape[0] or g_idler.n_max + 1 != rho_shape[1]:
        raise ValidationError(
            f"photon grid {rho_shape} does not match matrix photon ranges "
            f"({g_signal.n_max + 1}, {g_idler.n_max + 1})"
        )


def _ratio(f: np.ndarray, modeled: np.ndarray) -> np.ndarray:
    observed = f > 0.0
    bad = observed & (modeled <= 0.0)
    if np.any(bad):
        cells = np.argwhere(bad)[:5].tolist()
        raise ModelMismatchError(
            f"forward model assigns zero probability to observed cells {cells}; "
            "enlarge the photon grid or pick a matrix variant covering these clicks"
        )
    ratio = np.zeros_like(f)
    ratio[observed] = f[observed] / modeled[observed]
    return ratio


def _update(rho: np.ndarray, f: np.ndarray, gs: np.ndarray, gi: np.ndarray) -> np.ndarray:
    modeled = gs @ rho @ gi.T
    return rho * (gs.T @ _ratio(f, modeled) @ gi)


def em_step(
    rho: JointDistribution,
    f: JointDistribution,
    g_signal: TransferMatrix,
    g_idler: TransferMatrix,
) -> JointDistribution:
    """One multiplicative update; the result is renormalized to unit mass.

    Renormalization only removes the mass lost to truncated matrix columns;
    with column-complete matrices the raw update already conserves mass.
    """
    _conforming_shapes(f, g_signal, g_idler, rho.values.shape)
    updated = _update(rho.values, f.values, g_signal.values, g_idler.values)
    return JointDistribution(updated / updated.sum(), kind="photon")


def residual_S(
    rho: JointDistribution,
    f: JointDistribution,
    g_signal: TransferMatrix,
    g_idler: TransferMatrix,
) -> float:
    """Euclidean distance between the histogram and the forward-mapped rho."""
    _conforming_shapes(f, g_signal, g_idler, rho.values.shape)
    modeled = g_signal.values @ rho.values @ g_idler.values.T
    return float(np.sqrt(np.sum((f.values - modeled) ** 2)))


def kl_divergence(f: JointDistribution, g: JointDistribution) -> float:
    """Kullback-Leibler divergence sum f ln(f/g); zero-frequency cells drop out."""
    if f.values.shape != g.values.shape:
        raise ValidationError(f"shape mismatch {f.values.shape} vs {g.values.shape}")
    observed = f.values > 0.0
    if np.any(observed & (g.values <= 0.0)):
        raise ModelMismatchError("second distribution vanishes on the support of the first")
    fv = f.values[observed]
    return float(np.sum(fv * np.log(fv / g.values[observed])))


def _covariance_or_nan(rho: np.ndarray) -> float:
    try:
        return JointDistribution(rho / rho.sum(), kind="photon").covariance_coefficient()
    except DegenerateDistributionError:
        return math.nan


def reconstruct(
    f: JointDistribution,
    g_signal: TransferMatrix,
    g_idler: TransferMatrix,
    options: EmOptions | None = None,
) -> ReconstructionResult:
    """Iterate the update from a positive start until a plateau or the budget.

    The trace carries iteration 0 (the start), every ``record_every``-th
    iteration, and the final one.  Residual stationarity (including an exact
    zero residual) stops with ``residual-plateau``; a flat covariance
    coefficient stops with ``covariance-plateau``; plateau rules are held
    back for the first ``PLATEAU_WARMUP`` iterations except for an exactly
    zero residual, which cannot improve further.
    """
    opts = options if options is not None else EmOptions()
    gs, gi = g_signal.values, g_idler.values
    shape = (g_signal.n_max + 1, g_idler.n_max + 1)
    if opts.initial == "uniform":
        rho = np.full(shape, 1.0 / (shape[0] * shape[1]))
    else:
        if opts.initial_distribution.values.shape != shape:
            raise ValidationError(
                f"initial distribution shape {opts.initial_distribution.values.shape} "
                f"does not match the photon grid {shape}"
            )
        rho = np.maximum(opts.initial_distribution.values, opts.floor)
    _conforming_shapes(f, g_signal, g_idler, shape)

    iters: list[int] = []
    residuals: list[float] = []
    covariances: list[float] = []
    defects: list[float] = []
    stop_reason = "max-iterations"
    check_residual = opts.residual_tol is not None and opts.residual_tol > 0.0
    check_covariance = opts.plateau_tol is not None and opts.plateau_tol > 0.0

    def record(iteration: int) -> None:
        nonlocal rho
        mass = rho.sum()
        defects.append(1.0 - float(mass))
        rho = rho / mass
        modeled = gs @ rho @ gi.T
        iters.append(iteration)
        residuals.append(float(np.sqrt(np.sum((f.values - modeled) ** 2))))
        covariances.append(_covariance_or_nan(rho))

    def plateaued(iteration: int) -> str | None:
        if check_residual and len(residuals) >= 2:
            previous, current = residuals[-2], residuals[-1]
            gap = iters[-1] - iters[-2]
            if current == 0.0:
                return "residual-plateau"
            if iteration >= PLATEAU_WARMUP and abs(previous - current) <= gap * opts.residual_tol * max(
                previous, 1e-300
            ):
                return "residual-plateau"
        if check_covariance and iteration >= PLATEAU_WARMUP:
            window_start = iteration - opts.plateau_window
            recent = [c for i, c in zip(iters, covariances) if i >= window_start]
            spans = [i for i in iters if i >= window_start]
            if len(recent) >= 2 and min(spans) == window_start:
                spread = max(recent) - min(recent)
                if spread < opts.plateau_tol:
                    return "covariance-plateau"
        return None

    record(0)
    iterations_run = 0
    for iteration in range(1, opts.max_iterations + 1):
        rho = _update(rho, f.values, gs, gi)
        iterations_run = iteration
        if iteration % opts.record_every == 0 or iteration == opts.max_iterations:
            record(iteration)
            reason = plateaued(iteration)
            if reason is not None:
                stop_reason = reason
                break

    if iters[-1] != iterations_run:
        record(iterations_run)
    return ReconstructionResult(
        p_rec=JointDistribution(rho, kind="photon"),
        trace_iterations=np.array(iters, dtype=np.int64),
        trace_residual=np.array(residuals),
        trace_covariance=np.array(covariances),
        trace_mass_defect=np.array(defects),
        iterations_run=iterations_run,
        stop_reason=stop_reason,
    )


def default_photon_ceiling(max_clicks: int, detection_probability: float, multiplier: float = 1.5) -> int:
    """Photon-grid size heuristic: scaled inverse of the detection probability.

    A click count of c suggests roughly c / (T eta) photons; the multiplier
    leaves room for the tail above that estimate.
    """
    if max_clicks < 0:
        raise ValidationError("max_clicks cannot be negative")
    if not 0.0 < detection_probability <= 1.0:
        raise ValidationError("detection probability must be in (0, 1]")
    if multiplier <= 0.0:
        raise ValidationError("multiplier must be positive")
    return max(1, math.ceil(multiplier * max_clicks / detection_probability))
