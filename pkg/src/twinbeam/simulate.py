"""Monte Carlo oracle of the detection chain, and the analytic forward map.

``forward`` pushes a joint photon-number distribution through one transfer
matrix per arm.  ``simulate_clicks`` replays the physical story pixel by
pixel: draw a photon pair number per frame, lose photons to transmission,
throw survivors onto pixels (uniformly or following a group profile), fire
every pixel that holds at least one registered photon, and add dark counts.
``simulate_occupancy_clicks`` instead samples the equal-weight occupancy
approximation used by the bright-field matrices, which differs from the
exact multinomial physics and therefore needs its own oracle.

Frames are generated in fixed-size chunks of ``CHUNK_FRAMES``; every chunk
draws from a counter-based generator keyed by (seed, role, chunk index), so
the stream is reproducible and independent of how chunks are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Literal, Sequence

import numpy as np

from .detector import DetectorModel, TransferMatrix, occupancy_distribution
from .distributions import JointDistribution
from .errors import ValidationError
from .profiles import PixelGroupProfile

#: Frames per RNG chunk; fixed so that seeds reproduce across machine sizes.
CHUNK_FRAMES = 1 << 18

PixelAssignment = Literal["uniform", "profile-weighted"]
DarkModel = Literal["per-pixel-bernoulli", "poisson-total"]


def forward(p: JointDistribution, g_signal: TransferMatrix, g_idler: TransferMatrix) -> JointDistribution:
    """Click distribution f(c_S, c_I) = sum G_S(c_S,n_S) G_I(c_I,n_I) p(n_S,n_I)."""
    rows, cols = p.values.shape
    if g_signal.n_max + 1 != rows or g_idler.n_max + 1 != cols:
        raise ValidationError(
            f"matrix columns (signal 0..{g_signal.n_max}, idler 0..{g_idler.n_max}) "
            f"do not span the distribution grid {rows}x{cols}"
        )
    return JointDistribution(g_signal.values @ p.values @ g_idler.values.T, kind="click")


@dataclass(frozen=True)
class SimConfig:
    """Simulation run description: size, seed, and the two model choices."""

    trials: int
    seed: int = 0
    pixel_assignment: PixelAssignment = "uniform"
    dark_model: DarkModel = "per-pixel-bernoulli"

    def __post_init__(self) -> None:
        if int(self.trials) != self.trials or self.trials < 1:
            raise ValidationError(f"trials must be a positive integer, got {self.trials!r}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValidationError(f"seed must fit an unsigned 64-bit integer, got {self.seed!r}")
        if self.pixel_assignment not in ("uniform", "profile-weighted"):
            raise ValidationError(f"unknown pixel assignment {self.pixel_assignment!r}")
        if self.dark_model not in ("per-pixel-bernoulli", "poisson-total"):
            raise ValidationError(f"unknown dark model {self.dark_model!r}")
        object.__setattr__(self, "trials", int(self.trials))
        object.__setattr__(self, "seed", int(self.seed))

    def as_params(self) -> dict:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "pixel_assignment": self.pixel_assignment,
            "dark_model": self.dark_model,
        }


@dataclass(frozen=True)
class FrameSample:
    """Click counts of one camera frame."""

    clicks_signal: int
    clicks_idler: int

    def __post_init__(self) -> None:
        if self.clicks_signal < 0 or self.clicks_idler < 0:
            raise ValidationError("click counts cannot be negative")


_ROLE_PAIRS = 0
_ROLE_SIGNAL = 1
_ROLE_IDLER = 2


def _chunk_rng(seed: int, role: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[seed, (role << 32) | chunk]))


def _draw_pairs(p: JointDistribution, seed: int, chunk: int, size: int) -> tuple[np.ndarray, np.ndarray]:
    rng = _chunk_rng(seed, _ROLE_PAIRS, chunk)
    flat = p.values.ravel()
    cdf = np.cumsum(flat)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(size), side="right")
    cols = p.values.shape[1]
    return idx // cols, idx % cols


def _distinct_counts(rng: np.random.Generator, landed: np.ndarray, pixels: int) -> np.ndarray:
    """Number of distinct pixels hit per frame, landed[i] photons thrown uniformly."""
    total = int(landed.sum())
    out = np.zeros(landed.size, dtype=np.int64)
    if total == 0:
        return out
    frame = np.repeat(np.arange(landed.size, dtype=np.int64), landed)
    keys = frame * pixels + rng.integers(0, pixels, total, dtype=np.int64)
    unique = np.unique(keys)
    np.add.at(out, unique // pixels, 1)
    return out


def _uniform_arm(
    rng: np.random.Generator,
    photons: np.ndarray,
    model: DetectorModel,
    dark_model: DarkModel,
) -> np.ndarray:
    survivors = rng.binomial(photons, model.transmission) if model.transmission < 1.0 else photons
    registered = rng.binomial(survivors, model.efficiency) if model.efficiency < 1.0 else survivors
    fired = _distinct_counts(rng, registered, model.pixels)
    if dark_model == "per-pixel-bernoulli":
        if model.dark_rate > 0.0:
            fired = fired + rng.binomial(model.pixels - fired, model.dark_rate)
    else:
        if model.dark_mean > 0.0:
            fired = fired + rng.poisson(model.dark_mean, fired.size)
    return fired


def _profile_arm(
    rng: np.random.Generator,
    photons: np.ndarray,
    profile: PixelGroupProfile,
    transmission: float,
    dark_model: DarkModel,
) -> np.ndarray:
    survivors = rng.binomial(photons, transmission) if transmission < 1.0 else photons
    hit = profile.pixel_counts * profile.landing_probabilities
    pvals = np.append(hit, max(0.0, 1.0 - hit.sum()))
    pvals /= pvals.sum()
    landed = rng.multinomial(survivors, pvals)[:, : profile.groups]
    fired = np.zeros(photons.size, dtype=np.int64)
    for j in range(profile.groups):
        eta = float(profile.efficiencies[j])
        registered = rng.binomial(landed[:, j], eta) if eta < 1.0 else landed[:, j]
        group_fired = _distinct_counts(rng, registered, int(profile.pixel_counts[j]))
        if dark_model == "per-pixel-bernoulli" and profile.dark_rates[j] > 0.0:
            group_fired = group_fired + rng.binomial(
                int(profile.pixel_counts[j]) - group_fired, float(profile.dark_rates[j])
            )
        fired += group_fired
    if dark_model == "poisson-total" and profile.dark_mean > 0.0:
        fired = fired + rng.poisson(profile.dark_mean, fired.size)
    return fired


def simulate_clicks(
    p: JointDistribution,
    model_signal: DetectorModel,
    model_idler: DetectorModel,
    config: SimConfig,
    profile_signal: PixelGroupProfile | None = None,
    profile_idler: PixelGroupProfile | None = None,
) -> tuple[JointDistribution, np.ndarray]:
    """Pixel-level Monte Carlo of the full chain; returns (histogram, raw counts).

    With profile-weighted assignment the per-arm profiles carry geometry,
    efficiency and dark rates; the detector models then only contribute the
    upstream transmission.  Raw counts come back as an (trials, 2) array.
    """
    if config.pixel_assignment == "profile-weighted":
        if profile_signal is None or profile_idler is None:
            raise ValidationError("profile-weighted assignment needs both arm profiles")
    counts = np.empty((config.trials, 2), dtype=np.int64)
    for chunk, start in enumerate(range(0, config.trials, CHUNK_FRAMES)):
        size = min(CHUNK_FRAMES, config.trials - start)
        n_signal, n_idler = _draw_pairs(p, config.seed, chunk, size)
        rng_s = _chunk_rng(config.seed, _ROLE_SIGNAL, chunk)
        rng_i = _chunk_rng(config.seed, _ROLE_IDLER, chunk)
        if config.pixel_assignment == "uniform":
            counts[start : start + size, 0] = _uniform_arm(rng_s, n_signal, model_signal, config.dark_model)
            counts[start : start + size, 1] = _uniform_arm(rng_i, n_idler, model_idler, config.dark_model)
        else:
            counts[start : start + size, 0] = _profile_arm(
                rng_s, n_signal, profile_signal, model_signal.transmission, config.dark_model
            )
            counts[start : start + size, 1] = _profile_arm(
                rng_i, n_idler, profile_idler, model_idler.transmission, config.dark_model
            )
    hist, _ = empirical_histogram(counts)
    return hist, counts


def simulate_occupancy_clicks(
    p: JointDistribution,
    model_signal: DetectorModel,
    model_idler: DetectorModel,
    config: SimConfig,
) -> tuple[JointDistribution, np.ndarray]:
    """Monte Carlo of the bright-field occupancy story rather than the exact chain.

    Survivors of the transmission stage occupy pixels with the equal-weight
    occupancy law; an occupied pixel holding a share of ``m`` photons over
    ``m2`` pixels fires with probability ``1 - exp(-eta m / m2)``, and dark
    counts are Poissonian with the regional mean.  This is the generative
    counterpart of the improved bright-field matrix.
    """
    counts = np.empty((config.trials, 2), dtype=np.int64)
    for chunk, start in enumerate(range(0, config.trials, CHUNK_FRAMES)):
        size = min(CHUNK_FRAMES, config.trials - start)
        n_signal, n_idler = _draw_pairs(p, config.seed, chunk, size)
        rng_s = _chunk_rng(config.seed, _ROLE_SIGNAL, chunk)
        rng_i = _chunk_rng(config.seed, _ROLE_IDLER, chunk)
        counts[start : start + size, 0] = _occupancy_arm(rng_s, n_signal, model_signal)
        counts[start : start + size, 1] = _occupancy_arm(rng_i, n_idler, model_idler)
    hist, _ = empirical_histogram(counts)
    return hist, counts


def _occupancy_arm(rng: np.random.Generator, photons: np.ndarray, model: DetectorModel) -> np.ndarray:
    survivors = rng.binomial(photons, model.transmission) if model.transmission < 1.0 else photons
    occupied = np.zeros(survivors.size, dtype=np.int64)
    for m1 in np.unique(survivors):
        mask = survivors == m1
        if m1 == 0:
            continue
        cdf = np.cumsum(occupancy_distribution(model.pixels, int(m1)))
        occupied[mask] = np.searchsorted(cdf, rng.random(int(mask.sum())), side="right")
    fire = np.zeros(survivors.size)
    positive = occupied > 0
    fire[positive] = -np.expm1(-model.efficiency * survivors[positive] / occupied[positive])
    clicks = rng.binomial(occupied, fire)
    if model.dark_mean > 0.0:
        clicks = clicks + rng.poisson(model.dark_mean, clicks.size)
    return clicks


def empirical_histogram(
    frames: np.ndarray | Iterable[FrameSample | Sequence[int]],
) -> tuple[JointDistribution, np.ndarray]:
    """Normalized click histogram plus the raw 2-D count table."""
    if isinstance(frames, np.ndarray):
        pairs = frames
    else:
        rows = []
        for frame in frames:
            if isinstance(frame, FrameSample):
                rows.append((frame.clicks_signal, frame.clicks_idler))
            else:
                rows.append((int(frame[0]), int(frame[1])))
        pairs = np.array(rows, dtype=np.int64).reshape(-1, 2)
    if pairs.size == 0:
        raise ValidationError("cannot build a histogram from zero frames")
    if pairs.ndim != 2 or pairs.shape[1] != 2 or np.any(pairs < 0):
        raise ValidationError("frames must be nonnegative (clicks_S, clicks_I) pairs")
    table = np.zeros((int(pairs[:, 0].max()) + 1, int(pairs[:, 1].max()) + 1), dtype=np.int64)
    np.add.at(table, (pairs[:, 0], pairs[:, 1]), 1)
    return JointDistribution(table / pairs.shape[0], kind="click"), table
