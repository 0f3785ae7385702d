"""Multi-coincidence probabilities for detectors with individual characteristics.

Each beam feeds a 1-to-N multi-port; output ``j`` carries amplitude
transmissivity ``t_j`` into its own on/off detector with efficiency
``eta_j`` and dark-count probability ``d_j``.  The beam reaches the
multi-port at all with probability ``transmission``.  The probability that
exactly a chosen set of detectors fires is an inclusion-exclusion over the
subsets of that set, evaluated here in exact rational arithmetic; this is
the oracle-scale ground truth the uniform transfer matrices must reproduce
when all detectors share one parameter set.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Sequence

from .errors import BudgetExceededError, ValidationError

#: Inclusion-exclusion enumerates subsets of the fired set; keep it oracle-sized.
MAX_DETECTORS = 12


def _as_detectors(params: Sequence[tuple], side: str) -> list[tuple[Fraction, Fraction, Fraction]]:
    detectors = []
    for j, (t, eta, d) in enumerate(params):
        if not (0.0 <= t <= 1.0 and 0.0 <= eta <= 1.0 and 0.0 <= d < 1.0):
            raise ValidationError(f"{side} detector {j} parameters out of range: {(t, eta, d)!r}")
        detectors.append((Fraction(t) ** 2, Fraction(eta), Fraction(d)))
    if not detectors:
        raise ValidationError(f"{side} detector list is empty")
    if len(detectors) > MAX_DETECTORS:
        raise BudgetExceededError(
            f"{side} side has {len(detectors)} detectors; subset enumeration is "
            f"capped at {MAX_DETECTORS}"
        )
    weight = sum(w for w, _, _ in detectors)
    if abs(float(weight) - 1.0) > 1e-9:
        raise ValidationError(
            f"{side} multi-port is not unitary: sum of |t|^2 is {float(weight)!r}"
        )
    return detectors


def fired_set_kernel(
    photons: int,
    fired: Sequence[int],
    detectors: Sequence[tuple],
    transmission: float,
    side: str = "signal",
) -> Fraction:
    """Probability that exactly the ``fired`` detectors click given ``photons``.

    Inclusion-exclusion over subsets B of the fired set: detectors in B are
    treated as unconditionally transparent, the rest keep their
    no-registration weight, and every detector outside B must not
    dark-count.
    """
    dets = _as_detectors(detectors, side)
    fired = sorted(set(int(j) for j in fired))
    if fired and (fired[0] < 0 or fired[-1] >= len(dets)):
        raise ValidationError(f"fired indices {fired!r} outside detector range")
    t_loss = Fraction(transmission)
    if not (0 <= t_loss <= 1):
        raise ValidationError(f"transmission must be a probability, got {transmission!r}")
    reflection = 1 - t_loss

    all_idx = range(len(dets))
    base_plain = reflection + t_loss * sum(w * (1 - eta) for w, eta, _ in dets)
    dark_all = math.prod((1 - d for _, _, d in dets), start=Fraction(1))

    c = len(fired)
    total = Fraction(0)
    for mask in range(1 << c):
        members = [fired[pos] for pos in range(c) if mask >> pos & 1]
        base = base_plain + t_loss * sum(dets[j][0] * dets[j][1] for j in members)
        dark = dark_all
        for j in members:
            dark /= 1 - dets[j][2]
        sign = 1 if (c - len(members)) % 2 == 0 else -1
        total += sign * dark * base**photons
    return total


def general_coincidence_probability(
    joint,
    signal_detectors: Sequence[tuple],
    idler_detectors: Sequence[tuple],
    signal_fired: Sequence[int],
    idler_fired: Sequence[int],
    signal_transmission: float = 1.0,
    idler_transmission: float = 1.0,
) -> float:
    """Probability that exactly the given detector sets fire on each side.

    ``joint`` is the photon-pair distribution feeding the two multi-ports;
    detector parameter lists hold ``(t, eta, d)`` triples per output.
    """
    values = joint.values
    signal_kernel = [
        fired_set_kernel(n, signal_fired, signal_detectors, signal_transmission, "signal")
        for n in range(values.shape[0])
    ]
    idler_kernel = [
        fired_set_kernel(n, idler_fired, idler_detectors, idler_transmission, "idler")
        for n in range(values.shape[1])
    ]
    total = 0.0
    for ns in range(values.shape[0]):
        ks = float(signal_kernel[ns])
        if ks == 0.0:
            continue
        row = values[ns]
        for ni in range(values.shape[1]):
            if row[ni]:
                total += row[ni] * ks * float(idler_kernel[ni])
    return total


def symmetric_click_histogram(
    joint,
    signal_pixels: int,
    idler_pixels: int,
    signal_params: tuple[float, float, float],
    idler_params: tuple[float, float, float],
) -> "np.ndarray":
    """Click histogram of two identical-detector multi-ports via fired-set counting.

    ``*_params`` are ``(transmission, eta, d)`` shared by every output of a
    side.  Any fired set of a given size has the same probability, so the
    histogram entry is the binomial count of sets times the kernel of one
    representative; this assembles the same observable as forwarding the
    photon distribution through the uniform transfer matrices.
    """
    import numpy as np

    t_s, eta_s, d_s = signal_params
    t_i, eta_i, d_i = idler_params
    out = np.zeros((signal_pixels + 1, idler_pixels + 1))
    values = joint.values
    sig_kernels = {
        c: [
            float(_uniform_fired_kernel(n, c, signal_pixels, eta_s, d_s, t_s))
            for n in range(values.shape[0])
        ]
        for c in range(signal_pixels + 1)
    }
    idl_kernels = {
        c: [
            float(_uniform_fired_kernel(n, c, idler_pixels, eta_i, d_i, t_i))
            for n in range(values.shape[1])
        ]
        for c in range(idler_pixels + 1)
    }
    for cs in range(signal_pixels + 1):
        for ci in range(idler_pixels + 1):
            ks = np.array(sig_kernels[cs])
            ki = np.array(idl_kernels[ci])
            out[cs, ci] = (
                math.comb(signal_pixels, cs)
                * math.comb(idler_pixels, ci)
                * float(ks @ values @ ki)
            )
    return out


def _uniform_fired_kernel(
    photons: int, fired_count: int, pixels: int, eta: float, dark: float, transmission: float
) -> Fraction:
    """fired_set_kernel for identical detectors, O(c) instead of O(2^c)."""
    w = Fraction(1, pixels)
    eta_f, d_f, t_f = Fraction(eta), Fraction(dark), Fraction(transmission)
    base_plain = (1 - t_f) + t_f * pixels * w * (1 - eta_f)
    total = Fraction(0)
    dark_all = (1 - d_f) ** pixels
    for b in range(fired_count + 1):
        sign = 1 if (fired_count - b) % 2 == 0 else -1
        base = base_plain + t_f * b * w * eta_f
        total += sign * math.comb(fired_count, b) * dark_all / (1 - d_f) ** b * base**photons
    return total
