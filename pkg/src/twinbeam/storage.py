"""File formats: delimited tables for arrays, flat key-value text for scalars.

Floats are written with ``repr`` so every value round-trips bit-exactly;
writers emit LF line endings and a fixed column order so rewriting a loaded
file reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .detector import TransferMatrix
from .distributions import Distribution1D, JointDistribution
from .errors import DataFormatError
from .profiles import PixelGroupProfile


def _open_writer(path: Path):
    return open(path, "w", newline="")


def _format(value: object) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _parse_scalar(text: str) -> object:
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _read_rows(path: Path, header: list[str]) -> list[list[str]]:
    try:
        with open(path, newline="") as handle:
            rows = list(csv.reader(handle))
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != header:
        raise DataFormatError(f"{path}: expected header {','.join(header)}")
    return rows[1:]


def save_matrix(path: str | Path, matrix: TransferMatrix) -> None:
    """Write `c,n,value` rows plus a JSON sidecar with the metadata."""
    path = Path(path)
    with _open_writer(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["c", "n", "value"])
        for c in range(matrix.c_max + 1):
            for n in range(matrix.n_max + 1):
                writer.writerow([c, n, repr(float(matrix.values[c, n]))])
    sidecar = {
        "variant": matrix.variant,
        "params": matrix.params,
        "digits": matrix.digits,
        "c_max": matrix.c_max,
        "n_max": matrix.n_max,
        "max_column_defect": float(np.max(matrix.column_defects())),
        "tail_bounds": None if matrix.tail_bounds is None else [float(t) for t in matrix.tail_bounds],
    }
    sidecar_path = path.with_suffix(".json")
    with open(sidecar_path, "w") as handle:
        json.dump(sidecar, handle, indent=1, sort_keys=True)
        handle.write("\n")


def load_matrix(path: str | Path) -> TransferMatrix:
    path = Path(path)
    sidecar_path = path.with_suffix(".json")
    try:
        with open(sidecar_path) as handle:
            meta = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read matrix metadata {sidecar_path}: {exc}") from exc
    rows = _read_rows(path, ["c", "n", "value"])
    values = np.zeros((meta["c_max"] + 1, meta["n_max"] + 1))
    try:
        for c_text, n_text, value_text in rows:
            values[int(c_text), int(n_text)] = float(value_text)
    except (ValueError, IndexError) as exc:
        raise DataFormatError(f"{path}: bad matrix row: {exc}") from exc
    tails = meta.get("tail_bounds")
    return TransferMatrix(
        values,
        variant=meta["variant"],
        params=meta["params"],
        tail_bounds=None if tails is None else np.array(tails, dtype=float),
        digits=meta["digits"],
    )


def save_histogram(path: str | Path, counts: np.ndarray) -> None:
    """Write nonzero `c_s,c_i,count` rows in row-major order."""
    counts = np.asarray(counts)
    if counts.ndim != 2 or np.any(counts < 0):
        raise DataFormatError("histogram must be a nonnegative 2-D count table")
    with _open_writer(Path(path)) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["c_s", "c_i", "count"])
        for c_s, c_i in np.argwhere(counts > 0):
            writer.writerow([int(c_s), int(c_i), int(counts[c_s, c_i])])


def load_histogram(path: str | Path) -> np.ndarray:
    rows = _read_rows(Path(path), ["c_s", "c_i", "count"])
    if not rows:
        raise DataFormatError(f"{path}: histogram has no rows")
    try:
        parsed = [(int(a), int(b), int(c)) for a, b, c in rows]
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad histogram row: {exc}") from exc
    if any(a < 0 or b < 0 or c < 0 for a, b, c in parsed):
        raise DataFormatError(f"{path}: negative entries in histogram")
    counts = np.zeros((max(a for a, _, _ in parsed) + 1, max(b for _, b, _ in parsed) + 1), dtype=np.int64)
    for a, b, c in parsed:
        counts[a, b] += c
    return counts


def save_joint_distribution(path: str | Path, distribution: JointDistribution) -> None:
    """Write nonzero `n_s,n_i,p` rows in row-major order."""
    with _open_writer(Path(path)) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["n_s", "n_i", "p"])
        for n_s, n_i in np.argwhere(distribution.values > 0):
            writer.writerow([int(n_s), int(n_i), repr(float(distribution.values[n_s, n_i]))])


def load_joint_distribution(path: str | Path, kind: str = "photon") -> JointDistribution:
    rows = _read_rows(Path(path), ["n_s", "n_i", "p"])
    if not rows:
        raise DataFormatError(f"{path}: distribution has no rows")
    try:
        parsed = [(int(a), int(b), float(p)) for a, b, p in rows]
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad distribution row: {exc}") from exc
    values = np.zeros((max(a for a, _, _ in parsed) + 1, max(b for _, b, _ in parsed) + 1))
    for a, b, p in parsed:
        values[a, b] = p
    return JointDistribution(values, kind=kind)


def save_difference(path: str | Path, difference: np.ndarray) -> None:
    """Write nonzero `n_s,n_i,dp` rows of a signed difference table."""
    difference = np.asarray(difference, dtype=float)
    with _open_writer(Path(path)) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["n_s", "n_i", "dp"])
        for n_s, n_i in np.argwhere(difference != 0.0):
            writer.writerow([int(n_s), int(n_i), repr(float(difference[n_s, n_i]))])


def save_distribution_1d(path: str | Path, distribution: Distribution1D) -> None:
    """Write `n,p` rows; n may be negative for difference-count axes."""
    with _open_writer(Path(path)) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["n", "p"])
        for n, p in zip(distribution.support(), distribution.values):
            writer.writerow([int(n), repr(float(p))])


def save_trace(path: str | Path, iterations: np.ndarray, residual: np.ndarray, covariance: np.ndarray) -> None:
    with _open_writer(Path(path)) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["iteration", "S", "C"])
        for i, s, c in zip(iterations, residual, covariance):
            writer.writerow([int(i), repr(float(s)), repr(float(c))])


def save_landscape(path: str | Path, landscape: np.ndarray) -> None:
    with _open_writer(Path(path)) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["m_p", "m_S", "m_I", "entropy"])
        for m_p, m_s, m_i, entropy in landscape:
            writer.writerow([repr(float(m_p)), repr(float(m_s)), repr(float(m_i)), repr(float(entropy))])


def save_profile(path: str | Path, profile: PixelGroupProfile) -> None:
    with _open_writer(Path(path)) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["group", "nu", "tau", "eta", "d"])
        for j in range(profile.groups):
            writer.writerow(
                [
                    j,
                    int(profile.pixel_counts[j]),
                    repr(float(profile.landing_probabilities[j])),
                    repr(float(profile.efficiencies[j])),
                    repr(float(profile.dark_rates[j])),
                ]
            )


def load_profile(path: str | Path) -> PixelGroupProfile:
    rows = _read_rows(Path(path), ["group", "nu", "tau", "eta", "d"])
    if not rows:
        raise DataFormatError(f"{path}: profile has no rows")
    try:
        parsed = [(int(g), int(nu), float(tau), float(eta), float(d)) for g, nu, tau, eta, d in rows]
    except ValueError as exc:
        raise DataFormatError(f"{path}: bad profile row: {exc}") from exc
    return PixelGroupProfile(
        pixel_counts=[r[1] for r in parsed],
        landing_probabilities=[r[2] for r in parsed],
        efficiencies=[r[3] for r in parsed],
        dark_rates=[r[4] for r in parsed],
    )


def save_key_values(path: str | Path, entries: Mapping[str, object]) -> None:
    """Write `key = value` lines; insertion order is preserved."""
    with open(Path(path), "w") as handle:
        for key, value in entries.items():
            handle.write(f"{key} = {_format(value)}\n")


def load_key_values(path: str | Path) -> dict[str, object]:
    result: dict[str, object] = {}
    try:
        lines: Iterable[str] = open(Path(path)).read().splitlines()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise DataFormatError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        result[key.strip()] = _parse_scalar(raw.strip())
    return result
