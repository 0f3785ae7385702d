"""Figure rendering for the command-line reports.

Every helper writes a PNG next to the delimited output it illustrates and
returns the path.  The Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .detector import TransferMatrix
from .distributions import Distribution1D


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def render_joint_table(
    path: str | Path, values: np.ndarray, title: str, xlabel: str = "idler count", ylabel: str = "signal count"
) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    image = ax.imshow(values, origin="lower", aspect="auto", cmap="viridis")
    fig.colorbar(image, ax=ax, shrink=0.85)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _save(fig, path)


def render_difference_table(path: str | Path, difference: np.ndarray, title: str) -> Path:
    extreme = float(np.max(np.abs(difference))) or 1.0
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    image = ax.imshow(difference, origin="lower", aspect="auto", cmap="RdBu_r", vmin=-extreme, vmax=extreme)
    fig.colorbar(image, ax=ax, shrink=0.85)
    ax.set_xlabel("idler count")
    ax.set_ylabel("signal count")
    ax.set_title(title)
    return _save(fig, path)


def render_matrix(path: str | Path, matrix: TransferMatrix) -> Path:
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    # log color scale: column tails span many decades
    floored = np.where(matrix.values > 0.0, matrix.values, np.nan)
    image = ax.imshow(np.log10(floored), origin="lower", aspect="auto", cmap="magma")
    fig.colorbar(image, ax=ax, shrink=0.85, label="log10 probability")
    ax.set_xlabel("photon number n")
    ax.set_ylabel("click count c")
    ax.set_title(f"{matrix.variant} transfer matrix")
    return _save(fig, path)


def render_trace(path: str | Path, iterations: np.ndarray, residual: np.ndarray, covariance: np.ndarray) -> Path:
    fig, ax_residual = plt.subplots(figsize=(5.6, 3.8))
    ax_residual.plot(iterations, residual, color="tab:blue", label="residual")
    ax_residual.set_xlabel("iteration")
    ax_residual.set_ylabel("residual", color="tab:blue")
    ax_residual.set_yscale("log")
    ax_covariance = ax_residual.twinx()
    ax_covariance.plot(iterations, covariance, color="tab:red", label="covariance")
    ax_covariance.set_ylabel("covariance coefficient", color="tab:red")
    ax_residual.set_title("reconstruction trace")
    return _save(fig, path)


def render_distribution_1d(path: str | Path, distribution: Distribution1D, title: str) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.bar(distribution.support(), distribution.values, width=0.85, color="tab:blue")
    ax.set_xlabel("count")
    ax.set_ylabel("probability")
    ax.set_title(title)
    return _save(fig, path)


def render_landscape(path: str | Path, landscape: np.ndarray) -> Path:
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    order = np.argsort(landscape[:, 0])
    scatter = ax.scatter(
        landscape[order, 0], landscape[order, 3], c=np.log10(landscape[order, 1]), s=12, cmap="viridis"
    )
    fig.colorbar(scatter, ax=ax, shrink=0.85, label="log10 signal-noise modes")
    ax.set_xscale("log")
    ax.set_xlabel("pair modes")
    ax.set_ylabel("click-distribution entropy")
    ax.set_title("entropy landscape")
    return _save(fig, path)


def render_violation_mask(path: str | Path, mask: np.ndarray) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    ax.imshow(mask.astype(int), origin="lower", aspect="auto", cmap="Greys", vmin=0, vmax=1)
    ax.set_xlabel("idler count")
    ax.set_ylabel("signal count")
    ax.set_title("classical-bound violations")
    return _save(fig, path)
