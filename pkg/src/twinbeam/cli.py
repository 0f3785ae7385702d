"""Command-line front end.

Six subcommands cover the pipeline: ``matrices`` builds and stores a
transfer matrix, ``simulate`` produces a click histogram from a photon
distribution or fitted model parameters, ``reconstruct`` runs the
expectation-maximization recovery, ``fit`` runs the moment fit,
``compare`` diffs two photon distributions, and ``stats`` summarizes one.

Configuration is a flat key-value file; command-line flags override file
values, which override built-in defaults, and every run echoes the
effective configuration into the output directory.  Exit codes: 0 success,
2 usage, 3 data or configuration problems, 4 model mismatch or an
infeasible fit, 5 exhausted precision or budget limits.
"""

from __future__ import annotations

import math
import sys
from pathlib import Path

import click
import numpy as np

from . import detector, figures, noisemodel, profiles, reconstruct, simulate, storage
from .distributions import (
    JointDistribution,
    classical_violation_mask,
    noise_reduction_factor,
    sum_diff_distributions,
)
from .errors import (
    BudgetExceededError,
    DataFormatError,
    DegenerateDistributionError,
    FitInfeasibleError,
    ModelMismatchError,
    NormalizationError,
    PrecisionExhaustedError,
    TwinbeamError,
    ValidationError,
)

EXIT_DATA = 3
EXIT_MODEL = 4
EXIT_BUDGET = 5

DEFAULTS: dict[str, object] = {
    "variant": "infinite",
    "n_max": 60,
    "c_max": "auto",
    "digits": "auto",
    "trials": 100000,
    "seed": 0,
    "pixel_assignment": "uniform",
    "dark_model": "per-pixel-bernoulli",
    "signal_tau": "auto",
    "signal_transmission": 1.0,
    "signal_efficiency": 0.2,
    "signal_pixels": 1024,
    "signal_dark_rate": 0.0,
    "signal_dark_mean": "auto",
    "signal_profile": "auto",
    "idler_tau": "auto",
    "idler_transmission": 1.0,
    "idler_efficiency": 0.2,
    "idler_pixels": 1024,
    "idler_dark_rate": 0.0,
    "idler_dark_mean": "auto",
    "idler_profile": "auto",
    "model_n_max": "auto",
    "em_max_iterations": 10000,
    "em_record_every": 10,
    "em_plateau_window": 50,
    "em_plateau_tol": 1e-5,
    "em_residual_tol": 1e-6,
    "em_photon_ceiling": "auto",
    "em_ceiling_multiplier": 1.5,
    "fit_dark_signal": 0.0,
    "fit_dark_idler": 0.0,
    "fit_include_dark": True,
    "fit_pair_modes_low": 1.0,
    "fit_pair_modes_high": 10000.0,
    "fit_noise_modes_low": 0.001,
    "fit_noise_modes_high": 100.0,
    "fit_coarse_per_decade": 5,
    "fit_refine_per_decade": 25,
    "fit_click_ceiling": "auto",
    "fit_n_max": "auto",
}

_VARIANTS = (
    "exact-finite",
    "infinite",
    "bernoulli",
    "intense",
    "improved-intense",
    "exponential",
    "profile-exact",
    "profile-infinite",
    "profile-exponential",
    "profile-lowcount",
)


def _auto(value: object) -> object | None:
    return None if value in (None, "auto", "") else value


def _effective_config(config_path: str | None, overrides: dict[str, object]) -> dict[str, object]:
    config = dict(DEFAULTS)
    if config_path is not None:
        loaded = storage.load_key_values(config_path)
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise DataFormatError(f"{config_path}: unknown configuration keys {unknown}")
        config.update(loaded)
    for key, value in overrides.items():
        if value is not None:
            config[key] = value
    return config


def _echo_config(config: dict[str, object], out_dir: Path) -> None:
    storage.save_key_values(out_dir / "effective_config.txt", dict(sorted(config.items())))


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _arm_model(config: dict[str, object], arm: str) -> detector.DetectorModel:
    pixels = int(config[f"{arm}_pixels"])
    tau = _auto(config[f"{arm}_tau"])
    dark_mean = _auto(config[f"{arm}_dark_mean"])
    dark_rate = float(config[f"{arm}_dark_rate"]) if dark_mean is None else float(dark_mean) / pixels
    if tau is not None:
        transmission, efficiency = 1.0, float(tau)
    else:
        transmission = float(config[f"{arm}_transmission"])
        efficiency = float(config[f"{arm}_efficiency"])
    return detector.DetectorModel(
        transmission=transmission, pixels=pixels, efficiency=efficiency, dark_rate=dark_rate
    )


def _arm_profile(config: dict[str, object], arm: str) -> profiles.PixelGroupProfile | None:
    path = _auto(config[f"{arm}_profile"])
    return None if path is None else storage.load_profile(str(path))


def _build_matrix(config: dict[str, object], arm: str, n_max: int, c_max: int | None) -> detector.TransferMatrix:
    variant = str(config["variant"])
    if variant not in _VARIANTS:
        raise click.UsageError(f"unknown variant {variant!r}; choose from {', '.join(_VARIANTS)}")
    digits = _auto(config["digits"])
    digits = None if digits is None else int(digits)
    model = _arm_model(config, arm)
    if variant.startswith("profile-"):
        profile = _arm_profile(config, arm)
        if profile is None:
            raise click.UsageError(f"variant {variant!r} needs --profile or {arm}_profile")
        if variant == "profile-exact":
            return profiles.profile_matrix_exact(profile, n_max, c_max=c_max, digits=digits)
        if variant == "profile-infinite":
            return profiles.profile_matrix_infinite(profile, n_max, c_max=c_max)
        if variant == "profile-exponential":
            return profiles.profile_matrix_exponential(profile, n_max, c_max=c_max)
        if c_max is None:
            raise click.UsageError("variant 'profile-lowcount' needs an explicit --c-max")
        return profiles.profile_matrix_lowcount(profile, n_max, c_max, digits=digits)
    if variant == "exact-finite":
        return detector.finite_pixel_matrix(model, n_max, c_max=c_max, digits=digits)
    if variant == "infinite":
        return detector.infinite_pixel_matrix(model.detection_probability, model.dark_mean, n_max, c_max=c_max)
    if variant == "bernoulli":
        return detector.bernoulli_matrix(model.detection_probability, n_max, c_max=c_max)
    if variant == "intense":
        return detector.intense_field_matrix(model, n_max, c_max=c_max)
    if variant == "improved-intense":
        return detector.improved_intense_matrix(model, n_max, c_max=c_max)
    return detector.exponential_approx_matrix(model, n_max, c_max=c_max)


def _guarded(value_fn):
    try:
        return value_fn()
    except DegenerateDistributionError:
        return math.nan


def _joint_summary(joint: JointDistribution) -> dict[str, object]:
    signal, idler = joint.marginals()
    mask = classical_violation_mask(joint)
    return {
        "mean_signal": signal.mean(),
        "mean_idler": idler.mean(),
        "fano_signal": _guarded(signal.fano),
        "fano_idler": _guarded(idler.fano),
        "covariance_coefficient": _guarded(joint.covariance_coefficient),
        "noise_reduction": _guarded(lambda: noise_reduction_factor(joint)),
        "violation_cells": int(mask.sum()),
        "violation_mass": float(joint.values[mask].sum()),
    }


class _ExitMapping:
    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, traceback):
        if exc is None or not isinstance(exc, TwinbeamError):
            return False
        click.echo(f"error: {exc}", err=True)
        if isinstance(exc, (BudgetExceededError, PrecisionExhaustedError)):
            sys.exit(EXIT_BUDGET)
        if isinstance(exc, (ModelMismatchError, FitInfeasibleError)):
            sys.exit(EXIT_MODEL)
        if isinstance(
            exc, (DataFormatError, ValidationError, NormalizationError, DegenerateDistributionError)
        ):
            sys.exit(EXIT_DATA)
        sys.exit(EXIT_DATA)


def common_options(command):
    for option in (
        click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="Flat key-value configuration file."),
        click.option("--out", "out_path", type=click.Path(file_okay=False), default="out",
                     show_default=True, help="Output directory."),
        click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Random seed."),
        click.option("--variant", type=str, default=None, help="Transfer-matrix variant."),
        click.option("--n-max", "n_max", type=click.IntRange(0), default=None, help="Photon-number ceiling."),
        click.option("--c-max", "c_max", type=click.IntRange(0), default=None, help="Click-count ceiling."),
        click.option("--iters", type=click.IntRange(1), default=None, help="Reconstruction iteration budget."),
        click.option("--profile", "profile_path", type=click.Path(dir_okay=False), default=None,
                     help="Pixel-group profile CSV used for both arms."),
    ):
        command = option(command)
    return command


def _collect_overrides(config_path, seed, variant, n_max, c_max, iters, profile_path) -> dict[str, object]:
    overrides: dict[str, object] = {
        "seed": seed,
        "variant": variant,
        "n_max": n_max,
        "c_max": c_max,
        "em_max_iterations": iters,
    }
    if profile_path is not None:
        overrides["signal_profile"] = profile_path
        overrides["idler_profile"] = profile_path
    return overrides


@click.group()
def main() -> None:
    """Photon-pair click statistics: matrices, simulation, reconstruction."""


@main.command("matrices")
@common_options
def cmd_matrices(config_path, out_path, seed, variant, n_max, c_max, iters, profile_path) -> None:
    """Build the configured transfer matrix and write it with metadata."""
    with _ExitMapping():
        config = _effective_config(config_path, _collect_overrides(config_path, seed, variant, n_max, c_max, iters, profile_path))
        out = _out_dir(out_path)
        matrix = _build_matrix(config, "signal", int(config["n_max"]), _auto_int(config["c_max"]))
        storage.save_matrix(out / "matrix.csv", matrix)
        figures.render_matrix(out / "matrix.png", matrix)
        _echo_config(config, out)
        click.echo(f"variant = {matrix.variant}")
        click.echo(f"max_column_defect = {np.max(matrix.column_defects()):.3e}")
        click.echo(f"digits = {matrix.digits if matrix.digits is not None else 'double'}")


def _auto_int(value: object) -> int | None:
    value = _auto(value)
    return None if value is None else int(value)


@main.command("simulate")
@common_options
@click.option("--input", "input_path", type=click.Path(dir_okay=False), default=None,
              help="Photon distribution CSV (n_s,n_i,p).")
@click.option("--params", "params_path", type=click.Path(dir_okay=False), default=None,
              help="Fitted model parameter file; supplies the source and the detector (tau, D).")
def cmd_simulate(config_path, out_path, seed, variant, n_max, c_max, iters, profile_path,
                 input_path, params_path) -> None:
    """Monte Carlo click histogram for a photon distribution or fitted model."""
    with _ExitMapping():
        config = _effective_config(config_path, _collect_overrides(config_path, seed, variant, n_max, c_max, iters, profile_path))
        if (input_path is None) == (params_path is None):
            raise click.UsageError("provide exactly one of --input or --params")
        out = _out_dir(out_path)
        model_signal = _arm_model(config, "signal")
        model_idler = _arm_model(config, "idler")
        if input_path is not None:
            p = storage.load_joint_distribution(input_path, kind="photon")
        else:
            raw = storage.load_key_values(params_path)
            params = noisemodel.FitParams(**{key: float(value) for key, value in raw.items()})
            p = noisemodel.model_distribution(params, _auto_int(config["model_n_max"]))
            # the params file fixes the detector too; only the pixel
            # geometry still comes from the configuration
            model_signal = detector.DetectorModel(
                transmission=1.0,
                pixels=model_signal.pixels,
                efficiency=params.tau_S,
                dark_rate=params.D_S / model_signal.pixels,
            )
            model_idler = detector.DetectorModel(
                transmission=1.0,
                pixels=model_idler.pixels,
                efficiency=params.tau_I,
                dark_rate=params.D_I / model_idler.pixels,
            )
        sim_config = simulate.SimConfig(
            trials=int(config["trials"]),
            seed=int(config["seed"]),
            pixel_assignment=str(config["pixel_assignment"]),
            dark_model=str(config["dark_model"]),
        )
        histogram, counts = simulate.simulate_clicks(
            p,
            model_signal,
            model_idler,
            sim_config,
            profile_signal=_arm_profile(config, "signal"),
            profile_idler=_arm_profile(config, "idler"),
        )
        table = np.zeros(histogram.values.shape, dtype=np.int64)
        np.add.at(table, (counts[:, 0], counts[:, 1]), 1)
        storage.save_histogram(out / "histogram.csv", table)
        figures.render_joint_table(out / "histogram.png", histogram.values, "simulated click histogram")
        _echo_config(config, out)
        summary = _joint_summary(histogram)
        for key in ("mean_signal", "mean_idler", "covariance_coefficient"):
            click.echo(f"{key} = {summary[key]:.6f}")


@main.command("reconstruct")
@common_options
@click.argument("histogram", type=click.Path(dir_okay=False))
def cmd_reconstruct(config_path, out_path, seed, variant, n_max, c_max, iters, profile_path, histogram) -> None:
    """Recover the photon-number distribution behind a click histogram."""
    with _ExitMapping():
        config = _effective_config(config_path, _collect_overrides(config_path, seed, variant, n_max, c_max, iters, profile_path))
        out = _out_dir(out_path)
        counts = storage.load_histogram(histogram)
        observed_c = max(counts.shape) - 1
        grid_c = _auto_int(config["c_max"])
        if grid_c is None:
            grid_c = observed_c
        elif grid_c < observed_c:
            raise ValidationError(
                f"histogram holds clicks up to {observed_c} but c_max = {grid_c}; "
                "raise --c-max or rebin the data"
            )
        padded = np.zeros((grid_c + 1, grid_c + 1), dtype=np.int64)
        padded[: counts.shape[0], : counts.shape[1]] = counts
        f = JointDistribution(padded / padded.sum(), kind="click")

        ceiling = _auto_int(config["em_photon_ceiling"])
        matrices = []
        for arm in ("signal", "idler"):
            arm_ceiling = ceiling
            if arm_ceiling is None:
                arm_ceiling = reconstruct.default_photon_ceiling(
                    grid_c,
                    _arm_model(config, arm).detection_probability,
                    float(config["em_ceiling_multiplier"]),
                )
            matrices.append(_build_matrix(config, arm, arm_ceiling, grid_c))
        g_signal, g_idler = matrices

        options = reconstruct.EmOptions(
            max_iterations=int(config["em_max_iterations"]),
            record_every=int(config["em_record_every"]),
            plateau_window=int(config["em_plateau_window"]),
            plateau_tol=_auto_float(config["em_plateau_tol"]),
            residual_tol=_auto_float(config["em_residual_tol"]),
        )
        try:
            result = reconstruct.reconstruct(f, g_signal, g_idler, options)
        except ModelMismatchError as exc:
            raise ModelMismatchError(
                f"{exc}; try a larger photon ceiling (em_photon_ceiling), a nonzero dark rate, "
                "or a matrix variant matching the detector"
            ) from exc

        storage.save_joint_distribution(out / "p_rec.csv", result.p_rec)
        storage.save_trace(out / "trace.csv", result.trace_iterations, result.trace_residual, result.trace_covariance)
        figures.render_joint_table(out / "p_rec.png", result.p_rec.values, "reconstructed photon distribution")
        figures.render_trace(out / "trace.png", result.trace_iterations, result.trace_residual, result.trace_covariance)

        summary = _joint_summary(result.p_rec)
        summary["iterations_run"] = result.iterations_run
        summary["stop_reason"] = result.stop_reason
        summary["final_residual"] = float(result.trace_residual[-1])
        summary["final_mass_defect"] = float(result.trace_mass_defect[-1])
        storage.save_key_values(out / "report.txt", summary)
        p_sum, p_diff = sum_diff_distributions(result.p_rec)
        storage.save_distribution_1d(out / "p_plus.csv", p_sum)
        storage.save_distribution_1d(out / "p_minus.csv", p_diff)
        figures.render_distribution_1d(out / "p_plus.png", p_sum, "count-sum distribution")
        figures.render_distribution_1d(out / "p_minus.png", p_diff, "count-difference distribution")
        figures.render_violation_mask(out / "violations.png", classical_violation_mask(result.p_rec))
        _echo_config(config, out)
        for key in ("covariance_coefficient", "noise_reduction", "stop_reason", "iterations_run"):
            click.echo(f"{key} = {summary[key]}")


def _auto_float(value: object) -> float | None:
    value = _auto(value)
    return None if value is None else float(value)


@main.command("fit")
@common_options
@click.argument("histogram", type=click.Path(dir_okay=False))
def cmd_fit(config_path, out_path, seed, variant, n_max, c_max, iters, profile_path, histogram) -> None:
    """Fit the thermal signal+noise model to a click histogram."""
    with _ExitMapping():
        config = _effective_config(config_path, _collect_overrides(config_path, seed, variant, n_max, c_max, iters, profile_path))
        out = _out_dir(out_path)
        counts = storage.load_histogram(histogram)
        f = JointDistribution(counts / counts.sum(), kind="click")
        options = noisemodel.FitOptions(
            dark_signal=float(config["fit_dark_signal"]),
            dark_idler=float(config["fit_dark_idler"]),
            include_dark=bool(config["fit_include_dark"]),
            pair_mode_bounds=(float(config["fit_pair_modes_low"]), float(config["fit_pair_modes_high"])),
            noise_mode_bounds=(float(config["fit_noise_modes_low"]), float(config["fit_noise_modes_high"])),
            coarse_per_decade=int(config["fit_coarse_per_decade"]),
            refine_per_decade=int(config["fit_refine_per_decade"]),
            click_ceiling=_auto_int(config["fit_click_ceiling"]),
        )
        params, diagnostics = noisemodel.fit(f, options)
        storage.save_key_values(out / "fit_params.txt", params.as_params())
        storage.save_landscape(out / "entropy_landscape.csv", diagnostics.landscape)
        figures.render_landscape(out / "entropy_landscape.png", diagnostics.landscape)

        fitted = noisemodel.model_distribution(params, _auto_int(config["fit_n_max"]))
        photon_summary = _joint_summary(fitted)
        moment_names = ("mean_signal", "mean_idler", "var_signal", "var_idler", "covariance")
        report: dict[str, object] = {}
        for name, value, residual in zip(moment_names, diagnostics.empirical_moments, diagnostics.moment_residuals):
            report[f"empirical_{name}"] = value
            report[f"residual_{name}"] = residual
        report["entropy"] = diagnostics.entropy
        report["candidates_evaluated"] = diagnostics.candidates_evaluated
        report["model_noise_reduction"] = diagnostics.noise_reduction
        report["fitted_fano_signal"] = photon_summary["fano_signal"]
        report["fitted_fano_idler"] = photon_summary["fano_idler"]
        report["fitted_covariance_coefficient"] = photon_summary["covariance_coefficient"]
        report["fitted_noise_reduction"] = photon_summary["noise_reduction"]
        storage.save_key_values(out / "fit_report.txt", report)
        figures.render_joint_table(out / "fitted_photon.png", fitted.values, "fitted photon distribution")
        storage.save_joint_distribution(out / "fitted_photon.csv", fitted)
        _echo_config(config, out)
        for key in ("fitted_fano_signal", "fitted_fano_idler", "fitted_covariance_coefficient", "model_noise_reduction"):
            click.echo(f"{key} = {report[key]}")


@main.command("compare")
@common_options
@click.argument("first", type=click.Path(dir_okay=False))
@click.argument("second", type=click.Path(dir_okay=False))
def cmd_compare(config_path, out_path, seed, variant, n_max, c_max, iters, profile_path, first, second) -> None:
    """Difference report between two photon-distribution files."""
    with _ExitMapping():
        config = _effective_config(config_path, _collect_overrides(config_path, seed, variant, n_max, c_max, iters, profile_path))
        out = _out_dir(out_path)
        p_first = storage.load_joint_distribution(first, kind="photon")
        p_second = storage.load_joint_distribution(second, kind="photon")
        rows = max(p_first.values.shape[0], p_second.values.shape[0])
        cols = max(p_first.values.shape[1], p_second.values.shape[1])

        def padded(p: JointDistribution) -> np.ndarray:
            table = np.zeros((rows, cols))
            table[: p.values.shape[0], : p.values.shape[1]] = p.values
            return table

        difference = padded(p_first) - padded(p_second)
        storage.save_difference(out / "difference.csv", difference)
        figures.render_difference_table(out / "difference.png", difference, "distribution difference")
        report: dict[str, object] = {
            "max_abs_difference": float(np.max(np.abs(difference))),
            "total_variation": float(0.5 * np.sum(np.abs(difference))),
        }
        for label, p in (("first", p_first), ("second", p_second)):
            for key, value in _joint_summary(p).items():
                report[f"{label}_{key}"] = value
        storage.save_key_values(out / "compare_report.txt", report)
        _echo_config(config, out)
        click.echo(f"max_abs_difference = {report['max_abs_difference']:.6e}")
        click.echo(f"total_variation = {report['total_variation']:.6e}")


@main.command("stats")
@common_options
@click.option("--kind", type=click.Choice(["photon", "click"]), default="photon", show_default=True,
              help="Interpretation of the distribution file.")
@click.argument("distribution", type=click.Path(dir_okay=False))
def cmd_stats(config_path, out_path, seed, variant, n_max, c_max, iters, profile_path, kind, distribution) -> None:
    """Summary statistics and classicality diagnostics of a distribution."""
    with _ExitMapping():
        config = _effective_config(config_path, _collect_overrides(config_path, seed, variant, n_max, c_max, iters, profile_path))
        out = _out_dir(out_path)
        p = storage.load_joint_distribution(distribution, kind=kind)
        summary = _joint_summary(p)
        storage.save_key_values(out / "stats_report.txt", summary)
        p_sum, p_diff = sum_diff_distributions(p)
        storage.save_distribution_1d(out / "p_plus.csv", p_sum)
        storage.save_distribution_1d(out / "p_minus.csv", p_diff)
        figures.render_distribution_1d(out / "p_plus.png", p_sum, "count-sum distribution")
        figures.render_distribution_1d(out / "p_minus.png", p_diff, "count-difference distribution")
        figures.render_violation_mask(out / "violations.png", classical_violation_mask(p))
        _echo_config(config, out)
        for key, value in summary.items():
            click.echo(f"{key} = {value}")


if __name__ == "__main__":
    main()
