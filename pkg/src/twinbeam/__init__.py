"""Click statistics of multiplexed photon-number detectors on twin beams.

The package covers the full measurement chain: transfer matrices mapping
photon numbers to registered click counts for uniform and graded detector
geometries, Monte Carlo click simulation, expectation-maximization
recovery of the joint photon-number distribution, and a moment-based fit
of a three-component thermal noise model.
"""

from .coincidence import (
    fired_set_kernel,
    general_coincidence_probability,
    symmetric_click_histogram,
)
from .detector import (
    DetectorModel,
    TransferMatrix,
    bernoulli_matrix,
    compose,
    exponential_approx_matrix,
    finite_pixel_matrix,
    improved_intense_matrix,
    infinite_pixel_matrix,
    intense_field_matrix,
    occupancy_distribution,
    occupancy_matrix,
)
from .distributions import (
    Distribution1D,
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
from .noisemodel import (
    FitDiagnostics,
    FitOptions,
    FitParams,
    fit,
    model_distribution,
    model_noise_reduction,
    multimode_thermal,
    predicted_click_distribution,
    predicted_click_moments,
)
from .profiles import (
    PixelGroupProfile,
    band_profile,
    profile_matrix_exact,
    profile_matrix_exponential,
    profile_matrix_infinite,
    profile_matrix_lowcount,
)
# the EM driver itself stays at twinbeam.reconstruct.reconstruct so the
# top-level name keeps pointing at the submodule
from .reconstruct import (
    EmOptions,
    ReconstructionResult,
    default_photon_ceiling,
    em_step,
    kl_divergence,
    residual_S,
)
from .simulate import (
    FrameSample,
    SimConfig,
    empirical_histogram,
    forward,
    simulate_clicks,
    simulate_occupancy_clicks,
)

__all__ = [
    "BudgetExceededError",
    "DataFormatError",
    "DegenerateDistributionError",
    "DetectorModel",
    "Distribution1D",
    "EmOptions",
    "FitDiagnostics",
    "FitInfeasibleError",
    "FitOptions",
    "FitParams",
    "FrameSample",
    "JointDistribution",
    "ModelMismatchError",
    "NormalizationError",
    "PixelGroupProfile",
    "PrecisionExhaustedError",
    "ReconstructionResult",
    "SimConfig",
    "TransferMatrix",
    "TwinbeamError",
    "ValidationError",
    "band_profile",
    "bernoulli_matrix",
    "classical_violation_mask",
    "compose",
    "default_photon_ceiling",
    "em_step",
    "empirical_histogram",
    "exponential_approx_matrix",
    "finite_pixel_matrix",
    "fired_set_kernel",
    "fit",
    "forward",
    "general_coincidence_probability",
    "improved_intense_matrix",
    "infinite_pixel_matrix",
    "intense_field_matrix",
    "kl_divergence",
    "model_distribution",
    "model_noise_reduction",
    "multimode_thermal",
    "noise_reduction_factor",
    "occupancy_distribution",
    "occupancy_matrix",
    "predicted_click_distribution",
    "predicted_click_moments",
    "profile_matrix_exact",
    "profile_matrix_exponential",
    "profile_matrix_infinite",
    "profile_matrix_lowcount",
    "residual_S",
    "simulate_clicks",
    "simulate_occupancy_clicks",
    "sum_diff_distributions",
    "symmetric_click_histogram",
    "__version__",
]

__version__ = "0.1.0"
