"""Hierarchical sparse Bayesian learning with residual prior transforms."""

from .signals import Grid, SignalVector, EdgeVector, make_grid, sample, example_signal, example_image, sample_image, true_edge_vector
from .forward_models import (
    LinearForwardModel,
    Measurement,
    MeasurementSet,
    dft_matrix,
    identity_model,
    blur_model,
    subsample_model,
    partial_fourier_model,
    alpha_from_snr,
    acquire,
)
from .transforms import PriorTransform, local_transform, concentration_transform, residual_transform, stack_2d
from .solver import (
    HyperParams,
    KernelConditionError,
    PosteriorResult,
    SolverError,
    check_common_kernel,
    gsbl_run,
    mmv_gsbl_run,
    objective,
    theta_update_individual,
    theta_update_mmv,
    x_update,
)
from .uq import ConditionalPosterior, CredibleBand, conditional_posterior, credible_band

__version__ = "0.1.0"
