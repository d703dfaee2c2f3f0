"""Adaptive k-space sampling, reconstruction and registration for dynamic MRI."""

from .container import read_array, write_array
from .metrics import (
    MetricsReport,
    combined_loss,
    nmse,
    phase_averaged,
    psnr,
    reconstruction_loss,
    registration_loss,
    ssim2d,
    ssim3d,
)
from .operators import (
    adjoint_operator,
    apply_mask,
    expand_coils,
    fft2c,
    forward_operator,
    ifft2c,
    reduce_coils,
    rss,
)
from .phantom import PhantomConfig, generate, synthesize_kspace, write_dataset
from .pipeline import PipelineConfig, postprocess_crop, preprocess, run
from .reconstruction import ReconConfig, admm_reconstruct, zero_filled
from .registration import (
    RegMethodConfig,
    WarpConfig,
    integrate_field,
    register_pair,
    register_sequence,
    smoothness_loss,
    warp,
)
from .sampling import (
    SamplerConfig,
    acs_mask,
    adaptive_mask,
    binarize_budget,
    budget,
    dataset_optimized_mask,
    equispaced_mask,
    kt_equispaced_mask,
)
from .sensitivity import SensitivityConfig, estimate_from_acs, normalize, refine

__version__ = "0.1.0"
