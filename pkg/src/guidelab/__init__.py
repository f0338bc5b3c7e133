"""Guided-diffusion sampling laboratory with analytic video priors."""

from .freqfilter import ButterworthMask3D, butterworth_mask, lowpass, lowpass_highpass_mix
from .guidance import (
    GuidanceConfig,
    beta_from_lambda,
    freeinit_baseline,
    guide_rollout,
    guided_sample,
    interpolate_denoised,
)
from .metrics import (
    MetricsReport,
    aggregate_report,
    background_consistency_proxy,
    imaging_quality_proxy,
    interframe_correlation,
    motion_smoothness_proxy,
    reference_highfreq_energy,
    subject_consistency_proxy,
)
from .prior import (
    Condition,
    GaussianVideoComponent,
    MixtureVideoPrior,
    eps_prediction,
    isotropic_prior,
    log_marginal,
    make_denoiser,
    posterior_mean,
    responsibilities,
    sample_prior,
    union_prior,
)
from .rng import run_rng
from .sampler import (
    GuidanceMode,
    SampleTrace,
    cfg,
    cfg_combine,
    cfg_plus_plus,
    ddim_step,
    sample,
    tweedie_denoise,
)
from .schedule import (
    NoiseSchedule,
    TimestepGrid,
    build_linear_schedule,
    ddim_grid,
    forward_diffuse,
    guidance_subgrid,
    renoise_to_domain,
)

__version__ = "0.1.0"
