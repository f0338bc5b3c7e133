"""Guide-interpolated sampling: blend a guiding model's denoised rollouts
into the earliest reverse steps of a base sampler.

During the first ``interpolation_steps`` grid entries, each step

  1. forms the base model's denoised estimate under the interpolation
     guidance mode,
  2. re-diffuses that estimate into the guide's noise schedule with fresh
     noise and rolls the guide forward ``rollout_steps`` extra reverse
     steps on a dense sub-grid, yielding a cleaner, temporally steadier
     estimate,
  3. replaces the denoised estimate with the convex combination
     ``beta * own + (1 - beta) * guide`` before renoising (the closed-form
     minimizer of || z - own ||^2 + lambda || z - guide ||^2 with
     beta = 1 / (1 + lambda)),
  4. optionally swaps the high-frequency band of the updated latent for
     fresh noise so later steps can regenerate fine detail freely.

Outside the window the loop is exactly the plain sampler under the main
guidance mode.  The guide may be the sampler itself (self-guided) or a
second model with its own prior and schedule; the two paths share one
implementation, so self-guidance equals external guidance with identical
models bit for bit.

Per-run draw order (after trajectory init): for each window step, the
domain-renoising noise, then the filter noise; there are no other draws.
The restart baseline draws, per iteration after the first: re-diffusion
noise, then filter noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .freqfilter import ButterworthMask3D, butterworth_mask, lowpass_highpass_mix
from .rng import run_rng
from .sampler import (
    Denoiser,
    GuidanceMode,
    SampleTrace,
    TraceStep,
    cfg,
    cfg_plus_plus,
    ddim_run,
    ddim_step,
    guided_eps,
    tweedie_denoise,
)
from .schedule import NoiseSchedule, TimestepGrid, forward_diffuse, guidance_subgrid, renoise_to_domain

__all__ = [
    "GuidanceConfig",
    "beta_from_lambda",
    "interpolate_denoised",
    "guide_rollout",
    "guided_sample",
    "freeinit_baseline",
]

_DEFAULT_INTERP = cfg_plus_plus(0.8)
_DEFAULT_MAIN = cfg(7.5)


@dataclass(frozen=True)
class GuidanceConfig:
    """All knobs of the guided sampler.

    ``interpolation_scale`` is restricted to [0.5, 1]: weights below 0.5
    hand the guide the majority and risk drifting off the base model's
    distribution, so they are rejected rather than clamped (silent
    clamping would corrupt parameter sweeps).  ``self_renoise`` controls
    the self-guided rollout input: fresh renoising of the denoised
    estimate (default) versus rolling out directly from the current
    latent; external guides always renoise since their schedule differs.

    ``filter_enabled`` defaults to off: the analytic priors here are
    spatially white, so nearly all of the guide's contribution lives
    above the spatial cutoff and the band swap would erase it while
    replacing like-distributed noise with like-distributed noise.  The
    toggle exists for studying the filter itself; ``cutoff`` and
    ``filter_order`` also parameterize the restart baseline's mask and
    the low-passed quality proxies regardless of the toggle.
    """

    interpolation_steps: int = 5
    interpolation_scale: float = 0.5
    rollout_steps: int = 10
    cutoff: float = 0.25
    filter_order: int = 4
    interp_guidance: GuidanceMode = _DEFAULT_INTERP
    main_guidance: GuidanceMode = _DEFAULT_MAIN
    filter_enabled: bool = False
    self_renoise: bool = True

    def __post_init__(self):
        if self.interpolation_steps < 0:
            raise ValueError("interpolation_steps must be >= 0")
        if not 0.5 <= self.interpolation_scale <= 1.0:
            raise ValueError("interpolation_scale must lie in [0.5, 1]")
        if not 1 <= self.rollout_steps <= 25:
            raise ValueError("rollout_steps must lie in [1, 25]")
        if not 0.0 < self.cutoff < 1.0:
            raise ValueError("cutoff must lie in (0, 1)")
        if self.filter_order < 1:
            raise ValueError("filter_order must be >= 1")


def beta_from_lambda(lambda_reg: float) -> float:
    """Interpolation weight equivalent to a quadratic-penalty strength."""
    if lambda_reg < 0.0:
        raise ValueError("lambda_reg must be >= 0")
    return 1.0 / (1.0 + lambda_reg)


def interpolate_denoised(z0_own: np.ndarray, z0_guide: np.ndarray, beta: float) -> np.ndarray:
    """beta * z0_own + (1 - beta) * z0_guide."""
    z0_own = np.asarray(z0_own, dtype=np.float64)
    z0_guide = np.asarray(z0_guide, dtype=np.float64)
    if z0_own.shape != z0_guide.shape:
        raise ValueError(f"shape mismatch: {z0_own.shape} vs {z0_guide.shape}")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    return beta * z0_own + (1.0 - beta) * z0_guide


def _rollout_from(
    z_noisy: np.ndarray,
    t: int,
    guide_denoiser: Denoiser,
    guide_schedule: NoiseSchedule,
    tau: int,
    mode: GuidanceMode,
    condition,
) -> tuple[np.ndarray, int]:
    """Advance a guide-domain latent tau reverse steps, return its final
    denoised estimate and the evaluation count.

    Step sources are the first tau entries of the dense sub-grid over
    [1, t]; each step lands on the following sub-grid entry, the last one
    on the entry after the sources (or the clean level when the sub-grid
    is exhausted).  A final denoiser evaluation at the landing level turns
    the latent into the returned estimate, so a full-depth rollout costs
    tau + 1 evaluations of the guide.
    """
    sources = guidance_subgrid(t, tau, guide_schedule).timesteps
    extended = guidance_subgrid(t, min(tau + 1, 25), guide_schedule).timesteps
    z = np.asarray(z_noisy, dtype=np.float64)
    evals = 0
    for j, s in enumerate(sources):
        a_s = guide_schedule.alpha_bars[s]
        eps_hat, eps_renoise, n = guided_eps(guide_denoiser, z, a_s, mode, condition)
        evals += n
        z0_g = tweedie_denoise(z, eps_hat, a_s)
        a_next = (
            guide_schedule.alpha_bars[extended[j + 1]]
            if j + 1 < len(extended)
            else guide_schedule.alpha_bars[0]
        )
        z = ddim_step(z0_g, eps_renoise, a_next)
    if len(extended) > len(sources):
        landing = extended[len(sources)]
        a_l = guide_schedule.alpha_bars[landing]
        eps_hat, _, n = guided_eps(guide_denoiser, z, a_l, mode, condition)
        evals += n
        z = tweedie_denoise(z, eps_hat, a_l)
    # else: the last step landed on the clean level and z already is the
    # denoised estimate.
    return z, evals


def guide_rollout(
    z0_hat: np.ndarray,
    t: int,
    guide_denoiser: Denoiser,
    guide_schedule: NoiseSchedule,
    tau: int,
    mode: GuidanceMode,
    condition,
    rng: np.random.Generator,
) -> tuple[np.ndarray, int]:
    """Re-diffuse a denoised estimate into the guide's domain at level t,
    then roll the guide tau steps and return its final denoised estimate.

    Consumes exactly one Gaussian draw from ``rng`` (the renoising noise).
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    z0_hat = np.asarray(z0_hat, dtype=np.float64)
    eps = rng.standard_normal(z0_hat.shape)
    z_noisy = renoise_to_domain(z0_hat, t, guide_schedule, eps)
    return _rollout_from(z_noisy, t, guide_denoiser, guide_schedule, tau, mode, condition)


def _same_schedule(a: NoiseSchedule, b: NoiseSchedule) -> bool:
    return a is b or (
        a.total_steps == b.total_steps and np.array_equal(a.alpha_bars, b.alpha_bars)
    )


def guided_sample(
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    grid: TimestepGrid,
    config: GuidanceConfig,
    condition,
    shape,
    seed: int,
    run_index: int = 0,
    guide_denoiser: Denoiser | None = None,
    guide_schedule: NoiseSchedule | None = None,
    record_latents: bool = False,
    record_denoised: bool = False,
) -> tuple[np.ndarray, SampleTrace]:
    """Full guided run; omit the guide arguments for self-guidance.

    With ``interpolation_steps == 0`` this is bit-identical to
    `sampler.sample` under the main guidance mode.  The trace's
    ``nfe_guide`` counts rollout evaluations separately from the base
    model's ``nfe_base``; each grid entry costs exactly one base step.
    """
    if guide_denoiser is None:
        guide_denoiser = denoiser
    if guide_schedule is None:
        guide_schedule = schedule
    if not config.self_renoise and not _same_schedule(schedule, guide_schedule):
        raise ValueError(
            "self_renoise=False rolls out from the current latent and "
            "requires matching sampler/guide schedules"
        )
    shape = tuple(int(s) for s in shape)
    mask = None
    if config.filter_enabled:
        mask = butterworth_mask(shape[0], shape[2], shape[3], config.cutoff, config.filter_order)

    rng = run_rng(seed, run_index)
    z = rng.standard_normal(shape)
    trace = SampleTrace(seed=int(seed), run_index=int(run_index))
    ts = grid.timesteps
    window = min(config.interpolation_steps, len(ts))

    for i, t in enumerate(ts):
        a_t = schedule.alpha_bars[t]
        a_prev = schedule.alpha_bars[ts[i + 1]] if i + 1 < len(ts) else schedule.alpha_bars[0]
        in_window = i < window
        mode = config.interp_guidance if in_window else config.main_guidance

        eps_hat, eps_renoise, n = guided_eps(denoiser, z, a_t, mode, condition)
        trace.nfe_base += n
        z0_own = tweedie_denoise(z, eps_hat, a_t)
        if record_latents or record_denoised:
            trace.steps.append(
                TraceStep(
                    t=t,
                    z_t=z.copy() if record_latents else None,
                    z0_hat=z0_own.copy() if record_denoised else None,
                )
            )
        else:
            trace.steps.append(TraceStep(t=t))

        if in_window:
            if config.self_renoise:
                z0_guide, g_evals = guide_rollout(
                    z0_own,
                    t,
                    guide_denoiser,
                    guide_schedule,
                    config.rollout_steps,
                    mode,
                    condition,
                    rng,
                )
            else:
                z0_guide, g_evals = _rollout_from(
                    z, t, guide_denoiser, guide_schedule, config.rollout_steps, mode, condition
                )
            trace.nfe_guide += g_evals
            z0_mix = interpolate_denoised(z0_own, z0_guide, config.interpolation_scale)
            z = ddim_step(z0_mix, eps_renoise, a_prev)
            if mask is not None:
                z = lowpass_highpass_mix(z, rng.standard_normal(shape), mask)
        else:
            z = ddim_step(z0_own, eps_renoise, a_prev)

    return z, trace


def freeinit_baseline(
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    grid: TimestepGrid,
    iterations: int,
    mask: ButterworthMask3D,
    mode: GuidanceMode,
    condition,
    shape,
    seed: int,
    run_index: int = 0,
) -> tuple[np.ndarray, SampleTrace]:
    """Iterative noise-reinitialization baseline.

    Repeats: full reverse run, re-diffuse the result to the top level,
    swap its high-frequency band for fresh noise, restart.  The low band
    is carried across iterations, the high band is fresh each time.  One
    iteration equals a plain run; k iterations cost k plain runs.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    shape = tuple(int(s) for s in shape)
    rng = run_rng(seed, run_index)
    z_init = rng.standard_normal(shape)
    trace = SampleTrace(seed=int(seed), run_index=int(run_index))
    top = schedule.total_steps
    z0 = z_init
    for it in range(iterations):
        z0, evals = ddim_run(z_init, denoiser, schedule, grid, mode, condition, trace=trace)
        trace.nfe_base += evals
        if it + 1 < iterations:
            eps_diffuse = rng.standard_normal(shape)
            z_noisy = forward_diffuse(z0, top, eps_diffuse, schedule)
            eps_band = rng.standard_normal(shape)
            z_init = lowpass_highpass_mix(z_noisy, eps_band, mask)
    return z0, trace
