"""Deterministic reverse-diffusion sampling with classifier-free guidance.

One reverse step at grid entry t with successor t' is

    z0_hat = (z_t - sqrt(1 - a_t) eps_hat) / sqrt(a_t)        (denoising)
    z_t'   = sqrt(a_t') z0_hat + sqrt(1 - a_t') eps_renoise   (renoising)

where ``eps_hat`` combines a conditional and an unconditional denoiser
evaluation.  Standard guidance renoises with the combined estimate; the
low-scale variant keeps the combined estimate for denoising but renoises
with the unconditional prediction alone.  The final grid entry renoises
against alpha_bar[0] = 1, i.e. returns the clean estimate.

Denoisers are callables ``denoiser(z_t, alpha_bar, condition) -> eps`` and
are evaluated exactly twice per step (conditional, then null), which keeps
the evaluation count of a plain run at 2 * len(grid).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .rng import run_rng
from .schedule import NoiseSchedule, TimestepGrid

__all__ = [
    "GuidanceMode",
    "cfg",
    "cfg_plus_plus",
    "TraceStep",
    "SampleTrace",
    "tweedie_denoise",
    "cfg_combine",
    "ddim_step",
    "sample",
]

Denoiser = Callable[[np.ndarray, float, "int | None"], np.ndarray]


@dataclass(frozen=True)
class GuidanceMode:
    """Guidance kind plus scale.

    ``cfg`` accepts any scale >= 0 and renoises with the combined estimate;
    ``cfg_plus_plus`` requires scale in [0, 1] and renoises with the
    unconditional estimate.
    """

    kind: str
    scale: float

    def __post_init__(self):
        if self.kind not in ("cfg", "cfg_plus_plus"):
            raise ValueError(f"unknown guidance kind {self.kind!r}")
        if self.kind == "cfg" and self.scale < 0.0:
            raise ValueError("cfg scale must be >= 0")
        if self.kind == "cfg_plus_plus" and not 0.0 <= self.scale <= 1.0:
            raise ValueError("cfg_plus_plus scale must lie in [0, 1]")


def cfg(scale: float) -> GuidanceMode:
    return GuidanceMode(kind="cfg", scale=float(scale))


def cfg_plus_plus(scale: float) -> GuidanceMode:
    return GuidanceMode(kind="cfg_plus_plus", scale=float(scale))


@dataclass
class TraceStep:
    t: int
    z_t: np.ndarray | None = None
    z0_hat: np.ndarray | None = None


@dataclass
class SampleTrace:
    """Per-run record: visited steps plus denoiser-evaluation counts."""

    seed: int
    run_index: int
    steps: list[TraceStep] = field(default_factory=list)
    nfe_base: int = 0
    nfe_guide: int = 0

    @property
    def nfe(self) -> int:
        return self.nfe_base + self.nfe_guide


def tweedie_denoise(z_t: np.ndarray, eps_hat: np.ndarray, alpha_bar: float) -> np.ndarray:
    """Posterior-mean estimate from a noise prediction."""
    if not 0.0 < alpha_bar <= 1.0:
        raise ValueError("alpha_bar must lie in (0, 1]")
    z_t = np.asarray(z_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    if z_t.shape != eps_hat.shape:
        raise ValueError(f"shape mismatch: {z_t.shape} vs {eps_hat.shape}")
    return (z_t - np.sqrt(1.0 - alpha_bar) * eps_hat) / np.sqrt(alpha_bar)


def cfg_combine(eps_cond: np.ndarray, eps_null: np.ndarray, scale: float) -> np.ndarray:
    """eps_null + scale * (eps_cond - eps_null)."""
    eps_cond = np.asarray(eps_cond, dtype=np.float64)
    eps_null = np.asarray(eps_null, dtype=np.float64)
    if eps_cond.shape != eps_null.shape:
        raise ValueError(f"shape mismatch: {eps_cond.shape} vs {eps_null.shape}")
    return eps_null + scale * (eps_cond - eps_null)


def ddim_step(z0_hat: np.ndarray, eps_renoise: np.ndarray, alpha_bar_prev: float) -> np.ndarray:
    """Renoise a clean estimate to the previous level."""
    z0_hat = np.asarray(z0_hat, dtype=np.float64)
    eps_renoise = np.asarray(eps_renoise, dtype=np.float64)
    if z0_hat.shape != eps_renoise.shape:
        raise ValueError(f"shape mismatch: {z0_hat.shape} vs {eps_renoise.shape}")
    return np.sqrt(alpha_bar_prev) * z0_hat + np.sqrt(1.0 - alpha_bar_prev) * eps_renoise


def guided_eps(
    denoiser: Denoiser,
    z_t: np.ndarray,
    alpha_bar: float,
    mode: GuidanceMode,
    condition,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Combined estimate, renoising term, and evaluation count (always 2)."""
    eps_cond = denoiser(z_t, alpha_bar, condition)
    eps_null = denoiser(z_t, alpha_bar, None)
    eps_hat = cfg_combine(eps_cond, eps_null, mode.scale)
    eps_renoise = eps_null if mode.kind == "cfg_plus_plus" else eps_hat
    return eps_hat, eps_renoise, 2


def ddim_run(
    z_init: np.ndarray,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    grid: TimestepGrid,
    mode: GuidanceMode,
    condition,
    trace: SampleTrace | None = None,
    record_latents: bool = False,
    record_denoised: bool = False,
) -> tuple[np.ndarray, int]:
    """Run the plain reverse loop from a given start latent.

    Returns the clean estimate and the number of denoiser evaluations.
    """
    z = np.array(z_init, dtype=np.float64, copy=True)
    ts = grid.timesteps
    evals = 0
    for i, t in enumerate(ts):
        a_t = schedule.alpha_bars[t]
        a_prev = schedule.alpha_bars[ts[i + 1]] if i + 1 < len(ts) else schedule.alpha_bars[0]
        eps_hat, eps_renoise, n = guided_eps(denoiser, z, a_t, mode, condition)
        evals += n
        z0_hat = tweedie_denoise(z, eps_hat, a_t)
        if trace is not None:
            trace.steps.append(
                TraceStep(
                    t=t,
                    z_t=z.copy() if record_latents else None,
                    z0_hat=z0_hat.copy() if record_denoised else None,
                )
            )
        z = ddim_step(z0_hat, eps_renoise, a_prev)
    return z, evals


def sample(
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    grid: TimestepGrid,
    mode: GuidanceMode,
    condition,
    shape,
    seed: int,
    run_index: int = 0,
    record_latents: bool = False,
    record_denoised: bool = False,
) -> tuple[np.ndarray, SampleTrace]:
    """Full reverse run from seeded Gaussian noise.

    Deterministic: equal (seed, run_index, configuration) gives bit-equal
    output and trace.  Independent runs use disjoint streams, so results
    do not depend on how runs are scheduled across workers.
    """
    rng = run_rng(seed, run_index)
    z_init = rng.standard_normal(tuple(int(s) for s in shape))
    trace = SampleTrace(seed=int(seed), run_index=int(run_index))
    z, evals = ddim_run(
        z_init,
        denoiser,
        schedule,
        grid,
        mode,
        condition,
        trace=trace,
        record_latents=record_latents,
        record_denoised=record_denoised,
    )
    trace.nfe_base = evals
    return z, trace
