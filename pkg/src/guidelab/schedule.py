"""Noise schedules, timestep grids, and forward diffusion.

Schedules are the discrete variance-preserving kind: per-step noise rates
``beta_t`` for t = 1..T together with cumulative signal coefficients

    alpha_bar[t] = prod_{s <= t} (1 - beta_s),        alpha_bar[0] = 1.

A latent at noise level t is ``sqrt(alpha_bar[t]) * z0 +
sqrt(1 - alpha_bar[t]) * eps`` with ``eps ~ N(0, I)``.  Two independent
schedule instances describe the sampling model and the guiding model; the
coefficients of the two need not agree, which is why every operation here
takes the schedule explicitly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NoiseSchedule",
    "TimestepGrid",
    "build_linear_schedule",
    "ddim_grid",
    "guidance_subgrid",
    "forward_diffuse",
    "renoise_to_domain",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise rates and cumulative signal coefficients.

    ``betas`` has length T with ``betas[t-1]`` the rate applied at step t.
    ``alpha_bars`` has length T + 1 and is indexed directly by timestep:
    ``alpha_bars[0] == 1`` exactly, entries strictly decreasing in (0, 1].
    Arrays are frozen after construction; instances are safe to share.
    """

    betas: np.ndarray
    alpha_bars: np.ndarray

    def __post_init__(self):
        betas = np.ascontiguousarray(self.betas, dtype=np.float64)
        alpha_bars = np.ascontiguousarray(self.alpha_bars, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("every beta must lie strictly inside (0, 1)")
        if alpha_bars.shape != (betas.size + 1,):
            raise ValueError("alpha_bars must have length len(betas) + 1")
        if alpha_bars[0] != 1.0:
            raise ValueError("alpha_bars[0] must equal 1")
        if np.any(np.diff(alpha_bars) >= 0.0):
            raise ValueError("alpha_bars must be strictly decreasing")
        if np.any(alpha_bars <= 0.0):
            raise ValueError("alpha_bars must stay positive")
        betas.setflags(write=False)
        alpha_bars.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alpha_bars", alpha_bars)

    @property
    def total_steps(self) -> int:
        return self.betas.size


@dataclass(frozen=True)
class TimestepGrid:
    """Strictly descending timesteps within [1, T] visited by a sampler."""

    timesteps: tuple[int, ...]

    def __post_init__(self):
        ts = tuple(int(t) for t in self.timesteps)
        if len(ts) < 1:
            raise ValueError("grid must contain at least one timestep")
        if any(t < 1 for t in ts):
            raise ValueError("timesteps must be >= 1")
        if any(a <= b for a, b in zip(ts, ts[1:])):
            raise ValueError("timesteps must be strictly descending")
        object.__setattr__(self, "timesteps", ts)

    def __len__(self) -> int:
        return len(self.timesteps)


def build_linear_schedule(beta_start: float, beta_end: float, total_steps: int) -> NoiseSchedule:
    """Linearly spaced betas, endpoints inclusive, alpha_bars by running product."""
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError("need 0 < beta_start <= beta_end < 1")
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    betas = np.linspace(beta_start, beta_end, total_steps, dtype=np.float64)
    alpha_bars = np.concatenate(([1.0], np.cumprod(1.0 - betas)))
    return NoiseSchedule(betas=betas, alpha_bars=alpha_bars)


def ddim_grid(total_steps: int, steps: int) -> TimestepGrid:
    """Evenly spaced descending grid: first entry T, spacing floor(T / steps).

    The k-th entry is ``T - k * floor(T / steps)``; the reverse step taken
    from the final entry lands on the clean level (alpha_bar[0] = 1).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if steps > total_steps:
        raise ValueError("steps must not exceed total_steps")
    spacing = total_steps // steps
    return TimestepGrid(tuple(total_steps - k * spacing for k in range(steps)))


def guidance_subgrid(t: int, tau: int, schedule: NoiseSchedule) -> TimestepGrid:
    """First ``tau`` entries of a 25-point grid over [1, t].

    The 25-point grid follows the same placement rule as `ddim_grid`
    applied to the interval (first entry t, spacing floor(t / 25)).  When
    the interval is shorter than 25 steps the grid falls back to dense
    unit spacing, so degenerate late-t rollouts still run; in that case
    fewer than ``tau`` entries may be available and all of them are
    returned.
    """
    if not 1 <= t <= schedule.total_steps:
        raise ValueError("t must lie within the schedule range")
    if not 1 <= tau <= 25:
        raise ValueError("tau must lie in [1, 25]")
    if t >= 25:
        spacing = t // 25
        full = [t - k * spacing for k in range(25)]
    else:
        full = list(range(t, 0, -1))
    return TimestepGrid(tuple(full[:tau]))


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def forward_diffuse(z0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Diffuse a clean latent to level t: sqrt(a_t) z0 + sqrt(1 - a_t) eps.

    t = 0 is the clean level and returns ``z0`` unchanged.
    """
    z0 = np.asarray(z0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    _check_same_shape(z0, eps)
    if not 0 <= t <= schedule.total_steps:
        raise ValueError("t out of schedule range")
    a = schedule.alpha_bars[t]
    return np.sqrt(a) * z0 + np.sqrt(1.0 - a) * eps


def renoise_to_domain(z0_hat: np.ndarray, t: int, target: NoiseSchedule, eps: np.ndarray) -> np.ndarray:
    """Re-diffuse a denoised estimate under a *target* model's schedule.

    Identical formula to `forward_diffuse` evaluated with the target
    coefficients, so with matching schedules and matching noise the two
    agree bit for bit.  This is how a latent produced under one model is
    handed to a guiding model trained on a different schedule.
    """
    return forward_diffuse(z0_hat, t, eps, target)
