"""Analytic video priors and the exact denoisers derived from them.

A prior is a mixture of Gaussians over latents of shape
(frames, channels, height, width).  Each component has a condition-indexed
mean (constant across frames), a per-coordinate standard deviation sigma,
and an inter-frame correlation rho in [0, 1).  Writing P for the projector
onto the frame-mean subspace (average over the frame axis, broadcast
back), the component covariance is

    Sigma = sigma^2 * ((1 - rho) I + rho N P)           N = frame count

whose two eigenvalues are sigma^2 (1 - rho + N rho) on the frame-mean
subspace and sigma^2 (1 - rho) on its complement.  Everything downstream
(marginals of the diffused latent, per-component posterior means,
responsibilities, the marginal score) follows in closed form from that
two-eigenvalue decomposition, so no matrix is ever materialized or
inverted numerically.

Conditions are plain ids: ``None`` is the null condition, any int names a
synthetic text prompt.  A component missing a requested condition falls
back to its null mean, which is what lets a prior "not know" a concept.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

__all__ = [
    "Condition",
    "GaussianVideoComponent",
    "MixtureVideoPrior",
    "isotropic_prior",
    "sample_prior",
    "posterior_mean",
    "eps_prediction",
    "responsibilities",
    "log_marginal",
    "make_denoiser",
    "union_prior",
]

Condition = Optional[int]

_LOG_2PI = float(np.log(2.0 * np.pi))


def _freeze_mean(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim not in (0, 3):
        raise ValueError("means must be scalars or (channels, height, width) arrays")
    if not np.all(np.isfinite(arr)):
        raise ValueError("means must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GaussianVideoComponent:
    """One mixture component: conditioned means plus (sigma, rho)."""

    means: Mapping[Condition, np.ndarray]
    sigma: float
    rho: float

    def __post_init__(self):
        if None not in self.means:
            raise ValueError("a null-condition mean is required")
        frozen = {cond: _freeze_mean(m) for cond, m in self.means.items()}
        object.__setattr__(self, "means", frozen)
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")

    def mean_for(self, condition: Condition) -> np.ndarray:
        """Mean under ``condition``, falling back to the null mean."""
        return self.means.get(condition, self.means[None])

    def eigenvalues(self, frames: int) -> tuple[float, float]:
        """(frame-mean eigenvalue, complement eigenvalue) of the covariance."""
        s2 = self.sigma**2
        return s2 * (1.0 - self.rho + frames * self.rho), s2 * (1.0 - self.rho)


@dataclass(frozen=True)
class MixtureVideoPrior:
    """Non-empty weighted mixture of `GaussianVideoComponent`."""

    components: tuple[tuple[float, GaussianVideoComponent], ...]

    def __post_init__(self):
        comps = tuple((float(w), c) for w, c in self.components)
        if len(comps) == 0:
            raise ValueError("mixture needs at least one component")
        weights = np.array([w for w, _ in comps])
        if np.any(weights <= 0.0):
            raise ValueError("weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "components", comps)

    def __len__(self) -> int:
        return len(self.components)


def isotropic_prior(mean=0.0, sigma: float = 1.0, rho: float = 0.0) -> MixtureVideoPrior:
    """Single-component prior with a scalar (or frame-shaped) mean."""
    comp = GaussianVideoComponent(means={None: mean}, sigma=sigma, rho=rho)
    return MixtureVideoPrior(components=((1.0, comp),))


def union_prior(a: MixtureVideoPrior, b: MixtureVideoPrior) -> MixtureVideoPrior:
    """Equal-weight union of two mixtures (component weights halved)."""
    comps = tuple((0.5 * w, c) for w, c in a.components) + tuple(
        (0.5 * w, c) for w, c in b.components
    )
    return MixtureVideoPrior(components=comps)


def _validate_latent(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 4:
        raise ValueError("latents have shape (frames, channels, height, width)")
    if z.shape[0] < 2:
        raise ValueError("need at least 2 frames")
    return z


def sample_prior(
    prior: MixtureVideoPrior,
    condition: Condition,
    shape: Sequence[int],
    rng: np.random.Generator | int,
) -> np.ndarray:
    """Exact ancestral draw: pick a component, add shared + per-frame noise.

    The shared field has variance rho sigma^2 and is common to all frames;
    the independent field has variance (1 - rho) sigma^2 per frame, which
    reproduces the component covariance exactly.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    frames, channels, height, width = (int(s) for s in shape)
    if frames < 2:
        raise ValueError("need at least 2 frames")
    weights = np.array([w for w, _ in prior.components])
    idx = int(rng.choice(len(weights), p=weights)) if len(weights) > 1 else 0
    comp = prior.components[idx][1]
    shared = rng.standard_normal((1, channels, height, width))
    indep = rng.standard_normal((frames, channels, height, width))
    out = (
        comp.mean_for(condition)
        + comp.sigma * np.sqrt(comp.rho) * shared
        + comp.sigma * np.sqrt(1.0 - comp.rho) * indep
    )
    return np.ascontiguousarray(np.broadcast_to(out, (frames, channels, height, width)))


def _component_stats(
    prior: MixtureVideoPrior, z_t: np.ndarray, alpha_bar: float, condition: Condition
):
    """Per-component posterior means and unnormalized log-likelihoods.

    The diffused marginal of component k is Gaussian with mean
    sqrt(a) m_k and covariance a Sigma_k + (1 - a) I, which shares the
    frame-mean eigenstructure of Sigma_k; both the quadratic form and the
    posterior mean reduce to scalar work on the two eigen-bands.
    """
    frames = z_t.shape[0]
    coords_per_frame = z_t[0].size
    dim = z_t.size
    sqrt_a = np.sqrt(alpha_bar)
    posts = []
    loglik = np.empty(len(prior))
    for k, (weight, comp) in enumerate(prior.components):
        lam_mean, lam_perp = comp.eigenvalues(frames)
        a_mean = alpha_bar * lam_mean + (1.0 - alpha_bar)
        a_perp = alpha_bar * lam_perp + (1.0 - alpha_bar)
        if a_mean <= 0.0 or a_perp <= 0.0:
            raise FloatingPointError("diffused covariance lost positive definiteness")
        v = z_t - sqrt_a * comp.mean_for(condition)
        v_bar = v.mean(axis=0, keepdims=True)
        v_perp = v - v_bar
        posts.append(
            comp.mean_for(condition)
            + sqrt_a * (lam_mean / a_mean * v_bar + lam_perp / a_perp * v_perp)
        )
        quad = frames * float((v_bar**2).sum()) / a_mean + float((v_perp**2).sum()) / a_perp
        logdet = coords_per_frame * (np.log(a_mean) + (frames - 1) * np.log(a_perp))
        loglik[k] = np.log(weight) - 0.5 * (quad + logdet + dim * _LOG_2PI)
    return posts, loglik


def _softmax(loglik: np.ndarray) -> np.ndarray:
    shifted = loglik - loglik.max()
    expd = np.exp(shifted)
    return expd / expd.sum()


def posterior_mean(
    prior: MixtureVideoPrior, z_t: np.ndarray, alpha_bar: float, condition: Condition = None
) -> np.ndarray:
    """Exact E[z0 | z_t] under the diffused mixture at level alpha_bar."""
    z_t = _validate_latent(z_t)
    if not 0.0 < alpha_bar <= 1.0:
        raise ValueError("alpha_bar must lie in (0, 1]")
    posts, loglik = _component_stats(prior, z_t, float(alpha_bar), condition)
    if len(posts) == 1:
        return posts[0] + np.zeros_like(z_t)
    resp = _softmax(loglik)
    out = np.zeros_like(z_t)
    for r, p in zip(resp, posts):
        out += r * p
    return out


def responsibilities(
    prior: MixtureVideoPrior, z_t: np.ndarray, alpha_bar: float, condition: Condition = None
) -> np.ndarray:
    """Posterior component probabilities for a latent at level alpha_bar."""
    z_t = _validate_latent(z_t)
    if not 0.0 < alpha_bar <= 1.0:
        raise ValueError("alpha_bar must lie in (0, 1]")
    _, loglik = _component_stats(prior, z_t, float(alpha_bar), condition)
    return _softmax(loglik)


def log_marginal(
    prior: MixtureVideoPrior, z_t: np.ndarray, alpha_bar: float, condition: Condition = None
) -> float:
    """Log density of the diffused mixture marginal at z_t."""
    z_t = _validate_latent(z_t)
    if not 0.0 < alpha_bar <= 1.0:
        raise ValueError("alpha_bar must lie in (0, 1]")
    _, loglik = _component_stats(prior, z_t, float(alpha_bar), condition)
    peak = loglik.max()
    return float(peak + np.log(np.exp(loglik - peak).sum()))


def eps_prediction(
    prior: MixtureVideoPrior, z_t: np.ndarray, alpha_bar: float, condition: Condition = None
) -> np.ndarray:
    """Noise prediction consistent with `posterior_mean`.

    eps_hat = (z_t - sqrt(a) E[z0 | z_t]) / sqrt(1 - a), which also equals
    -sqrt(1 - a) times the score of the diffused marginal.
    """
    if not 0.0 < alpha_bar < 1.0:
        raise ValueError("alpha_bar must lie strictly inside (0, 1) for eps prediction")
    post = posterior_mean(prior, z_t, alpha_bar, condition)
    return (np.asarray(z_t, dtype=np.float64) - np.sqrt(alpha_bar) * post) / np.sqrt(
        1.0 - alpha_bar
    )


def make_denoiser(
    prior: MixtureVideoPrior,
) -> Callable[[np.ndarray, float, Condition], np.ndarray]:
    """Bind a prior into the ``denoiser(z_t, alpha_bar, condition)`` callable
    shape the samplers consume."""

    def denoiser(z_t: np.ndarray, alpha_bar: float, condition: Condition) -> np.ndarray:
        return eps_prediction(prior, z_t, alpha_bar, condition)

    return denoiser
