"""3-D spatio-temporal Butterworth masks and frequency-band remixing.

The mask lives on the (frames, height, width) DFT lattice.  Each axis is
mapped to a signed normalized frequency in [-1, 1] (bin frequency divided
by Nyquist; on even axes the Nyquist bin is assigned to +1 so the layout
is documented and reproducible).  The radius of a bin is the Euclidean
norm of the three per-axis frequencies divided by sqrt(3), which spans
[0, 1] on any lattice, and the low-pass gain is the Butterworth response

    gain(d) = 1 / (1 + (d / gamma)^(2 n)).

High-pass is defined as the pointwise complement ``1 - gain`` so the two
bands always reconstruct exactly.  Channels never mix: the transform runs
over (frames, height, width) independently per channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ButterworthMask3D", "butterworth_mask", "lowpass_highpass_mix", "lowpass"]

_IMAG_TOL = 1e-10


def _axis_freqs(n: int) -> np.ndarray:
    # fftfreq yields cycles/sample in [-0.5, 0.5); doubling normalizes by
    # Nyquist.  Even axes get their Nyquist bin flipped from -1 to +1.
    f = np.fft.fftfreq(n) * 2.0
    if n % 2 == 0:
        f[n // 2] = 1.0
    return f


@dataclass(frozen=True)
class ButterworthMask3D:
    """Low-pass gains over the (frames, height, width) frequency lattice."""

    gains: np.ndarray
    cutoff: float
    order: int

    def __post_init__(self):
        gains = np.ascontiguousarray(self.gains, dtype=np.float64)
        if gains.ndim != 3:
            raise ValueError("gains must be a 3-D array")
        if np.any(gains < 0.0) or np.any(gains > 1.0):
            raise ValueError("gains must lie in [0, 1]")
        if gains[0, 0, 0] != 1.0:
            raise ValueError("gain at zero frequency must be 1")
        gains.setflags(write=False)
        object.__setattr__(self, "gains", gains)
        if not 0.0 < self.cutoff < 1.0:
            raise ValueError("cutoff must lie in (0, 1)")
        if self.order < 1:
            raise ValueError("order must be >= 1")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.gains.shape


def butterworth_mask(frames: int, height: int, width: int, gamma: float, order: int) -> ButterworthMask3D:
    """Build the order-n Butterworth low-pass mask with cutoff radius gamma."""
    if min(frames, height, width) < 1:
        raise ValueError("lattice dimensions must be >= 1")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    if order < 1:
        raise ValueError("order must be >= 1")
    f_t = _axis_freqs(frames)
    f_h = _axis_freqs(height)
    f_w = _axis_freqs(width)
    d = np.sqrt(
        f_t[:, None, None] ** 2 + f_h[None, :, None] ** 2 + f_w[None, None, :] ** 2
    ) / np.sqrt(3.0)
    gains = 1.0 / (1.0 + (d / gamma) ** (2 * order))
    return ButterworthMask3D(gains=gains, cutoff=float(gamma), order=int(order))


def lowpass_highpass_mix(z: np.ndarray, noise: np.ndarray, mask: ButterworthMask3D) -> np.ndarray:
    """Keep the low band of ``z``, take the high band from ``noise``.

    Computes ifft(gains * fft(z) + (1 - gains) * fft(noise)) with the 3-D
    DFT over (frames, height, width), per channel.  For real inputs the
    result is real up to rounding; an imaginary residue above 1e-10
    (relative to the output scale) raises instead of being silently
    dropped.
    """
    z = np.asarray(z, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if z.shape != noise.shape:
        raise ValueError(f"shape mismatch: {z.shape} vs {noise.shape}")
    if z.ndim != 4:
        raise ValueError("expected a (frames, channels, height, width) latent")
    n, _, h, w = z.shape
    if (n, h, w) != mask.shape:
        raise ValueError(f"mask lattice {mask.shape} does not match latent {(n, h, w)}")
    axes = (0, 2, 3)
    g = mask.gains[:, None, :, :]
    spectrum = g * np.fft.fftn(z, axes=axes) + (1.0 - g) * np.fft.fftn(noise, axes=axes)
    out = np.fft.ifftn(spectrum, axes=axes)
    scale = max(1.0, float(np.max(np.abs(out.real))))
    residue = float(np.max(np.abs(out.imag)))
    if residue > _IMAG_TOL * scale:
        raise FloatingPointError(f"imaginary residue {residue:.3e} exceeds tolerance")
    return np.ascontiguousarray(out.real)


def lowpass(z: np.ndarray, mask: ButterworthMask3D) -> np.ndarray:
    """Low-pass band alone: `lowpass_highpass_mix` against zero noise."""
    return lowpass_highpass_mix(z, np.zeros_like(z), mask)
