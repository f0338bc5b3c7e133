import math

import numpy as np
import pytest

from guidelab.freqfilter import (
    ButterworthMask3D,
    butterworth_mask,
    lowpass,
    lowpass_highpass_mix,
)


def test_dc_gain_is_one():
    mask = butterworth_mask(8, 4, 4, 0.25, 4)
    assert mask.gains[0, 0, 0] == 1.0


def test_half_power_at_cutoff():
    # put the cutoff exactly on the (f_t=0.25, 0, 0) bin radius
    gamma = 0.25 / math.sqrt(3.0)
    mask = butterworth_mask(8, 4, 4, gamma, 4)
    assert abs(mask.gains[1, 0, 0] - 0.5) <= 1e-12


def test_gain_formula_at_half_radius():
    # bin (0.5, 0.5, 0.5) sits at radius 0.5; gamma=0.25, n=4 gives 1/(1+2^8)
    mask = butterworth_mask(8, 4, 4, 0.25, 4)
    np.testing.assert_allclose(mask.gains[2, 1, 1], 1.0 / 257.0, rtol=1e-10)


def test_gains_within_unit_interval_and_symmetric():
    mask = butterworth_mask(6, 5, 4, 0.3, 3)
    g = mask.gains
    assert np.all(g >= 0.0) and np.all(g <= 1.0)
    n, h, w = g.shape
    for i in range(n):
        for j in range(h):
            for k in range(w):
                assert g[i, j, k] == pytest.approx(g[(-i) % n, (-j) % h, (-k) % w], rel=1e-12)


def test_parameter_domain_errors():
    for gamma in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            butterworth_mask(4, 4, 4, gamma, 4)
    with pytest.raises(ValueError):
        butterworth_mask(4, 4, 4, 0.25, 0)


def test_mask_type_validation():
    with pytest.raises(ValueError):
        ButterworthMask3D(gains=np.full((2, 2, 2), 1.5), cutoff=0.25, order=4)
    bad_dc = np.ones((2, 2, 2))
    bad_dc[0, 0, 0] = 0.5
    with pytest.raises(ValueError):
        ButterworthMask3D(gains=bad_dc, cutoff=0.25, order=4)


@pytest.fixture()
def mask():
    return butterworth_mask(8, 4, 4, 0.25, 4)


def test_mix_with_identical_noise_is_identity(mask):
    rng = np.random.default_rng(0)
    z = rng.standard_normal((8, 2, 4, 4))
    np.testing.assert_allclose(lowpass_highpass_mix(z, z, mask), z, rtol=1e-10, atol=1e-10)


def test_all_pass_mask_returns_input():
    ones = ButterworthMask3D(gains=np.ones((8, 4, 4)), cutoff=0.5, order=1)
    rng = np.random.default_rng(1)
    z = rng.standard_normal((8, 1, 4, 4))
    noise = rng.standard_normal((8, 1, 4, 4))
    np.testing.assert_allclose(lowpass_highpass_mix(z, noise, ones), z, atol=1e-12)


def test_dc_bookkeeping(mask):
    rng = np.random.default_rng(2)
    z = np.full((8, 1, 4, 4), 3.25)
    noise = rng.standard_normal((8, 1, 4, 4))
    noise -= noise.mean()  # zero DC
    out = lowpass_highpass_mix(z, noise, mask)
    dc = np.fft.fftn(out, axes=(0, 2, 3))[0, 0, 0, 0]
    assert dc.real == pytest.approx(3.25 * 8 * 4 * 4, rel=1e-12)
    assert abs(dc.imag) < 1e-9


def test_output_real_on_random_inputs(mask):
    rng = np.random.default_rng(3)
    for _ in range(25):
        z = rng.standard_normal((8, 1, 4, 4))
        noise = rng.standard_normal((8, 1, 4, 4))
        out = lowpass_highpass_mix(z, noise, mask)
        assert out.dtype == np.float64


def test_band_reconstruction(mask):
    rng = np.random.default_rng(4)
    for _ in range(50):
        z = rng.standard_normal((8, 1, 4, 4))
        low = lowpass(z, mask)
        high = z - low
        err = np.max(np.abs(low + high - z)) / max(1.0, np.max(np.abs(z)))
        assert err <= 1e-10


def test_energy_bound_and_equality(mask):
    rng = np.random.default_rng(5)
    for _ in range(20):
        z = rng.standard_normal((8, 1, 4, 4))
        noise = rng.standard_normal((8, 1, 4, 4))
        out = lowpass_highpass_mix(z, noise, mask)
        assert (out**2).sum() <= (z**2).sum() + (noise**2).sum() + 1e-9
    delta = np.zeros((8, 1, 4, 4))
    delta[0, 0, 0, 0] = 1.0
    out = lowpass_highpass_mix(delta, delta, mask)
    assert (out**2).sum() == pytest.approx((delta**2).sum(), rel=1e-12)


def test_mask_idempotence_squares_gains(mask):
    rng = np.random.default_rng(6)
    z = rng.standard_normal((8, 1, 4, 4))
    twice = lowpass(lowpass(z, mask), mask)
    spectrum = np.fft.fftn(z, axes=(0, 2, 3))
    want = np.fft.ifftn(mask.gains[:, None, :, :] ** 2 * spectrum, axes=(0, 2, 3)).real
    np.testing.assert_allclose(twice, want, rtol=1e-10, atol=1e-10)


def test_shape_mismatch_errors(mask):
    z = np.zeros((8, 1, 4, 4))
    with pytest.raises(ValueError):
        lowpass_highpass_mix(z, np.zeros((8, 1, 4, 5)), mask)
    with pytest.raises(ValueError):
        lowpass_highpass_mix(np.zeros((7, 1, 4, 4)), np.zeros((7, 1, 4, 4)), mask)


def test_channels_do_not_mix(mask):
    rng = np.random.default_rng(7)
    z = rng.standard_normal((8, 2, 4, 4))
    zeros = np.zeros_like(z)
    full = lowpass(z, mask)
    solo = np.zeros_like(z)
    for c in range(2):
        one = zeros.copy()
        one[:, c] = z[:, c]
        solo[:, c] = lowpass(one, mask)[:, c]
    np.testing.assert_allclose(full, solo, atol=1e-12)
