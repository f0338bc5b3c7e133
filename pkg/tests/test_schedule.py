import math

import numpy as np
import pytest

from guidelab.sampler import tweedie_denoise
from guidelab.schedule import (
    NoiseSchedule,
    TimestepGrid,
    build_linear_schedule,
    ddim_grid,
    forward_diffuse,
    guidance_subgrid,
    renoise_to_domain,
)

# cumulative product of (1 - beta) for linear beta in [1e-4, 2e-2], T=1000,
# recomputed with mpmath at 60 digits in test_cumprod_matches_oracle
ABAR_1000_LINEAR = 4.035829765375676e-05


def test_constant_beta_product():
    sched = build_linear_schedule(0.5, 0.5, 3)
    np.testing.assert_allclose(sched.alpha_bars, [1.0, 0.5, 0.25, 0.125], rtol=0, atol=0)
    np.testing.assert_allclose(sched.betas, [0.5, 0.5, 0.5])
    assert sched.total_steps == 3


def test_alpha_bars_strictly_decreasing():
    rng = np.random.default_rng(0)
    for _ in range(25):
        lo, hi = np.sort(rng.uniform(1e-5, 0.999, size=2))
        t = int(rng.integers(1, 200))
        sched = build_linear_schedule(lo, hi, t)
        assert np.all(np.diff(sched.alpha_bars) < 0)
        assert np.all(sched.alpha_bars > 0)
        assert sched.alpha_bars[0] == 1.0


def test_cumprod_matches_oracle():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 60
    t = 1000
    lo, hi = mpmath.mpf("0.0001"), mpmath.mpf("0.02")
    product = mpmath.mpf(1)
    for i in range(t):
        product *= 1 - (lo + (hi - lo) * i / (t - 1))
    oracle = float(product)
    assert abs(oracle - ABAR_1000_LINEAR) / ABAR_1000_LINEAR < 1e-12
    sched = build_linear_schedule(1e-4, 2e-2, t)
    assert abs(sched.alpha_bars[t] - oracle) / oracle < 1e-12


def test_build_rejects_bad_parameters():
    with pytest.raises(ValueError):
        build_linear_schedule(0.0, 0.5, 10)
    with pytest.raises(ValueError):
        build_linear_schedule(0.5, 0.4, 10)
    with pytest.raises(ValueError):
        build_linear_schedule(0.1, 1.0, 10)
    with pytest.raises(ValueError):
        build_linear_schedule(0.1, 0.2, 0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        NoiseSchedule(betas=np.array([0.1]), alpha_bars=np.array([0.9, 0.8]))
    with pytest.raises(ValueError):
        NoiseSchedule(betas=np.array([0.1]), alpha_bars=np.array([1.0, 0.9, 0.8]))
    with pytest.raises(ValueError):
        NoiseSchedule(betas=np.array([0.1, 0.1]), alpha_bars=np.array([1.0, 0.9, 0.95]))


def test_schedule_arrays_immutable():
    sched = build_linear_schedule(1e-4, 2e-2, 10)
    with pytest.raises(ValueError):
        sched.betas[0] = 0.5
    with pytest.raises(ValueError):
        sched.alpha_bars[0] = 0.5


def test_ddim_grid_identity():
    grid = ddim_grid(1000, 1000)
    assert grid.timesteps == tuple(range(1000, 0, -1))


def test_ddim_grid_floor_spacing():
    assert ddim_grid(10, 2).timesteps == (10, 5)
    assert ddim_grid(10, 3).timesteps == (10, 7, 4)


def test_ddim_grid_50_of_1000():
    grid = ddim_grid(1000, 50)
    expected = tuple(1000 - 20 * k for k in range(50))
    assert grid.timesteps == expected
    assert len(grid) == 50
    assert grid.timesteps[0] == 1000
    assert grid.timesteps[-1] == 20


def test_ddim_grid_rejects_too_many_steps():
    with pytest.raises(ValueError):
        ddim_grid(10, 11)
    with pytest.raises(ValueError):
        ddim_grid(10, 0)


def test_grid_type_validation():
    with pytest.raises(ValueError):
        TimestepGrid(timesteps=(5, 5))
    with pytest.raises(ValueError):
        TimestepGrid(timesteps=(3, 0))
    with pytest.raises(ValueError):
        TimestepGrid(timesteps=())


@pytest.fixture(scope="module")
def sched():
    return build_linear_schedule(1e-4, 2e-2, 1000)


def test_subgrid_dense_boundary(sched):
    grid = guidance_subgrid(25, 25, sched)
    assert grid.timesteps == tuple(range(25, 0, -1))


def test_subgrid_single_step(sched):
    assert guidance_subgrid(1000, 1, sched).timesteps == (1000,)


def test_subgrid_enumerated_rule(sched):
    # first 10 entries of the 25-point grid over [1, 980]: spacing 980 // 25
    expected = tuple(980 - 39 * k for k in range(10))
    assert guidance_subgrid(980, 10, sched).timesteps == expected


def test_subgrid_dense_fallback_short_interval(sched):
    assert guidance_subgrid(10, 5, sched).timesteps == (10, 9, 8, 7, 6)
    # shorter than tau: every available entry is returned
    assert guidance_subgrid(3, 10, sched).timesteps == (3, 2, 1)


def test_subgrid_domain_errors(sched):
    for t, tau in ((0, 5), (1001, 5), (500, 0), (500, 26)):
        with pytest.raises(ValueError):
            guidance_subgrid(t, tau, sched)


def test_forward_diffuse_clean_level(sched):
    rng = np.random.default_rng(1)
    z0 = rng.standard_normal((4, 1, 2, 2))
    eps = rng.standard_normal((4, 1, 2, 2))
    assert np.array_equal(forward_diffuse(z0, 0, eps, sched), z0)


def test_forward_diffuse_zero_signal(sched):
    rng = np.random.default_rng(2)
    eps = rng.standard_normal((4, 1, 2, 2))
    out = forward_diffuse(np.zeros_like(eps), 600, eps, sched)
    np.testing.assert_allclose(out, np.sqrt(1 - sched.alpha_bars[600]) * eps, rtol=1e-15)


def test_forward_diffuse_scalar_oracle(sched):
    rng = np.random.default_rng(3)
    z0 = rng.standard_normal((3, 2, 2, 2))
    eps = rng.standard_normal((3, 2, 2, 2))
    t = 412
    out = forward_diffuse(z0, t, eps, sched)
    a = float(sched.alpha_bars[t])
    for idx in np.ndindex(z0.shape):
        want = math.sqrt(a) * z0[idx] + math.sqrt(1 - a) * eps[idx]
        assert abs(out[idx] - want) <= 1e-12 * max(1.0, abs(want))


def test_forward_diffuse_shape_mismatch(sched):
    with pytest.raises(ValueError):
        forward_diffuse(np.zeros((2, 1, 2, 2)), 5, np.zeros((3, 1, 2, 2)), sched)


def test_renoise_matches_forward_with_same_schedule(sched):
    rng = np.random.default_rng(4)
    z0 = rng.standard_normal((4, 1, 3, 3))
    eps = rng.standard_normal((4, 1, 3, 3))
    a = forward_diffuse(z0, 777, eps, sched)
    b = renoise_to_domain(z0, 777, sched, eps)
    assert np.array_equal(a, b)


def test_renoise_under_distinct_schedule():
    rng = np.random.default_rng(5)
    src = build_linear_schedule(1e-4, 2e-2, 1000)
    dst = build_linear_schedule(8.5e-4, 1.2e-2, 1000)
    z0 = rng.standard_normal((4, 1, 2, 2))
    eps = rng.standard_normal((4, 1, 2, 2))
    t = 321
    out = renoise_to_domain(z0, t, dst, eps)
    a = float(dst.alpha_bars[t])
    for idx in np.ndindex(z0.shape):
        want = math.sqrt(a) * z0[idx] + math.sqrt(1 - a) * eps[idx]
        assert abs(out[idx] - want) <= 1e-12 * max(1.0, abs(want))
    assert not np.allclose(out, renoise_to_domain(z0, t, src, eps))


def test_forward_then_tweedie_roundtrip(sched):
    rng = np.random.default_rng(6)
    for t in (1, 137, 500, 1000):
        z0 = rng.standard_normal((4, 2, 3, 3))
        eps = rng.standard_normal((4, 2, 3, 3))
        z_t = forward_diffuse(z0, t, eps, sched)
        back = tweedie_denoise(z_t, eps, float(sched.alpha_bars[t]))
        np.testing.assert_allclose(back, z0, rtol=1e-10, atol=1e-10)
