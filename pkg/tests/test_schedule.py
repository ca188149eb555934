import math
import pytest
import torch

from guidancelab.diffusion import (
    NoiseSchedule, add_noise, build_schedule, denoise_estimate, gamma_t,
    renoise
)

SQRT_075 = math.sqrt(0.75)


def _t(*values):
    return torch.tensor(values, dtype=torch.float64)


def test_linear_two_step_products():
    sched = build_schedule('linear', T=2, beta_start=0.1, beta_end=0.3)
    assert sched.alpha_bars[1:].tolist() == pytest.approx([0.9, 0.63], abs=1e-15)
    assert sched.alpha_bars[0].item() == 1.


def test_linear_endpoints_for_1000_steps():
    sched = build_schedule('linear', T=1000, beta_start=1e-4, beta_end=0.02)
    assert sched.betas[1].item() == pytest.approx(1e-4)
    assert sched.betas[1000].item() == pytest.approx(0.02)
    assert (sched.alpha_bars[1:] < sched.alpha_bars[:-1]).all()


def test_scaled_linear_constant():
    sched = build_schedule('scaled_linear', T=3, beta_start=0.04, beta_end=0.04)
    assert sched.betas[1:].tolist() == pytest.approx([0.04] * 3, abs=1e-15)


@pytest.mark.parametrize(
    'kwargs', [
        {'kind': 'cosine'},
        {'T': 0},
        {'beta_start': 0.},
        {'beta_start': 0.3, 'beta_end': 0.2},
        {'beta_end': 1.},
    ]
)
def test_invalid_schedules(kwargs):
    with pytest.raises(ValueError):
        build_schedule(**kwargs)


def test_invalid_betas():
    with pytest.raises(ValueError):
        NoiseSchedule([0.5, 1.5])


def test_add_noise_hand_arithmetic():
    sched = NoiseSchedule([0.75])  # abar_1 = 0.25
    z = add_noise(_t(2., 0.), 1, _t(1., -1.), sched)
    assert z.tolist() == pytest.approx([1. + SQRT_075, -SQRT_075], abs=1e-12)


def test_add_noise_at_t0_is_identity(sched):
    z0 = _t(0.3, -0.7)
    assert torch.equal(add_noise(z0, 0, _t(5., 5.), sched), z0)


def test_add_noise_without_noise_scales(sched):
    z0 = _t(0.3, -0.7)
    z = add_noise(z0, 4, torch.zeros(2, dtype=torch.float64), sched)
    assert torch.allclose(z, sched.sqrt_alpha_bars[4] * z0, atol=0)


def test_denoise_estimate_hand_arithmetic():
    sched = NoiseSchedule([0.75])
    z0 = denoise_estimate(_t(1., 0.), _t(0.5, 0.5), 1, sched)
    expected = [(1. - SQRT_075 * 0.5) / 0.5, -SQRT_075 * 0.5 / 0.5]
    assert z0.tolist() == pytest.approx(expected, abs=1e-12)


def test_denoise_estimate_without_noise(sched):
    z_t = _t(0.4, 0.2)
    z0 = denoise_estimate(z_t, torch.zeros(2, dtype=torch.float64), 3, sched)
    assert torch.allclose(z0, z_t / sched.sqrt_alpha_bars[3], atol=1e-15)


def test_round_trip_batched(sched):
    gen = torch.Generator().manual_seed(0)
    z0 = torch.randn(64, 2, generator=gen, dtype=torch.float64)
    eps = torch.randn(64, 2, generator=gen, dtype=torch.float64)
    t = torch.randint(1, sched.T + 1, (64, ), generator=gen)
    z_t = add_noise(z0, t, eps, sched)
    assert (denoise_estimate(z_t, eps, t, sched) - z0).abs().max().item() <= 1e-10


def test_renoise_hand_arithmetic():
    sched = NoiseSchedule([0.36, 0.5])  # abar_1 = 0.64
    z = renoise(_t(1.1340, -0.8660), _t(0.5, 0.5), 1, sched)
    expected = [0.8 * 1.1340 + 0.6 * 0.5, 0.8 * -0.8660 + 0.6 * 0.5]
    assert z.tolist() == pytest.approx(expected, abs=1e-12)


def test_renoise_to_t0_returns_estimate(sched):
    z0 = _t(0.1, 0.2)
    assert torch.equal(renoise(z0, _t(1., 1.), 0, sched), z0)


@pytest.mark.parametrize('beta, expected', [(0.5, 1.), (0.2, 2.), (0.1, 3.)])
def test_gamma_values(beta, expected):
    # a single step with beta gives abar_1 = 1 - beta
    assert gamma_t(NoiseSchedule([beta]), 1) == pytest.approx(expected, abs=1e-12)


def test_gamma_identity(sched):
    t = torch.arange(1, sched.T + 1)
    g = gamma_t(sched, t)
    abar = sched.alpha_bars[t]
    assert (g - (abar / (1. - abar)).sqrt()).abs().max().item() <= 1e-12


@pytest.mark.parametrize('t', [0, 11, -1])
def test_timestep_out_of_range(sched, t):
    with pytest.raises(IndexError):
        denoise_estimate(_t(0., 0.), _t(0., 0.), t, sched)


def test_add_noise_rejects_t_above_T(sched):
    with pytest.raises(IndexError):
        add_noise(_t(0., 0.), sched.T + 1, _t(0., 0.), sched)


def test_to_config_round_trip():
    sched = build_schedule('scaled_linear', T=20, beta_start=0.00085, beta_end=0.012)
    cfg = sched.to_config()
    again = build_schedule(cfg['schedule_kind'], cfg['T'], cfg['beta_start'], cfg['beta_end'])
    assert torch.allclose(again.alpha_bars, sched.alpha_bars, atol=1e-15)
