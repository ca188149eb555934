from __future__ import division, absolute_import
import torch

__all__ = [
    'NoiseSchedule', 'build_schedule', 'add_noise', 'denoise_estimate',
    'renoise', 'gamma_t'
]

AVAI_SCHEDULES = ['linear', 'scaled_linear']


class NoiseSchedule(object):
    """Discrete DDPM noise schedule.

    Index convention: ``t`` runs over 1..T and ``alpha_bars[0] = 1``, so the
    tables are indexed directly by the timestep.

    Args:
        betas (torch.Tensor): beta_1..beta_T, each in (0, 1).
        kind (str, optional): name of the construction rule.
    """

    def __init__(self, betas, kind='custom'):
        betas = torch.as_tensor(betas, dtype=torch.float64).reshape(-1)
        if betas.numel() < 1:
            raise ValueError('A schedule needs at least one step')
        if not ((betas > 0) & (betas < 1)).all():
            raise ValueError('All betas must lie in (0, 1)')
        self.kind = kind
        self.T = betas.numel()
        one = torch.ones(1, dtype=torch.float64)
        self.betas = torch.cat([torch.zeros(1, dtype=torch.float64), betas])
        self.alphas = torch.cat([one, 1. - betas])
        self.alpha_bars = torch.cat([one, torch.cumprod(1. - betas, dim=0)])
        self.sqrt_alpha_bars = self.alpha_bars.sqrt()
        self.sqrt_one_minus_alpha_bars = (1. - self.alpha_bars).sqrt()

    def check_t(self, t, low=1):
        t = torch.as_tensor(t)
        if t.dtype.is_floating_point:
            if not torch.equal(t, t.round()):
                raise IndexError('Timesteps must be integers, but got {}'.format(t))
            t = t.long()
        if (t < low).any() or (t > self.T).any():
            raise IndexError(
                'Timestep out of range [{}, {}]: {}'.format(low, self.T, t)
            )
        return t

    def to_config(self):
        return {
            'schedule_kind': self.kind,
            'T': self.T,
            'beta_start': self.betas[1].item(),
            'beta_end': self.betas[-1].item()
        }

    def __repr__(self):
        return 'NoiseSchedule(kind={}, T={})'.format(self.kind, self.T)


def build_schedule(kind='linear', T=50, beta_start=1e-4, beta_end=0.02):
    """Builds a linear or scaled-linear beta schedule.

    Args:
        kind (str, optional): "linear" interpolates beta linearly, "scaled_linear"
            interpolates sqrt(beta) linearly. Default is "linear".
        T (int, optional): number of steps. Default is 50.
        beta_start (float, optional): first beta. Default is 1e-4.
        beta_end (float, optional): last beta. Default is 0.02.

    Examples::
        >>> sched = build_schedule('linear', T=1000, beta_start=1e-4, beta_end=0.02)
    """
    if kind not in AVAI_SCHEDULES:
        raise ValueError(
            'Unsupported schedule: {}. Must be one of {}'.format(
                kind, AVAI_SCHEDULES
            )
        )
    if int(T) != T or T < 1:
        raise ValueError('T must be a positive integer, but got {}'.format(T))
    if not 0 < beta_start <= beta_end < 1:
        raise ValueError(
            'Need 0 < beta_start <= beta_end < 1, but got {} and {}'.format(
                beta_start, beta_end
            )
        )
    T = int(T)
    if kind == 'linear':
        betas = torch.linspace(beta_start, beta_end, T, dtype=torch.float64)
    else:
        betas = torch.linspace(
            beta_start**0.5, beta_end**0.5, T, dtype=torch.float64
        )**2
    return NoiseSchedule(betas, kind=kind)


def _coef(table, t, like):
    c = table[t]
    if c.dim() > 0 and like.dim() > 1:
        c = c.view(-1, *([1] * (like.dim() - 1)))
    return c


def add_noise(z0, t, eps, sched):
    """``z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps``; ``t = 0`` returns ``z0``."""
    t = sched.check_t(t, low=0)
    z0 = torch.as_tensor(z0, dtype=torch.float64)
    eps = torch.as_tensor(eps, dtype=torch.float64)
    return _coef(sched.sqrt_alpha_bars, t, z0) * z0 \
        + _coef(sched.sqrt_one_minus_alpha_bars, t, z0) * eps


def denoise_estimate(z_t, eps_hat, t, sched):
    """Clean estimate ``z_{0|t} = (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)``."""
    t = sched.check_t(t, low=1)
    z_t = torch.as_tensor(z_t, dtype=torch.float64)
    eps_hat = torch.as_tensor(eps_hat, dtype=torch.float64)
    a = _coef(sched.sqrt_alpha_bars, t, z_t)
    if (a == 0).any():
        raise ZeroDivisionError('Singular schedule: alpha_bar_t = 0')
    return (z_t - _coef(sched.sqrt_one_minus_alpha_bars, t, z_t) * eps_hat) / a


def renoise(z0_est, eps_renoise, t_prev, sched):
    """``sqrt(abar_{t_prev}) z0_est + sqrt(1 - abar_{t_prev}) eps_renoise``."""
    return add_noise(z0_est, t_prev, eps_renoise, sched)


def gamma_t(sched, t):
    """SDS coefficient ``sqrt(abar_t) / sqrt(1 - abar_t)``."""
    t = sched.check_t(t, low=1)
    denom = sched.sqrt_one_minus_alpha_bars[t]
    if (denom == 0).any():
        raise ZeroDivisionError('gamma_t is undefined for alpha_bar_t = 1')
    g = sched.sqrt_alpha_bars[t] / denom
    return g.item() if g.dim() == 0 else g
