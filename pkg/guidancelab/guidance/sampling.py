from __future__ import division, absolute_import
import torch

from guidancelab.data import embed_condition, wrap_angle
from guidancelab.diffusion import denoise_estimate, renoise
from guidancelab.utils import NumericDivergenceError, make_generator

from .combine import cfg_combine, guidance_pair

__all__ = [
    'GuidanceMode', 'Trajectory', 'sample_trajectory', 'AVAI_SAMPLERS',
    'AVAI_MODES'
]

AVAI_MODES = ['cfg', 'cfgpp', 'anneal']
AVAI_SAMPLERS = ['ddim', 'euler', 'euler-a']

# divergence detector for toy sampling
MAX_ABS_COORD = 1e3


class GuidanceMode(object):
    """How the guidance scale of every step is chosen.

    Use the constructors :meth:`cfg`, :meth:`cfgpp` and :meth:`annealing`.

    Args:
        kind (str): "cfg", "cfgpp" or "anneal".
        w (float, optional): constant scale of "cfg" / "cfgpp".
        scheduler (SchedulerNet, optional): scale predictor of "anneal".
        lam (float, optional): lambda fed to the scheduler.
        strict (bool, optional): enforce w in [0, 1] for "cfgpp".
    """

    def __init__(self, kind, w=None, scheduler=None, lam=None, strict=False):
        if kind not in AVAI_MODES:
            raise ValueError(
                'Unsupported guidance mode: {}. Must be one of {}'.format(
                    kind, AVAI_MODES
                )
            )
        if kind == 'anneal':
            if scheduler is None:
                raise ValueError('Annealing guidance requires a trained scheduler')
            if lam is None or not 0 <= lam <= 1:
                raise ValueError('lambda must lie in [0, 1], but got {}'.format(lam))
        else:
            if w is None:
                raise ValueError('Mode "{}" requires a guidance scale w'.format(kind))
            if kind == 'cfgpp' and strict and not 0 <= w <= 1:
                raise ValueError(
                    'Strict CFG++ restricts w to [0, 1], but got {}'.format(w)
                )
        self.kind = kind
        self.w = None if w is None else float(w)
        self.scheduler = scheduler
        self.lam = None if lam is None else float(lam)
        self.strict = strict

    @classmethod
    def cfg(cls, w):
        return cls('cfg', w=w)

    @classmethod
    def cfgpp(cls, w, strict=False):
        return cls('cfgpp', w=w, strict=strict)

    @classmethod
    def annealing(cls, scheduler, lam):
        return cls('anneal', scheduler=scheduler, lam=lam)

    @property
    def renoise_with_null(self):
        """CFG renoises with the guided prediction, CFG++ and annealing with
        eps_null (unless the scheduler was trained without CFG++ renoise)."""
        if self.kind == 'cfg':
            return False
        if self.kind == 'anneal':
            return self.scheduler.ablation.use_cfgpp_renoise
        return True

    def scale(self, tau, delta_norm):
        """Guidance scale for normalized time ``tau`` (1 = pure noise)."""
        if self.kind != 'anneal':
            return torch.tensor(self.w, dtype=torch.float64)
        w, _ = self.scheduler.forward_normalized(tau, delta_norm, self.lam)
        return w[0]

    @property
    def label(self):
        if self.kind == 'anneal':
            return 'anneal(lambda={})'.format(self.lam)
        return '{}(w={})'.format(self.kind, self.w)

    def to_dict(self):
        return {'kind': self.kind, 'w': self.w, 'lambda': self.lam}


class Trajectory(object):
    """Per-step record of one guided sampling run.

    Row k holds the state *entering* step k together with the quantities
    computed there; ``z0`` is the final state.

    Attributes:
        ts (torch.Tensor): timesteps (T,) (float times for flows).
        zs (torch.Tensor): states (T, 2).
        ws (torch.Tensor): guidance scales (T,).
        delta_norms (torch.Tensor): ||eps_c - eps_null|| (T,).
        eps_c (torch.Tensor): conditional predictions (T, 2).
        eps_null (torch.Tensor): unconditional predictions (T, 2).
        z0 (torch.Tensor): endpoint (2,).
    """

    def __init__(
        self, ts, zs, ws, delta_norms, eps_c, eps_null, z0, mode, sampler,
        seed, cond
    ):
        self.ts = ts
        self.zs = zs
        self.ws = ws
        self.delta_norms = delta_norms
        self.eps_c = eps_c
        self.eps_null = eps_null
        self.z0 = z0
        self.mode = mode
        self.sampler = sampler
        self.seed = seed
        self.cond = cond

    def __len__(self):
        return self.ts.numel()

    def max_abs(self):
        return max(self.zs.abs().max().item(), self.z0.abs().max().item())

    def meta(self):
        return {
            'mode': self.mode,
            'sampler': self.sampler,
            'seed': self.seed,
            'c': self.cond,
            'steps': len(self)
        }


class _Recorder(object):

    def __init__(self):
        self.rows = {k: [] for k in ('t', 'z', 'w', 'dn', 'ec', 'en')}

    def add(self, t, z, w, delta, eps_c, eps_null):
        self.rows['t'].append(t)
        self.rows['z'].append(z)
        self.rows['w'].append(w)
        self.rows['dn'].append(delta.norm())
        self.rows['ec'].append(eps_c)
        self.rows['en'].append(eps_null)

    def build(self, z0, mode, sampler, seed, cond, time_dtype):
        r = self.rows
        return Trajectory(
            torch.tensor(r['t'], dtype=time_dtype), torch.stack(r['z']),
            torch.stack(r['w']), torch.stack(r['dn']), torch.stack(r['ec']),
            torch.stack(r['en']), z0, mode.label, sampler, seed, cond
        )


def check_state(z, t):
    if not torch.isfinite(z).all() or z.abs().max().item() > MAX_ABS_COORD:
        raise NumericDivergenceError(
            'Sampling diverged at t={}: state {}'.format(t, z.tolist())
        )


def sample_trajectory(dnet, mode, sampler, cond, sched, seed):
    """Guided reverse diffusion from z_T ~ N(0, I) down to z_0.

    Per step: delta from the conditional / unconditional pair, the scale w_t
    (constant, or predicted from (t, ||delta_t||, lambda)), the guided
    prediction, the clean estimate, then renoising to t - 1 with either the
    guided or the unconditional prediction (see ``GuidanceMode``).

    "ddim" and "euler" share the deterministic update; "euler-a" splits the
    renoising term into a deterministic part and fresh noise with the
    ancestral variance ``(1 - abar_{t-1}) / (1 - abar_t) * beta_t``.

    Args:
        dnet (DenoiserNet): frozen backbone.
        mode (GuidanceMode): guidance rule.
        sampler (str): "ddim", "euler" or "euler-a".
        cond (float): target angle.
        sched (NoiseSchedule): schedule.
        seed (int): seed of z_T and of the ancestral noise.

    Returns:
        Trajectory
    """
    if sampler not in AVAI_SAMPLERS:
        raise ValueError(
            'Unsupported sampler: {}. Must be one of {}'.format(
                sampler, AVAI_SAMPLERS
            )
        )
    if cond is None:
        raise ValueError('Guided sampling needs a non-null condition')
    if mode.kind == 'anneal' and mode.scheduler.num_steps != sched.T:
        raise ValueError(
            'Scheduler was trained for T={}, schedule has T={}'.format(
                mode.scheduler.num_steps, sched.T
            )
        )
    cond = wrap_angle(cond).item()
    c_emb = embed_condition(cond)
    gen = make_generator(seed)
    z = torch.randn((1, 2), generator=gen, dtype=torch.float64)
    rec = _Recorder()

    for t in range(sched.T, 0, -1):
        eps_c, _, eps_null, _ = guidance_pair(dnet, z, t, c_emb)
        delta = (eps_c - eps_null)[0]
        w = mode.scale(t / sched.T, delta.norm())
        eps_hat = cfg_combine(eps_null, eps_c, w)
        z0_est = denoise_estimate(z, eps_hat, t, sched)
        src = eps_null if mode.renoise_with_null else eps_hat

        if sampler == 'euler-a':
            ab_t = sched.alpha_bars[t]
            ab_prev = sched.alpha_bars[t - 1]
            var_up = (1. - ab_prev) / (1. - ab_t) * sched.betas[t]
            det = (1. - ab_prev - var_up).clamp(min=0.).sqrt()
            fresh = torch.randn((1, 2), generator=gen, dtype=torch.float64)
            z_next = sched.sqrt_alpha_bars[t - 1] * z0_est + det * src \
                + var_up.sqrt() * fresh
        else:
            z_next = renoise(z0_est, src, t - 1, sched)

        rec.add(t, z[0], w, delta, eps_c[0], eps_null[0])
        check_state(z_next, t - 1)
        z = z_next

    return rec.build(z[0], mode, sampler, seed, cond, torch.long)
