from __future__ import division, absolute_import
import torch

from guidancelab.data import embed_condition, wrap_angle
from guidancelab.utils import make_generator

from .combine import cfg_combine, guidance_pair
from .sampling import _Recorder, check_state

__all__ = ['flow_guided_sample']


def flow_guided_sample(vnet, mode, cond, steps, seed, x_init=None):
    """Guided Euler integration of dx/dt = v(x, t, c) from t = 0 to t = 1.

    The guided velocity is ``v_null + w (v_c - v_null)``. In annealing mode
    the scheduler sees the remaining time ``1 - t`` as its normalized
    timestep, so that 1 means pure noise as in diffusion.

    Args:
        vnet (VelocityNet): frozen velocity field.
        mode (GuidanceMode): guidance rule (the renoise source is irrelevant).
        cond (float): target angle.
        steps (int): number of Euler steps.
        seed (int): seed of x(0) ~ N(0, I).
        x_init (torch.Tensor, optional): fixed start point instead of a draw.

    Returns:
        Trajectory: ``ts`` holds the continuous time of every record.
    """
    if int(steps) != steps or steps < 1:
        raise ValueError('steps must be a positive integer, but got {}'.format(steps))
    if cond is None:
        raise ValueError('Guided sampling needs a non-null condition')
    steps = int(steps)
    cond = wrap_angle(cond).item()
    c_emb = embed_condition(cond)
    if x_init is None:
        gen = make_generator(seed)
        x = torch.randn((1, 2), generator=gen, dtype=torch.float64)
    else:
        x = torch.as_tensor(x_init, dtype=torch.float64).reshape(1, 2).clone()
    dt = 1. / steps
    rec = _Recorder()

    for k in range(steps):
        t = k * dt
        v_c, _, v_null, _ = guidance_pair(vnet, x, t, c_emb)
        delta = (v_c - v_null)[0]
        w = mode.scale(1. - t, delta.norm())
        v_hat = cfg_combine(v_null, v_c, w)
        x_next = x + dt * v_hat
        rec.add(t, x[0], w, delta, v_c[0], v_null[0])
        check_state(x_next, t + dt)
        x = x_next

    return rec.build(x[0], mode, 'flow-euler', seed, cond, torch.float64)
