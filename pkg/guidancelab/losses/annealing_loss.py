from __future__ import division, absolute_import
from collections import namedtuple
import torch

from guidancelab.data import embed_conditions
from guidancelab.diffusion import add_noise
from guidancelab.guidance import (
    PerturbConfig, cfg_combine, guidance_pair, perturb_condition
)
from guidancelab.nnkernel import mlp_backward

__all__ = [
    'AnnealingBatch', 'FlowBatch', 'LossResult', 'AnnealingLoss',
    'FlowAnnealingLoss'
]

DELTA_EVAL_TIMESTEPS = ['prev', 'same']
FLOW_EPS_TARGETS = ['guided', 'conditional']

# per-sample draws of one scheduler training step
AnnealingBatch = namedtuple(
    'AnnealingBatch', ['z0', 'cond', 't', 'eps', 'lam', 'c_emb']
)
FlowBatch = namedtuple(
    'FlowBatch', ['x0', 'x1', 'cond', 't', 'lam', 'c_emb']
)
LossResult = namedtuple(
    'LossResult',
    ['combined', 'loss_delta', 'loss_eps', 'grads', 'diagnostics']
)


def _draw_lambda(n, generator, lambda_fixed):
    lam = torch.rand((n, ), generator=generator, dtype=torch.float64)
    if lambda_fixed is not None:
        lam = torch.full_like(lam, float(lambda_fixed))
    return lam


def _input_grad(net, tape, out_grad):
    # only the point coordinates lead back to the scheduler
    return mlp_backward(net, tape, out_grad)[1][:, :2]


def _diverged(diagnostics):
    # the engines turn a non-finite loss into TrainingFailure
    nan = float('nan')
    return LossResult(nan, nan, nan, None, diagnostics)


def _result(snet, lam, ld, le, dldw, stape, need_grad, diagnostics):
    n = lam.numel()
    combined = (lam * ld + (1. - lam) * le).sum() / n
    grads = None
    if need_grad:
        grads, _ = mlp_backward(snet.net, stape, dldw.unsqueeze(1))
    return LossResult(
        combined.item(),
        ld.mean().item(),
        le.mean().item(), grads, diagnostics
    )


class AnnealingLoss(object):
    r"""Combined delta / epsilon objective of the guidance-scale scheduler.

    For every sample, one guided denoise/renoise step is taken from ``z_t``
    with the scale ``w`` predicted by the scheduler, and

    .. math::
        L = \lambda \lVert \delta_{t-1} \rVert^2
            + (1 - \lambda) \lVert \epsilon - \hat{\epsilon} \rVert^2

    where ``delta_{t-1}`` is the conditional/unconditional gap of the frozen
    denoiser at the renoised state. The gradient reaches the scheduler through
    ``w`` and through the input gradient of the frozen denoiser at
    ``z_{t-1}``; the denoiser itself never receives gradients.

    Args:
        dnet (DenoiserNet): frozen noise predictor.
        sched (NoiseSchedule): schedule ``dnet`` was trained with.
        perturb (PerturbConfig, optional): condition corruption.
        lambda_fixed (float, optional): use this lambda instead of U[0, 1].
        delta_eval_timestep (str, optional): timestep of the second denoiser
            call, "prev" (t - 1, clamped to 1) or "same" (t). Default is "prev".
    """

    def __init__(
        self,
        dnet,
        sched,
        perturb=None,
        lambda_fixed=None,
        delta_eval_timestep='prev'
    ):
        if delta_eval_timestep not in DELTA_EVAL_TIMESTEPS:
            raise ValueError(
                'Unsupported delta_eval_timestep: {}. Must be one of {}'.format(
                    delta_eval_timestep, DELTA_EVAL_TIMESTEPS
                )
            )
        if lambda_fixed is not None and not 0 <= lambda_fixed <= 1:
            raise ValueError(
                'lambda_fixed must lie in [0, 1], but got {}'.format(
                    lambda_fixed
                )
            )
        self.dnet = dnet
        self.sched = sched
        self.perturb = perturb if perturb is not None else PerturbConfig()
        self.lambda_fixed = lambda_fixed
        self.delta_eval_timestep = delta_eval_timestep

    def sample_inputs(self, z0, conds, generator, use_perturbation=True):
        """Draws t, eps, lambda and the perturbed condition for a data batch."""
        z0 = torch.as_tensor(z0, dtype=torch.float64)
        n = z0.size(0)
        if n < 1:
            raise ValueError('Scheduler training needs a non-empty batch')
        t = torch.randint(
            1, self.sched.T + 1, (n, ), generator=generator
        )
        eps = torch.randn((n, 2), generator=generator, dtype=torch.float64)
        lam = _draw_lambda(n, generator, self.lambda_fixed)
        c_emb = embed_conditions(conds)
        if use_perturbation:
            c_emb = perturb_condition(
                c_emb, t, self.perturb, generator, self.sched.T
            )
        return AnnealingBatch(z0, conds, t, eps, lam, c_emb)

    def compute(self, snet, batch, through_backbone=True, need_grad=True):
        """Evaluates the loss and its gradient w.r.t. the scheduler parameters.

        Args:
            snet (SchedulerNet): scheduler being trained.
            batch (AnnealingBatch): draws from :meth:`sample_inputs`.
            through_backbone (bool, optional): differentiate the second
                denoiser call w.r.t. its input. Disabling this path is only
                meaningful for tests. Default is True.
            need_grad (bool, optional): run the reverse pass. Default is True.

        Returns:
            LossResult: batch-mean losses and ``ParamGrads`` of ``snet.net``.
        """
        sched = self.sched
        t, lam = batch.t, batch.lam
        n = t.numel()
        z_t = add_noise(batch.z0, t, batch.eps, sched)

        eps_c, _, eps_null, _ = guidance_pair(self.dnet, z_t, t, batch.c_emb)
        delta = eps_c - eps_null
        delta_norm = delta.norm(dim=1)
        w, stape = snet.forward_normalized(
            t.to(torch.float64) / sched.T, delta_norm, lam
        )
        if not torch.isfinite(w).all():
            return _diverged({'t': t, 'delta_norm': delta_norm, 'w': w})
        eps_hat = cfg_combine(eps_null, eps_c, w)

        a_t = sched.sqrt_alpha_bars[t].unsqueeze(1)
        s_t = sched.sqrt_one_minus_alpha_bars[t].unsqueeze(1)
        a_prev = sched.sqrt_alpha_bars[t - 1].unsqueeze(1)
        s_prev = sched.sqrt_one_minus_alpha_bars[t - 1].unsqueeze(1)
        z0_est = (z_t - s_t * eps_hat) / a_t
        renoise_null = snet.ablation.use_cfgpp_renoise
        source = eps_null if renoise_null else eps_hat
        z_prev = a_prev * z0_est + s_prev * source

        if self.delta_eval_timestep == 'prev':
            t_eval = (t - 1).clamp(min=1)
        else:
            t_eval = t
        eps_c2, tape_c2, eps_null2, tape_null2 = guidance_pair(
            self.dnet, z_prev, t_eval, batch.c_emb
        )
        delta_prev = eps_c2 - eps_null2

        loss_delta = delta_prev.pow(2).sum(1)
        resid = batch.eps - eps_hat
        loss_eps = resid.pow(2).sum(1)

        dldw = None
        if need_grad:
            # d z_prev / d w, one scalar per row times delta
            coef = -a_prev * s_t / a_t
            if not renoise_null:
                coef = coef + s_prev
            dz_dw = coef * delta
            if through_backbone:
                g_out = 2. * delta_prev * (lam / n).unsqueeze(1)
                g_z = _input_grad(self.dnet.net, tape_c2, g_out) \
                    - _input_grad(self.dnet.net, tape_null2, g_out)
            else:
                g_z = torch.zeros_like(z_prev)
            dldw = (g_z * dz_dw).sum(1) \
                + ((1. - lam) / n) * (-2. * resid * delta).sum(1)

        diagnostics = {'t': t, 'delta_norm': delta_norm, 'w': w}
        return _result(
            snet, lam, loss_delta, loss_eps, dldw, stape, need_grad,
            diagnostics
        )


class FlowAnnealingLoss(object):
    r"""Velocity-field analog of :class:`AnnealingLoss`.

    From ``x(t) = x0 + t (x1 - x0)`` one guided Euler step of length ``dt``
    is taken and

    .. math::
        L = \lambda \lVert \delta_{t+dt} \rVert^2
            + (1 - \lambda) \lVert \hat{v} - (x_1 - x_0) \rVert^2

    With ``eps_target="conditional"`` the second term uses the raw
    conditional velocity instead of the guided one and is constant in the
    scheduler parameters.

    Args:
        vnet (VelocityNet): frozen velocity field.
        steps_per_unit (int, optional): integration steps on [0, 1], so
            ``dt = 1 / steps_per_unit``. Default is 50.
        perturb (PerturbConfig, optional): condition corruption.
        lambda_fixed (float, optional): use this lambda instead of U[0, 1].
        eps_target (str, optional): "guided" or "conditional".
    """

    def __init__(
        self,
        vnet,
        steps_per_unit=50,
        perturb=None,
        lambda_fixed=None,
        eps_target='guided'
    ):
        if int(steps_per_unit) != steps_per_unit or steps_per_unit < 2:
            raise ValueError(
                'steps_per_unit must be an integer >= 2, but got {}'.format(
                    steps_per_unit
                )
            )
        if eps_target not in FLOW_EPS_TARGETS:
            raise ValueError(
                'Unsupported flow_eps_target: {}. Must be one of {}'.format(
                    eps_target, FLOW_EPS_TARGETS
                )
            )
        if lambda_fixed is not None and not 0 <= lambda_fixed <= 1:
            raise ValueError(
                'lambda_fixed must lie in [0, 1], but got {}'.format(
                    lambda_fixed
                )
            )
        self.vnet = vnet
        self.steps_per_unit = int(steps_per_unit)
        self.dt = 1. / self.steps_per_unit
        self.perturb = perturb if perturb is not None else PerturbConfig()
        self.lambda_fixed = lambda_fixed
        self.eps_target = eps_target

    def sample_inputs(self, x1, conds, generator, use_perturbation=True):
        """Draws x0, t in [0, 1 - dt], lambda and the perturbed condition."""
        x1 = torch.as_tensor(x1, dtype=torch.float64)
        n = x1.size(0)
        if n < 1:
            raise ValueError('Scheduler training needs a non-empty batch')
        x0 = torch.randn((n, 2), generator=generator, dtype=torch.float64)
        t = torch.rand(
            (n, ), generator=generator, dtype=torch.float64
        ) * (1. - self.dt)
        lam = _draw_lambda(n, generator, self.lambda_fixed)
        c_emb = embed_conditions(conds)
        if use_perturbation:
            # flow time runs towards the data, so the noise level is 1 - t
            c_emb = perturb_condition(
                c_emb, 1. - t, self.perturb, generator, 1.
            )
        return FlowBatch(x0, x1, conds, t, lam, c_emb)

    def compute(self, snet, batch, through_backbone=True, need_grad=True):
        t, lam = batch.t, batch.lam
        n = t.numel()
        dt = self.dt
        target = batch.x1 - batch.x0
        x_t = batch.x0 + t.unsqueeze(1) * target

        v_c, _, v_null, _ = guidance_pair(self.vnet, x_t, t, batch.c_emb)
        delta = v_c - v_null
        delta_norm = delta.norm(dim=1)
        w, stape = snet.forward_normalized(1. - t, delta_norm, lam)
        if not torch.isfinite(w).all():
            return _diverged({'t': t, 'delta_norm': delta_norm, 'w': w})
        v_hat = cfg_combine(v_null, v_c, w)
        x_next = x_t + dt * v_hat
        t_next = (t + dt).clamp(max=1.)

        v_c2, tape_c2, v_null2, tape_null2 = guidance_pair(
            self.vnet, x_next, t_next, batch.c_emb
        )
        delta_next = v_c2 - v_null2

        guided = self.eps_target == 'guided'
        loss_delta = delta_next.pow(2).sum(1)
        resid = (v_hat if guided else v_c) - target
        loss_eps = resid.pow(2).sum(1)

        dldw = None
        if need_grad:
            if through_backbone:
                g_out = 2. * delta_next * (lam / n).unsqueeze(1)
                g_x = _input_grad(self.vnet.net, tape_c2, g_out) \
                    - _input_grad(self.vnet.net, tape_null2, g_out)
            else:
                g_x = torch.zeros_like(x_next)
            dldw = (g_x * dt * delta).sum(1)
            if guided:
                dldw = dldw + ((1. - lam) / n) * (2. * resid * delta).sum(1)

        diagnostics = {'t': t, 'delta_norm': delta_norm, 'w': w}
        return _result(
            snet, lam, loss_delta, loss_eps, dldw, stape, need_grad,
            diagnostics
        )
