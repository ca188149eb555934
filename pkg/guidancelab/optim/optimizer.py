from __future__ import print_function, absolute_import
import torch
import torch.nn as nn

from guidancelab.utils.errors import NumericDivergenceError, ShapeError

__all__ = ['build_optimizer', 'adamw_step', 'optimizer_step_count']

AVAI_OPTIMS = ['adamw']


def build_optimizer(
    model,
    optim='adamw',
    lr=1e-3,
    weight_decay=0.01,
    adam_beta1=0.9,
    adam_beta2=0.999,
    adam_eps=1e-8
):
    """A function wrapper for building an optimizer.

    Args:
        model (nn.Module): model whose parameters are optimized.
        optim (str, optional): optimizer. Default is "adamw".
        lr (float, optional): learning rate. Default is 1e-3.
        weight_decay (float, optional): decoupled weight decay. Default is 0.01.
        adam_beta1 (float, optional): beta-1 value in adam. Default is 0.9.
        adam_beta2 (float, optional): beta-2 value in adam. Default is 0.999.
        adam_eps (float, optional): term added to the denominator. Default is 1e-8.

    Examples::
        >>> optimizer = guidancelab.optim.build_optimizer(snet, lr=1e-3)
    """
    if optim not in AVAI_OPTIMS:
        raise ValueError(
            'Unsupported optim: {}. Must be one of {}'.format(
                optim, AVAI_OPTIMS
            )
        )

    if not isinstance(model, nn.Module):
        raise TypeError(
            'model given to build_optimizer must be an instance of nn.Module'
        )

    param_groups = [p for p in model.parameters() if p.requires_grad]
    if not param_groups:
        raise ValueError('model has no trainable parameters (is it frozen?)')

    return torch.optim.AdamW(
        param_groups,
        lr=lr,
        weight_decay=weight_decay,
        betas=(adam_beta1, adam_beta2),
        eps=adam_eps,
    )


def adamw_step(net, param_grads, optimizer):
    """Applies one optimizer update with gradients from :func:`mlp_backward`.

    The gradients are written into ``.grad`` of the matching parameters and
    ``optimizer.step()`` is called. With AdamW this is the decoupled update
    ``p <- p - lr * wd * p`` followed by the bias-corrected Adam step.

    Args:
        net (MlpNet): network being optimized.
        param_grads (ParamGrads): gradients shaped like the parameters.
        optimizer (torch.optim.Optimizer): optimizer built on ``net``.

    Returns:
        int: the optimizer step count after the update.
    """
    params = list(net.weights) + list(net.biases)
    grads = list(param_grads.weights) + list(param_grads.biases)
    if len(params) != len(grads):
        raise ShapeError(
            'Got {} gradients for {} parameters'.format(len(grads), len(params))
        )
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.shape:
            raise ShapeError(
                'Gradient {} has shape {}, parameter has {}'.format(
                    i, tuple(g.shape), tuple(p.shape)
                )
            )
        if not torch.isfinite(g).all():
            raise NumericDivergenceError(
                'Gradient {} contains NaN or Inf'.format(i)
            )

    for p, g in zip(params, grads):
        p.grad = g.detach().clone()
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)
    return optimizer_step_count(optimizer)


def optimizer_step_count(optimizer):
    """Number of updates the optimizer has applied so far."""
    counts = [
        int(state['step'])
        for state in optimizer.state.values()
        if 'step' in state
    ]
    return max(counts) if counts else 0
