from __future__ import division, absolute_import
import math
from collections import namedtuple
import torch
import torch.nn as nn

from guidancelab.utils.errors import (
    ShapeError, InvalidTapeError, NumericInputError
)

__all__ = [
    'MlpNet', 'GradTape', 'ParamGrads', 'init_params', 'mlp_forward',
    'mlp_backward', 'accumulate_grads'
]

OUTPUT_SQUASHES = ['none', 'sigmoid']

# keeps the logistic output strictly inside (0, 1) in float64
_SIGMOID_LO = torch.finfo(torch.float64).tiny
_SIGMOID_HI = 1. - torch.finfo(torch.float64).eps / 2

ParamGrads = namedtuple('ParamGrads', ['weights', 'biases'])


class MlpNet(nn.Module):
    """Feed-forward network with rectified-linear hidden layers.

    Parameters are 64-bit ``nn.Parameter``s so any ``torch.optim`` optimizer
    can update them, but gradients come from :func:`mlp_backward`, not from
    autograd.

    Args:
        layer_dims (list): layer widths, input dim first, output dim last.
        output_squash (str, optional): "none" or "sigmoid". Default is "none".
    """

    def __init__(self, layer_dims, output_squash='none'):
        super(MlpNet, self).__init__()
        layer_dims = list(layer_dims)
        if len(layer_dims) < 2:
            raise ValueError(
                'layer_dims needs at least 2 entries, but got {}'.format(
                    layer_dims
                )
            )
        if any(int(d) != d or d <= 0 for d in layer_dims):
            raise ValueError(
                'layer_dims must be positive integers, but got {}'.format(
                    layer_dims
                )
            )
        if output_squash not in OUTPUT_SQUASHES:
            raise ValueError(
                'Unsupported output_squash: {}. Must be one of {}'.format(
                    output_squash, OUTPUT_SQUASHES
                )
            )
        self.layer_dims = [int(d) for d in layer_dims]
        self.output_squash = output_squash
        self.weights = nn.ParameterList(
            [
                nn.Parameter(torch.zeros(d_out, d_in, dtype=torch.float64))
                for d_in, d_out in zip(self.layer_dims[:-1], self.layer_dims[1:])
            ]
        )
        self.biases = nn.ParameterList(
            [
                nn.Parameter(torch.zeros(d_out, dtype=torch.float64))
                for d_out in self.layer_dims[1:]
            ]
        )

    @property
    def num_layers(self):
        return len(self.layer_dims) - 1

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]

    def forward(self, x):
        return mlp_forward(self, x)[0]

    def extra_repr(self):
        return 'layer_dims={}, output_squash={}'.format(
            self.layer_dims, self.output_squash
        )


class GradTape(object):
    """Activations recorded by one forward pass of an :class:`MlpNet`.

    Args:
        net (MlpNet): the network that produced the tape.
        inputs (torch.Tensor): inputs with shape (batch_size, in_dim).
        pre_acts (list): per-layer ``W a + b``.
        post_acts (list): per-layer outputs after the rectifier, or after the
            output squash for the last layer.
        squeezed (bool): the forward input was a single vector.
    """

    def __init__(self, net, inputs, pre_acts, post_acts, squeezed=False):
        self.net_id = id(net)
        self.layer_dims = list(net.layer_dims)
        self.inputs = inputs
        self.pre_acts = pre_acts
        self.post_acts = post_acts
        self.squeezed = squeezed

    def __len__(self):
        return len(self.pre_acts)

    @property
    def output(self):
        out = self.post_acts[-1]
        return out.squeeze(0) if self.squeezed else out

    def replay(self, net):
        """Re-runs the forward pass on the recorded inputs."""
        self._check(net)
        out, _ = mlp_forward(net, self.inputs)
        return out.squeeze(0) if self.squeezed else out

    def _check(self, net):
        if self.net_id != id(net) or self.layer_dims != net.layer_dims:
            raise InvalidTapeError(
                'Tape was recorded on a different net (dims {} vs {})'.format(
                    self.layer_dims, net.layer_dims
                )
            )
        if len(self.pre_acts) != net.num_layers \
           or len(self.post_acts) != net.num_layers:
            raise InvalidTapeError(
                'Tape holds {} layers, net has {}'.format(
                    len(self.pre_acts), net.num_layers
                )
            )


def init_params(layer_dims, seed, output_squash='none'):
    """Builds an :class:`MlpNet` with Kaiming-uniform weights and zero biases.

    Weights are drawn from U[-b, b] with ``b = gain * sqrt(3 / fan_in)`` and the
    rectifier gain sqrt(2), i.e. ``b = sqrt(6 / fan_in)``.

    Args:
        layer_dims (list): layer widths.
        seed (int): seed of the weight draw.
        output_squash (str, optional): "none" or "sigmoid".

    Examples::
        >>> net = init_params([12, 128, 128, 128, 1], seed=0)
        >>> count_num_param(net)
        34817
    """
    net = MlpNet(layer_dims, output_squash=output_squash)
    gen = torch.Generator()
    gen.manual_seed(int(seed) % (2**63))
    gain = nn.init.calculate_gain('relu')
    with torch.no_grad():
        for w in net.weights:
            fan_in = w.size(1)
            bound = gain * math.sqrt(3. / fan_in)
            w.uniform_(-bound, bound, generator=gen)
    return net


def mlp_forward(net, inputs):
    """Evaluates ``net`` and records a :class:`GradTape`.

    Args:
        net (MlpNet): network.
        inputs (torch.Tensor): shape (in_dim,) or (batch_size, in_dim).

    Returns:
        tuple: output with the leading shape of ``inputs`` and the tape.
    """
    x = torch.as_tensor(inputs, dtype=torch.float64)
    squeezed = x.dim() == 1
    if squeezed:
        x = x.unsqueeze(0)
    if x.dim() != 2 or x.size(1) != net.in_dim:
        raise ShapeError(
            'Expected input of width {}, but got shape {}'.format(
                net.in_dim, tuple(torch.as_tensor(inputs).shape)
            )
        )
    if not torch.isfinite(x).all():
        raise NumericInputError('Network input contains NaN or Inf')

    pre_acts, post_acts = [], []
    a = x
    last = net.num_layers - 1
    with torch.no_grad():
        for i, (w, b) in enumerate(zip(net.weights, net.biases)):
            h = torch.addmm(b, a, w.t())
            if i < last:
                a = torch.relu(h)
            elif net.output_squash == 'sigmoid':
                a = torch.sigmoid(h).clamp(_SIGMOID_LO, _SIGMOID_HI)
            else:
                a = h
            pre_acts.append(h)
            post_acts.append(a)

    tape = GradTape(net, x, pre_acts, post_acts, squeezed=squeezed)
    return tape.output, tape


def mlp_backward(net, tape, output_grad):
    """Reverse pass through a recorded forward pass.

    Args:
        net (MlpNet): the network the tape was recorded on.
        tape (GradTape): tape returned by :func:`mlp_forward`.
        output_grad (torch.Tensor): cotangent of the output, same shape as the
            forward output.

    Returns:
        tuple: ``ParamGrads`` summed over the batch, and the input gradient
        ``d(output_grad . output) / d input`` with the shape of the inputs.
    """
    if not isinstance(tape, GradTape):
        raise InvalidTapeError(
            'Expected a GradTape, but got {}'.format(type(tape))
        )
    tape._check(net)
    g = torch.as_tensor(output_grad, dtype=torch.float64)
    if tape.squeezed and g.dim() == 1:
        g = g.unsqueeze(0)
    if g.shape != tape.post_acts[-1].shape:
        raise ShapeError(
            'Expected output_grad of shape {}, but got {}'.format(
                tuple(tape.output.shape), tuple(output_grad.shape)
            )
        )

    grad_w = [None] * net.num_layers
    grad_b = [None] * net.num_layers
    with torch.no_grad():
        if net.output_squash == 'sigmoid':
            s = tape.post_acts[-1]
            g = g * s * (1. - s)
        for i in reversed(range(net.num_layers)):
            a_prev = tape.inputs if i == 0 else tape.post_acts[i - 1]
            grad_w[i] = g.t().mm(a_prev)
            grad_b[i] = g.sum(0)
            g = g.mm(net.weights[i])
            if i > 0:
                g = g * (tape.pre_acts[i - 1] > 0).to(g.dtype)

    input_grad = g.squeeze(0) if tape.squeezed else g
    return ParamGrads(grad_w, grad_b), input_grad


def accumulate_grads(total, grads):
    """Sums two ``ParamGrads``; ``total`` may be None."""
    if total is None:
        return ParamGrads(
            [g.clone() for g in grads.weights], [g.clone() for g in grads.biases]
        )
    return ParamGrads(
        [a + b for a, b in zip(total.weights, grads.weights)],
        [a + b for a, b in zip(total.biases, grads.biases)]
    )
