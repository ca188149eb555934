from __future__ import division, print_function, absolute_import
import json
import hashlib
import os.path as osp
import torch

from .tools import mkdir_if_missing
from .errors import CheckpointError

__all__ = [
    'save_checkpoint', 'load_checkpoint', 'mlp_from_checkpoint',
    'count_num_param', 'params_digest', 'freeze_model'
]

CHECKPOINT_VERSION = 1
CHECKPOINT_KINDS = ['denoiser', 'velocity', 'scheduler']


def save_checkpoint(net, fpath, kind, meta=None):
    r"""Saves an :class:`MlpNet` as a JSON checkpoint.

    Floats are written with Python's shortest round-trip representation, so
    :func:`load_checkpoint` reproduces every parameter bit-exactly.

    Args:
        net (MlpNet): network to save.
        fpath (str): destination file.
        kind (str): "denoiser", "velocity" or "scheduler".
        meta (dict, optional): provenance (schedule, ring spec, train config ...).

    Examples::
        >>> save_checkpoint(dnet.net, 'log/ring/denoiser.json', 'denoiser',
        >>>                 meta={'T': 50})
    """
    if kind not in CHECKPOINT_KINDS:
        raise ValueError(
            'Unsupported checkpoint kind: {}. Must be one of {}'.format(
                kind, CHECKPOINT_KINDS
            )
        )
    state = {
        'version': CHECKPOINT_VERSION,
        'kind': kind,
        'layer_dims': list(net.layer_dims),
        'weights': [w.detach().reshape(-1).tolist() for w in net.weights],
        'biases': [b.detach().tolist() for b in net.biases],
        'output_squash': net.output_squash,
        'meta': meta or {},
    }
    mkdir_if_missing(osp.dirname(fpath))
    with open(fpath, 'w') as f:
        json.dump(state, f, sort_keys=True)
        f.write('\n')
    print('Checkpoint saved to "{}"'.format(fpath))
    return fpath


def load_checkpoint(fpath):
    r"""Loads and validates a JSON checkpoint.

    Args:
        fpath (str): path to checkpoint.

    Returns:
        dict

    Examples::
        >>> from guidancelab.utils import load_checkpoint
        >>> checkpoint = load_checkpoint('log/ring/denoiser.json')
    """
    if fpath is None:
        raise ValueError('File path is None')
    if not osp.exists(fpath):
        raise FileNotFoundError('File is not found at "{}"'.format(fpath))
    try:
        with open(fpath, 'r') as f:
            state = json.load(f)
    except ValueError as e:
        raise CheckpointError(
            'Unable to load checkpoint from "{}": {}'.format(fpath, e)
        )

    required = ['version', 'kind', 'layer_dims', 'weights', 'biases']
    missing = [k for k in required if k not in state]
    if missing:
        raise CheckpointError(
            'Checkpoint "{}" misses keys {}'.format(fpath, missing)
        )
    if state['version'] != CHECKPOINT_VERSION:
        raise CheckpointError(
            'Checkpoint "{}" has version {}, expected {}'.format(
                fpath, state['version'], CHECKPOINT_VERSION
            )
        )
    if state['kind'] not in CHECKPOINT_KINDS:
        raise CheckpointError(
            'Checkpoint "{}" has unknown kind "{}"'.format(
                fpath, state['kind']
            )
        )
    dims = state['layer_dims']
    n_layers = len(dims) - 1
    if len(state['weights']) != n_layers or len(state['biases']) != n_layers:
        raise CheckpointError(
            'Checkpoint "{}" has {} weight / {} bias entries for {} layers'.
            format(fpath, len(state['weights']), len(state['biases']), n_layers)
        )
    for i in range(n_layers):
        if len(state['weights'][i]) != dims[i + 1] * dims[i] \
           or len(state['biases'][i]) != dims[i + 1]:
            raise CheckpointError(
                'Checkpoint "{}": layer {} does not match layer_dims {}'.format(
                    fpath, i, dims
                )
            )
    state.setdefault('output_squash', 'none')
    state.setdefault('meta', {})
    return state


def mlp_from_checkpoint(state):
    """Builds the :class:`MlpNet` stored in a loaded checkpoint dict."""
    from guidancelab.nnkernel import MlpNet

    dims = state['layer_dims']
    net = MlpNet(dims, output_squash=state['output_squash'])
    with torch.no_grad():
        for i, (w, b) in enumerate(zip(state['weights'], state['biases'])):
            net.weights[i].copy_(
                torch.tensor(w, dtype=torch.float64).view(dims[i + 1], dims[i])
            )
            net.biases[i].copy_(torch.tensor(b, dtype=torch.float64))
    return net


def count_num_param(model):
    r"""Counts number of parameters in a model.

    Examples::
        >>> from guidancelab.utils import count_num_param
        >>> count_num_param(snet)  # 34817 for the default scheduler
    """
    return sum(p.numel() for p in model.parameters())


def params_digest(model):
    """Returns a sha256 hex digest over the bytes of every parameter.

    Used to assert that a frozen backbone stays bit-identical and to link a
    scheduler checkpoint to the backbone it was trained against.
    """
    h = hashlib.sha256()
    for p in model.parameters():
        h.update(p.detach().contiguous().numpy().tobytes())
    return h.hexdigest()


def freeze_model(model):
    r"""Excludes all parameters of ``model`` from gradient computation.

    Examples::
        >>> from guidancelab.utils import freeze_model
        >>> freeze_model(dnet)
    """
    model.eval()
    for p in model.parameters():
        p.requires_grad = False
    return model
