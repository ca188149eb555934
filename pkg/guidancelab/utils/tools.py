from __future__ import division, print_function, absolute_import
import os
import json
import errno
import random
import os.path as osp
import warnings
import numpy as np
import torch

__all__ = [
    'mkdir_if_missing', 'check_isfile', 'read_json', 'write_json',
    'set_random_seed', 'make_generator', 'worker_count', 'collect_env_info'
]

THREADS_ENV = 'GUIDANCE_LAB_THREADS'


def mkdir_if_missing(dirname):
    """Creates dirname if it is missing."""
    if dirname and not osp.exists(dirname):
        try:
            os.makedirs(dirname)
        except OSError as e:
            if e.errno != errno.EEXIST:
                raise


def check_isfile(fpath):
    """Checks if the given path is a file.

    Args:
        fpath (str): file path.

    Returns:
       bool
    """
    isfile = osp.isfile(fpath)
    if not isfile:
        warnings.warn('No file found at "{}"'.format(fpath))
    return isfile


def read_json(fpath):
    """Reads json file from a path."""
    if not osp.isfile(fpath):
        raise FileNotFoundError('File is not found at "{}"'.format(fpath))
    with open(fpath, 'r') as f:
        obj = json.load(f)
    return obj


def write_json(obj, fpath):
    """Writes to a json file.

    Keys are sorted so that identical objects always produce identical bytes.
    """
    mkdir_if_missing(osp.dirname(fpath))
    with open(fpath, 'w') as f:
        json.dump(obj, f, indent=4, separators=(',', ': '), sort_keys=True)
        f.write('\n')


def set_random_seed(seed):
    random.seed(seed)
    np.random.seed(seed % (2**32))
    torch.manual_seed(seed)


def make_generator(seed):
    """Returns a CPU ``torch.Generator`` seeded with ``seed``.

    Every stochastic routine of the package draws from an explicit generator,
    so results only depend on the seeds handed around, never on global state.
    """
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen


def worker_count(requested=None):
    """Number of workers for per-trajectory fan-out.

    ``GUIDANCE_LAB_THREADS`` caps the count; without it the cpu count is used.
    """
    n = os.cpu_count() or 1
    if requested is not None and requested > 0:
        n = min(n, int(requested))
    cap = os.environ.get(THREADS_ENV, '').strip()
    if cap:
        try:
            cap = int(cap)
        except ValueError:
            raise ValueError(
                '{} must be an integer, but got "{}"'.format(THREADS_ENV, cap)
            )
        if cap < 1:
            raise ValueError(
                '{} must be positive, but got {}'.format(THREADS_ENV, cap)
            )
        n = min(n, cap)
    return max(n, 1)


def collect_env_info():
    """Returns env info as a string.

    Code source: github.com/facebookresearch/maskrcnn-benchmark
    """
    from torch.utils.collect_env import get_pretty_env_info
    env_str = get_pretty_env_info()
    env_str += '\n        numpy ({})'.format(np.__version__)
    return env_str
