from __future__ import division, print_function, absolute_import
import torch

from guidancelab.utils import make_generator

from .ring import RingSpec, make_dataset

__all__ = ['RingDataManager']


class RingDataManager(object):
    r"""Holds a generated ring dataset and serves random minibatches.

    Args:
        spec (RingSpec, optional): ring parameters. Default is ``RingSpec()``.
        num_samples (int, optional): dataset size. Default is 100000.
        batch_size (int, optional): minibatch size. Default is 256.
        seed (int, optional): seed of both the dataset and the batch stream.

    Examples::
        >>> datamanager = RingDataManager(num_samples=10000, batch_size=128)
        >>> z0, c = datamanager.next_batch()
    """

    def __init__(self, spec=None, num_samples=100000, batch_size=256, seed=0):
        self.spec = spec if spec is not None else RingSpec()
        if batch_size < 1:
            raise ValueError(
                'batch_size must be >= 1, but got {}'.format(batch_size)
            )
        self.num_samples = int(num_samples)
        self.batch_size = int(batch_size)
        self.seed = seed
        self.points, self.conds = make_dataset(num_samples, self.spec, seed)
        # batch stream is decoupled from the dataset draw
        self.generator = make_generator(seed + 1)

    def next_batch(self, batch_size=None):
        """Samples a minibatch with replacement.

        Returns:
            tuple: points (batch_size, 2) and angles (batch_size,).
        """
        n = self.batch_size if batch_size is None else int(batch_size)
        idx = torch.randint(
            0, self.num_samples, (n, ), generator=self.generator
        )
        return self.points[idx], self.conds[idx]

    def show_summary(self):
        radius = self.points.norm(dim=1)
        print('=> Loaded ring dataset')
        print('  ----------------------------------------')
        print('  # samples     : {}'.format(self.num_samples))
        print('  # batch size  : {}'.format(self.batch_size))
        print('  mean radius   : {:.4f}'.format(radius.mean().item()))
        print('  spec          : {}'.format(self.spec))
        print('  ----------------------------------------')
