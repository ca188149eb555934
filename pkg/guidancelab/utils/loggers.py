from __future__ import absolute_import
import os
import sys
import os.path as osp

from .tools import mkdir_if_missing

__all__ = ['Logger', 'SweepLogger']


class Logger(object):
    """Writes console output to external text file.

    Args:
        fpath (str): path to the log file.

    Examples::
       >>> import sys
       >>> import os.path as osp
       >>> from guidancelab.utils import Logger
       >>> sys.stdout = Logger(osp.join('log/ring-denoiser', 'train.log'))
    """

    def __init__(self, fpath=None):
        self.console = sys.stdout
        self.file = None
        if fpath is not None:
            mkdir_if_missing(osp.dirname(fpath))
            self.file = open(fpath, 'w')

    def __del__(self):
        self.close()

    def __enter__(self):
        return self

    def __exit__(self, *args):
        self.close()

    def write(self, msg):
        self.console.write(msg)
        if self.file is not None:
            self.file.write(msg)

    def flush(self):
        self.console.flush()
        if self.file is not None:
            self.file.flush()
            os.fsync(self.file.fileno())

    def close(self):
        # the console belongs to the interpreter, only the file is ours
        if self.file is not None:
            self.file.close()
            self.file = None


class SweepLogger(object):
    """Records the evaluation result of every sweep variant and prints a
    compact summary table at the end of a sweep.

    Examples::
        >>> from guidancelab.utils import SweepLogger
        >>> sweeplogger = SweepLogger()
        >>> sweeplogger.write('full', adherence=0.62, on_manifold=0.97)
        >>> sweeplogger.write('w/o t', error='Non-finite loss at step 12')
        >>> sweeplogger.show_summary()
        >>> # => Show sweep summary
        >>> # full        adherence 62.0%   on-manifold 97.0%
        >>> # w/o t       FAILED (Non-finite loss at step 12)
    """

    def __init__(self):
        self.names = []
        self.results = {}

    def write(self, name, adherence=None, on_manifold=None, error=''):
        if name not in self.results:
            self.names.append(name)
        self.results[name] = {
            'adherence': adherence,
            'on_manifold': on_manifold,
            'error': error
        }

    def show_summary(self):
        print('=> Show sweep summary')
        width = max([len(n) for n in self.names] + [8]) + 2
        for name in self.names:
            res = self.results[name]
            if res['error']:
                print('{:<{w}}FAILED ({})'.format(name, res['error'], w=width))
            else:
                print(
                    '{:<{w}}adherence {:.1%}\ton-manifold {:.1%}'.format(
                        name, res['adherence'], res['on_manifold'], w=width
                    )
                )
