from __future__ import division, print_function, absolute_import
import math
import time
import datetime

from guidancelab.utils import AverageMeter, MetricMeter, TrainingFailure


class Engine(object):
    r"""A generic step-based training loop for the networks of the lab.

    Subclasses implement :meth:`forward_backward`, which consumes one
    optimization step and returns a dict of scalar losses. They call
    :meth:`check_finite` before updating, so a non-finite loss raises
    :class:`TrainingFailure` with the parameters untouched.

    Args:
        datamanager (RingDataManager): source of (point, angle) minibatches.
        model (nn.Module): model being trained.
        optimizer (Optimizer): optimizer built on the trainable network.
    """

    # default key of the history summaries
    loss_key = 'loss'

    def __init__(self, datamanager, model, optimizer):
        self.datamanager = datamanager
        self.model = model
        self.optimizer = optimizer
        self.writer = None
        self.step = 0
        self.max_steps = 0
        self.history = []

    def get_current_lr(self):
        return self.optimizer.param_groups[-1]['lr']

    def check_finite(self, value, diagnostics=None):
        """Raises :class:`TrainingFailure` unless ``value`` is finite."""
        if not math.isfinite(value):
            raise TrainingFailure(self.step, diagnostics)

    def run(self, max_steps=0, print_freq=100, save_dir=None, window=100):
        r"""Runs ``max_steps`` optimization steps.

        Args:
            max_steps (int): number of optimizer updates. 0 leaves the model
                untouched.
            print_freq (int, optional): print frequency. Default is 100.
            save_dir (str, optional): if given, TensorBoard scalars are written
                there. Default is None.
            window (int, optional): length of the trailing loss average shown
                in the log. Default is 100.

        Returns:
            list: one loss dict per step.
        """
        if max_steps < 0:
            raise ValueError(
                'max_steps must be >= 0, but got {}'.format(max_steps)
            )
        self.max_steps = int(max_steps)
        if self.max_steps == 0:
            return self.history

        if save_dir and self.writer is None:
            from torch.utils.tensorboard import SummaryWriter
            self.writer = SummaryWriter(log_dir=save_dir)

        losses = MetricMeter(window=window)
        batch_time = AverageMeter(window=window)
        time_start = time.time()
        end = time_start
        print('=> Start training')
        self.model.train()
        for self.step in range(self.max_steps):
            loss_summary = self.forward_backward()
            batch_time.update(time.time() - end)
            losses.update(loss_summary)
            self.history.append(loss_summary)

            if (self.step + 1) % print_freq == 0 \
               or (self.step + 1) == self.max_steps:
                eta_seconds = batch_time.avg * (self.max_steps - self.step - 1)
                eta_str = str(datetime.timedelta(seconds=int(eta_seconds)))
                print(
                    'step: [{0}/{1}]\t'
                    'time {batch_time.val:.3f} ({batch_time.avg:.3f})\t'
                    'eta {eta}\t'
                    '{losses}\t'
                    'lr {lr:.6f}'.format(
                        self.step + 1,
                        self.max_steps,
                        batch_time=batch_time,
                        eta=eta_str,
                        losses=losses,
                        lr=self.get_current_lr()
                    )
                )

            if self.writer is not None:
                for name, meter in losses.meters.items():
                    self.writer.add_scalar('Train/' + name, meter.val, self.step)
                self.writer.add_scalar(
                    'Train/lr', self.get_current_lr(), self.step
                )

            end = time.time()

        self.model.eval()
        elapsed = round(time.time() - time_start)
        elapsed = str(datetime.timedelta(seconds=elapsed))
        print('Elapsed {}'.format(elapsed))
        if self.writer is not None:
            self.writer.close()
            self.writer = None
        return self.history

    def forward_backward(self):
        raise NotImplementedError

    def mean_loss(self, first=None, last=None, key=None):
        """Mean of a logged loss over the first or last steps of the history."""
        key = key or self.loss_key
        values = [h[key] for h in self.history]
        if first is not None:
            values = values[:first]
        if last is not None:
            values = values[-last:]
        if not values:
            raise ValueError('No training history recorded')
        return sum(values) / len(values)
