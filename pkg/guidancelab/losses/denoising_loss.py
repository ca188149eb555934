from __future__ import division, absolute_import
import torch
import torch.nn as nn

__all__ = ['DenoisingLoss']


class DenoisingLoss(nn.Module):
    r"""Mean squared regression loss of a backbone prediction.

    .. math::
        L = \frac{1}{n} \sum_i \lVert \hat{y}_i - y_i \rVert^2

    The noise predictor regresses the drawn noise, the velocity net regresses
    the displacement ``x1 - x0``. Since backbones are trained through the
    hand-written tape, the loss also returns its gradient w.r.t. the
    prediction.
    """

    def forward(self, pred, target):
        """
        Args:
            pred (torch.Tensor): predictions with shape (batch_size, 2).
            target (torch.Tensor): regression targets, same shape.

        Returns:
            tuple: scalar loss and ``dL / dpred``.
        """
        if pred.shape != target.shape:
            raise ValueError(
                'Prediction shape {} does not match target shape {}'.format(
                    tuple(pred.shape), tuple(target.shape)
                )
            )
        n = pred.size(0)
        diff = pred - target
        loss = diff.pow(2).sum() / n
        return loss, 2. * diff / n
