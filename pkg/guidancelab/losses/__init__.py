from __future__ import absolute_import

from .denoising_loss import DenoisingLoss
from .annealing_loss import (
    AnnealingBatch, FlowBatch, AnnealingLoss, FlowAnnealingLoss, LossResult
)
