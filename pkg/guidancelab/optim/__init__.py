from __future__ import absolute_import

from .optimizer import build_optimizer, adamw_step, optimizer_step_count
