from __future__ import absolute_import

from .toy import (
    EvalReport, adherence_rate, build_report, coverage, endpoint_angles,
    on_manifold_rate
)
from .heatmaps import (
    Heatmap, annulus_argmin, default_w_grids, delta_norm_heatmap, w_heatmap
)
