"""Single-image dehazing: sky segmentation, dark-channel restoration, a sky network and quality metrics."""

from ._skydehaze import (
    Network,
    augment_count,
    average_gradient,
    dark_channel,
    dehaze,
    dehaze_dcp,
    entropy,
    evaluate,
    extract_sky_mask,
    guided_filter,
    saturated_pixel_pct,
    synthesize_haze,
    visible_edge_ratio,
)

__all__ = [
    "Network",
    "augment_count",
    "average_gradient",
    "dark_channel",
    "dehaze",
    "dehaze_dcp",
    "entropy",
    "evaluate",
    "extract_sky_mask",
    "guided_filter",
    "saturated_pixel_pct",
    "synthesize_haze",
    "visible_edge_ratio",
]
