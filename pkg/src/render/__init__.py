# Volume rendering and ray sampling
from src.render.pixel import (
    FALLBACK_OPACITY,
    TwoPassInfo,
    query_along_rays,
    render_image,
    render_pixel_test_time,
    render_rays,
    render_two_pass,
)
from src.render.sampling import (
    depth_guided_sample,
    gaussian_samples,
    make_strictly_ascending,
    merge_samples,
    stratified_sample,
)
from src.render.volume import RenderResult, composite, interval_lengths

__all__ = [
    "FALLBACK_OPACITY",
    "RenderResult",
    "TwoPassInfo",
    "composite",
    "depth_guided_sample",
    "gaussian_samples",
    "interval_lengths",
    "make_strictly_ascending",
    "merge_samples",
    "query_along_rays",
    "render_image",
    "render_pixel_test_time",
    "render_rays",
    "render_two_pass",
    "stratified_sample",
]
