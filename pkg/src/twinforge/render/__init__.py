from twinforge.render.gradient import l1_loss, render_with_pose_gradient
from twinforge.render.projection import Projected2D, RenderOptions, cull_frustum, project_gaussian
from twinforge.render.raster import RenderOutput, rasterize

__all__ = [
    "Projected2D",
    "RenderOptions",
    "RenderOutput",
    "cull_frustum",
    "l1_loss",
    "project_gaussian",
    "rasterize",
    "render_with_pose_gradient",
]
