"""Differentiable voxel projections, multi-view reconstruction, and shape-set metrics."""

from .core import (
    BadMagicError,
    OutOfRangeError,
    ProjectionConfig,
    TruncatedPayloadError,
    Viewpoint,
    ViewpointSet,
    VoxelGrid,
    VoxgFormatError,
    read_grid,
    read_image_pgm,
    write_grid,
    write_image_pgm,
)
from .dataset import (
    DatasetManifest,
    ManifestEntry,
    ObjParseError,
    TriangleMesh,
    annotate_viewpoint,
    build_dataset,
    load_obj,
    read_manifest,
    render_views,
    voxelize,
    write_manifest,
)
from .metrics import align_best_rotation, binarize, chamfer_iou, hamming_mean, iou, mmd
from .projection import (
    accessibility,
    grad_check,
    project,
    project_depth,
    project_semantic,
    project_silhouette,
    project_vjp,
    rotate_grid,
    rotate_grid_vjp,
)
# the reconstruct() function stays in its module so it does not shadow voxproj.reconstruct
from .reconstruct import ReconProblem, ReconReport, Target, evaluate_recon, visual_hull

__version__ = "0.1.0"
