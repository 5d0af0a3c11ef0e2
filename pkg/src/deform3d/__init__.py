"""Image-guided deformation of labeled triangle meshes through a soft rasterizer."""
from .camera import Camera, ProjectionError, default_camera, project, project_jacobian
from .config import ConfigError, RunConfig
from .estimator import MeshDeformer, check_mesh, check_semantic_image
from .imgproc import distance_transform, mse, separate_masks, ssim
from .losses import BinarizeParams, LossWeights, SyncConfig, binarize
from .mesh import Mesh, ObjParseError, icosphere, load_obj, save_mtl, save_obj, uv_sphere
from .objective import NumericalError, Objective
from .optim import UnmatchedLabelsError, run_deformation
from .raster import RasterConfig, rasterize_depth, rasterize_soft

__version__ = "0.1.0"

__all__ = [
    "Camera", "ProjectionError", "default_camera", "project", "project_jacobian",
    "ConfigError", "RunConfig", "MeshDeformer", "check_mesh", "check_semantic_image",
    "distance_transform", "mse", "separate_masks", "ssim", "BinarizeParams",
    "LossWeights", "SyncConfig", "binarize", "Mesh", "ObjParseError", "icosphere",
    "load_obj", "save_mtl", "save_obj", "uv_sphere", "NumericalError", "Objective",
    "UnmatchedLabelsError", "run_deformation", "RasterConfig", "rasterize_depth",
    "rasterize_soft", "__version__",
]
