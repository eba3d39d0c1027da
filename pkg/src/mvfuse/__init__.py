"""Multi-view projection and heat-map fusion for 3D hand pose estimation from single depth images."""

from .evaluation import ErrorReport, compare_methods, evaluate, mean_joint_error, worst_case_accuracy
from .fusion import (
    FusionProblem,
    JointGaussian,
    SamplingGrid,
    coarse_fusion_estimate,
    estimate_joint_gaussians,
    fine_fusion_estimate,
    single_view_estimate,
    solve_pose,
)
from .geometry import (
    CameraIntrinsics,
    DepthFrame,
    ObbFrame,
    Plane,
    ProjectedView,
    ViewLink,
    compute_obb,
    depth_to_pointcloud,
    project_to_planes,
    unproject_view_value,
)
from .heatmap import GaussianNoise, HeatMapStack, SpuriousHotspot, add_noise, sample, synthesize_heatmaps
from .prior import JointSet, PosePrior, fit_pose_prior, project, reconstruct
from .synth import NoiseSpec, SyntheticScene, default_generator, generate_pose, make_scene, render_cloud

__all__ = [
    "add_noise",
    "CameraIntrinsics",
    "coarse_fusion_estimate",
    "compare_methods",
    "compute_obb",
    "default_generator",
    "depth_to_pointcloud",
    "DepthFrame",
    "ErrorReport",
    "estimate_joint_gaussians",
    "evaluate",
    "fine_fusion_estimate",
    "fit_pose_prior",
    "FusionProblem",
    "GaussianNoise",
    "generate_pose",
    "HeatMapStack",
    "JointGaussian",
    "JointSet",
    "make_scene",
    "mean_joint_error",
    "NoiseSpec",
    "ObbFrame",
    "Plane",
    "PosePrior",
    "project",
    "project_to_planes",
    "ProjectedView",
    "reconstruct",
    "render_cloud",
    "sample",
    "SamplingGrid",
    "single_view_estimate",
    "solve_pose",
    "SpuriousHotspot",
    "synthesize_heatmaps",
    "SyntheticScene",
    "unproject_view_value",
    "ViewLink",
    "worst_case_accuracy",
]

__version__ = "0.1.0"
