"""Multi-surface single-photon Lidar reconstruction with a marked point process
prior and reversible-jump MCMC."""
from .config import HyperParameters, MoveTable, RunConfig, SamplerOptions, ScaleSchedule
from .data import (GroundTruthScene, ImpulseResponse, SparseLidarCube, bin_cube, generate_cube,
                   log_matched_filter)
from .metrics import detection_curves, nmse_background, nmse_target
from .multires import run_multiscale, threshold_support
from .points import PointConfiguration
from .sampler import Sampler

__all__ = [
    "HyperParameters", "MoveTable", "RunConfig", "SamplerOptions", "ScaleSchedule",
    "GroundTruthScene", "ImpulseResponse", "SparseLidarCube", "bin_cube", "generate_cube",
    "log_matched_filter", "detection_curves", "nmse_background", "nmse_target",
    "run_multiscale", "threshold_support", "PointConfiguration", "Sampler",
]
