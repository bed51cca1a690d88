"""Stereo visual SLAM: FAST/BRIEF stereo frontend, frame-to-frame pose tracking,
landmark filtering, local maps in a pose graph and descriptor-tree loop closing."""

from .geometry import Camera, Isometry3, StereoRig, se3_exp, se3_log
from .pipeline import SlamConfig, SlamSystem, TrackingHalted, run_pipeline, run_synthetic
from .synthworld import SceneSpec, generate_scene, render_frame

__version__ = "0.1.0"

__all__ = [
    "Camera", "Isometry3", "StereoRig", "se3_exp", "se3_log",
    "SlamConfig", "SlamSystem", "TrackingHalted", "run_pipeline", "run_synthetic",
    "SceneSpec", "generate_scene", "render_frame",
]
