"""
Synthetic Benchmark Framework

Ray-cast depth scenes and angular registration trials for measuring how
often registration fails as the inter-frame rotation grows.

Key components:
- Primitive / Plane / Box: analytic scene geometry
- SceneRegistry: discovers scene definitions under app/scenes_library
- Trial: a source/target depth pair with a known ground-truth motion

Usage:
    from app.bench import get_scene, make_trial
    from app.bench.runner import get_runner

    trial = make_trial(get_scene("corner"), angle_deg=30.0, seed=7)
    report = get_runner().angle_sweep("corner", [10, 20, 30], trials=5)
"""

from app.bench.base import Box, Plane, Primitive, build_primitives, render_depth
from app.bench.registry import SceneRegistry, builtin_scenes, get_registry, get_scene
from app.bench.trials import BENCH_INTRINSICS, Trial, make_trial, random_upper_axis, trial_generator

__all__ = [
    "Primitive",
    "Plane",
    "Box",
    "build_primitives",
    "render_depth",
    "SceneRegistry",
    "get_registry",
    "builtin_scenes",
    "get_scene",
    "BENCH_INTRINSICS",
    "Trial",
    "make_trial",
    "random_upper_axis",
    "trial_generator",
]
