from ..observation import Observation
from .augment import AugmentParams, augment
from .goals import EpisodeMetrics, goal_conditions
from .render import NoiseConfig, cast, render
from .scene import SceneError, load_scene, load_scene_file, reference_scenes
from .world import ObjectInstance, SimConfig, WorldState, transition

__all__ = [
    "AugmentParams",
    "EpisodeMetrics",
    "NoiseConfig",
    "ObjectInstance",
    "Observation",
    "SceneError",
    "SimConfig",
    "WorldState",
    "augment",
    "cast",
    "goal_conditions",
    "load_scene",
    "load_scene_file",
    "reference_scenes",
    "render",
    "transition",
]
