from .annotations import AnnotationError, Scene, load_annotations, save_annotations, scene_pixels
from .chips import Chip, SamplingPolicy, augment, color_jitter, hflip_chip, rotate90_chip, sample_chip
from .synthetic import ShapeClass, SyntheticSpec, generate_synthetic_scene, write_synthetic_dataset

__all__ = [
    "AnnotationError",
    "Scene",
    "load_annotations",
    "save_annotations",
    "scene_pixels",
    "Chip",
    "SamplingPolicy",
    "sample_chip",
    "augment",
    "rotate90_chip",
    "hflip_chip",
    "color_jitter",
    "ShapeClass",
    "SyntheticSpec",
    "generate_synthetic_scene",
    "write_synthetic_dataset",
]
