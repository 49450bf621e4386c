"""SDF reconstruction from posed images and silhouettes (C++ core bindings)."""

from ._core import (
    Field,
    chamfer,
    distance_transform,
    icp_register,
    importance_weights,
    marching_cubes_field,
    marching_cubes_scene,
    positional_encoding,
    sample_surface,
    scene_eval,
    sdf_lower_bound,
    sdf_lower_bound_finite_focal,
)

__all__ = [
    "Field",
    "chamfer",
    "distance_transform",
    "icp_register",
    "importance_weights",
    "marching_cubes_field",
    "marching_cubes_scene",
    "positional_encoding",
    "sample_surface",
    "scene_eval",
    "sdf_lower_bound",
    "sdf_lower_bound_finite_focal",
]
