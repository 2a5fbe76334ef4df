"""Oscillating spectral multipliers on rank-one symmetric spaces and their quotients."""

__version__ = "0.1.0"

from .geometry import Family, ModelPoint, SpaceParams, cartan_density, hyperbolic_distance, make_space
from .multipliers import MultiplierSpec, StripClassParams, eval_m, s_p, smoothness_order, v_gamma
from .special import c_function, plancherel_density, spherical_phi

__all__ = [
    "Family",
    "ModelPoint",
    "SpaceParams",
    "MultiplierSpec",
    "StripClassParams",
    "c_function",
    "cartan_density",
    "eval_m",
    "hyperbolic_distance",
    "make_space",
    "plancherel_density",
    "s_p",
    "smoothness_order",
    "spherical_phi",
    "v_gamma",
]
