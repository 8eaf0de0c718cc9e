"""Numerical toolkit for homogeneous groups: group law, splittings, intrinsic graphs,
Jacobians, spherical factors and blow-up checks of the area formula."""

from .algebra import GradedAlgebra, engel, fixture, heisenberg, validate_spec
from .metric import HomogeneousDistance, make_distance
from .splitting import ComplementaryCouple, HomogeneousSubgroup, named_subgroups
from .exterior import Multivector, hodge_star, orienting_unit, wedge, wedge_ratio
from .graph import IntrinsicLinearMap, IntrinsicMap, phi_fixture
from .measure import MeasureEstimate, federer_density, slice_volume, spherical_factor

__all__ = [
    "GradedAlgebra", "engel", "fixture", "heisenberg", "validate_spec",
    "HomogeneousDistance", "make_distance",
    "ComplementaryCouple", "HomogeneousSubgroup", "named_subgroups",
    "Multivector", "hodge_star", "orienting_unit", "wedge", "wedge_ratio",
    "IntrinsicLinearMap", "IntrinsicMap", "phi_fixture",
    "MeasureEstimate", "federer_density", "slice_volume", "spherical_factor",
]
