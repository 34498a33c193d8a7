"""
Geometry
Catalog domains, grid masks and boundary node sets
"""

from .geometry import (
    BoundaryDiscretization,
    DiamondDomain,
    DiscComplementDomain,
    Domain,
    DomainKind,
    DomainSpec,
    EyeDomain,
    GridMasks,
    IntervalDomain,
    boundary_nodes,
    grid_masks,
    measure,
)

__all__ = [
    'BoundaryDiscretization',
    'DiamondDomain',
    'DiscComplementDomain',
    'Domain',
    'DomainKind',
    'DomainSpec',
    'EyeDomain',
    'GridMasks',
    'IntervalDomain',
    'boundary_nodes',
    'grid_masks',
    'measure',
]
