"""
Elliptic solver
Dirichlet and mixed problems on embedded domains through the forcing extension
"""

from .elliptic_solver import (
    BcKind,
    BcSpec,
    SfeSolver,
    Solution,
    export_binary,
    export_csv,
    interior_residual,
    manufactured_error,
    read_binary,
    reference_error,
    solve,
)

__all__ = [
    'BcKind',
    'BcSpec',
    'SfeSolver',
    'Solution',
    'export_binary',
    'export_csv',
    'interior_residual',
    'manufactured_error',
    'read_binary',
    'reference_error',
    'solve',
]
