"""
Eigen solver
Dirichlet eigenvalues of -Δ by shifted inverse power iteration
"""

from .eigensolver import (
    EigConfig,
    EigResult,
    inverse_power,
    scan_spectrum,
    validate_shift,
    write_eig_csv,
)

__all__ = [
    'EigConfig',
    'EigResult',
    'inverse_power',
    'scan_spectrum',
    'validate_shift',
    'write_eig_csv',
]
