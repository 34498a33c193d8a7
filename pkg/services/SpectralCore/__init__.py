"""
Spectral core
Periodic grids, Fourier transforms and operator symbols on [0, 2π)^d
"""

from .spectral_core import (
    Grid,
    GridField,
    OperatorSymbol,
    Representation,
    SymbolKind,
    apply_symbol,
    invert_helmholtz,
    invert_symbol,
    invert_zero_mean_laplacian,
    to_coefficients,
    to_values,
)

__all__ = [
    'Grid',
    'GridField',
    'OperatorSymbol',
    'Representation',
    'SymbolKind',
    'apply_symbol',
    'invert_helmholtz',
    'invert_symbol',
    'invert_zero_mean_laplacian',
    'to_coefficients',
    'to_values',
]
