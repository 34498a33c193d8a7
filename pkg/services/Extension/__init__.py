"""
Extension
Constraint assembly and minimum-norm solves for the smooth forcing extension
"""

from .extension import (
    ExtendedForcing,
    ExtensionBasis,
    ExtensionContext,
    ExtensionSystem,
    Forcing,
    RegularityOrder,
    RegularityPath,
    assemble_boundary_rows,
    assemble_mean_row,
    assemble_regularity_rows,
    choose_num_modes,
    coefficient_decay_rate,
    coefficient_envelope,
    extend_function,
    forcing_traces,
    masked_regularity_matrix,
    mean_rhs,
    regularity_matrix,
    solve_min_norm,
)
from .min_norm import MinNormFactorization, SolveDiagnostics

__all__ = [
    'ExtendedForcing',
    'ExtensionBasis',
    'ExtensionContext',
    'ExtensionSystem',
    'Forcing',
    'MinNormFactorization',
    'RegularityOrder',
    'RegularityPath',
    'SolveDiagnostics',
    'assemble_boundary_rows',
    'assemble_mean_row',
    'assemble_regularity_rows',
    'choose_num_modes',
    'coefficient_decay_rate',
    'coefficient_envelope',
    'extend_function',
    'forcing_traces',
    'masked_regularity_matrix',
    'mean_rhs',
    'regularity_matrix',
    'solve_min_norm',
]
