"""
Harness
Case catalog, convergence studies and the command-line front end
"""

from .case_catalog import CATALOG, CaseKind, CatalogCase, ReferenceKind, get_case, list_cases
from .convergence import (
    CellFailure,
    ConvergenceRecord,
    ConvergenceRow,
    RateEstimate,
    emit,
    estimate_rate,
    estimate_subgeometric_rate,
)
from .harness_cli import CaseSpec, main, run_case

__all__ = [
    'CATALOG',
    'CaseKind',
    'CaseSpec',
    'CatalogCase',
    'CellFailure',
    'ConvergenceRecord',
    'ConvergenceRow',
    'RateEstimate',
    'ReferenceKind',
    'emit',
    'estimate_rate',
    'estimate_subgeometric_rate',
    'get_case',
    'list_cases',
    'main',
    'run_case',
]
