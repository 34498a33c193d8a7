"""
Boundary evaluation
Traces of spectral fields and of single Fourier modes at boundary nodes
"""

from .boundary_eval import (
    BoundaryEvaluator,
    TraceBlock,
    eval_at_nodes,
    mode_trace_closed_form,
    mode_traces,
    multi_indices,
    normal_derivative_traces,
)

__all__ = [
    'BoundaryEvaluator',
    'TraceBlock',
    'eval_at_nodes',
    'mode_trace_closed_form',
    'mode_traces',
    'multi_indices',
    'normal_derivative_traces',
]
