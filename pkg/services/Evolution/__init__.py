"""
Evolution
BDF-4 time stepping of the heat equation on embedded domains and on the torus
"""

from .evolution import (
    HeatProblem,
    History,
    PeriodicStepSolver,
    RunResult,
    SfeStepSolver,
    StartScheme,
    StepKind,
    StepperConfig,
    TraceRow,
    bdf4_step,
    euler_step,
    run,
    run_periodic,
    write_trace_csv,
)

__all__ = [
    'HeatProblem',
    'History',
    'PeriodicStepSolver',
    'RunResult',
    'SfeStepSolver',
    'StartScheme',
    'StepKind',
    'StepperConfig',
    'TraceRow',
    'bdf4_step',
    'euler_step',
    'run',
    'run_periodic',
    'write_trace_csv',
]
