"""
Command-line harness for the fixed experiments

Runs single solves, time-dependent runs, eigenvalue scans and full
convergence studies over the case catalog. Every study writes a CSV, a
long-format data file and a JSON metadata record into the output directory.
"""
import argparse
import csv
import importlib.metadata
import math
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import scipy.fft
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from managers.config_manager import ConfigManager
from services.EigenSolver.eigensolver import EigConfig, EigResult, scan_spectrum, write_eig_csv
from services.EllipticSolver.elliptic_solver import SfeSolver, export_binary, export_csv, manufactured_error
from services.Evolution.evolution import StartScheme, StepperConfig, run, write_trace_csv
from services.Extension.extension import (
    ExtensionContext,
    choose_num_modes,
    coefficient_decay_rate,
    coefficient_envelope,
    extend_function,
)
from services.Geometry.geometry import boundary_nodes
from services.Harness.case_catalog import CATALOG, CaseKind, CatalogCase, ReferenceKind, get_case, list_cases
from services.Harness.convergence import (
    CellFailure,
    ConvergenceRecord,
    ConvergenceRow,
    emit,
    estimate_subgeometric_rate,
)
from services.SpectralCore.spectral_core import Grid
from shared.error_utils import ConfigurationError, ErrorHandler, InvalidParameterError, SfeError
from shared.logging_config import get_logger

logger = get_logger(__name__)

MIN_N = 8
VERSIONED_PACKAGES = ('numpy', 'scipy', 'pydantic', 'python-dotenv')
JUMP_STARTS = {
    'euler': StartScheme.BDF4_WITH_EULER_START,
    'exact': StartScheme.BDF4_WITH_EXACT_HISTORY,
}


class CaseSpec(BaseModel):
    """Validated parameters of one catalog case"""
    model_config = ConfigDict(extra='forbid')

    case_id: str = Field(..., description="Catalog case id")
    n_values: List[int] = Field(..., min_length=1, description="Grid sizes, powers of two, ascending")
    k_values: List[int] = Field(default_factory=lambda: [0], min_length=1, description="Regularity orders")
    dt: Optional[float] = Field(default=None, gt=0, description="Fixed time step")
    dt_rule: Literal['fixed', 'quarter_grid'] = Field(default='fixed', description="Δt = dt or Δt = 1/(4N)")
    T: Optional[float] = Field(default=None, gt=0, description="Final time")
    shifts: List[float] = Field(default_factory=list, description="Inverse power shifts")
    tau: float = Field(default=1e-10, gt=0, description="Inverse power stopping tolerance")
    max_iters: int = Field(default=200, ge=1, description="Inverse power iteration cap")
    jump_start: Literal['euler', 'exact'] = Field(default='euler', description="First three BDF-4 levels")
    seed: int = Field(default=20200101, ge=0, lt=2 ** 64)
    error_floor: float = Field(default=1e-13, gt=0, description="Errors below 10x this are left out of fits")
    rank_tolerance: float = Field(default=1e-12, gt=0, lt=1,
                                  description="Relative singular value cutoff of min-norm solves")
    output_dir: str = Field(default='results')

    @field_validator('case_id')
    @classmethod
    def known_case(cls, v: str) -> str:
        if v not in CATALOG:
            raise ValueError(f"unknown case '{v}'; known cases: {', '.join(sorted(CATALOG))}")
        return v

    @field_validator('n_values')
    @classmethod
    def nested_grids(cls, v: List[int]) -> List[int]:
        for n in v:
            if n < MIN_N or n & (n - 1):
                raise ValueError(f"N={n} is not a power of two >= {MIN_N}")
        if any(b <= a for a, b in zip(v[:-1], v[1:])):
            raise ValueError(f"N values must be strictly ascending, got {v}")
        return v

    @field_validator('k_values')
    @classmethod
    def regularity_orders(cls, v: List[int]) -> List[int]:
        if any(k < -1 for k in v):
            raise ValueError(f"regularity orders must be >= -1, got {v}")
        return v

    @model_validator(mode='after')
    def kind_parameters(self) -> 'CaseSpec':
        kind = CATALOG[self.case_id].kind
        if kind is CaseKind.HEAT:
            if self.T is None:
                raise ValueError(f"{self.case_id} needs a final time T")
            if self.dt_rule == 'fixed' and self.dt is None:
                raise ValueError(f"{self.case_id} needs dt or dt_rule 'quarter_grid'")
        if kind is CaseKind.EIGS and not self.shifts:
            raise ValueError(f"{self.case_id} needs at least one shift")
        return self

    @property
    def case(self) -> CatalogCase:
        return CATALOG[self.case_id]

    @classmethod
    def from_config(cls, case_id: str, config: ConfigManager, **overrides) -> 'CaseSpec':
        """Catalog defaults, then the config file entry, then non-None overrides"""
        case = get_case(case_id)
        defaults = config.get_defaults()
        params: Dict[str, Any] = {
            'seed': defaults['seed'],
            'error_floor': defaults['error_floor'],
            'rank_tolerance': defaults['rank_tolerance'],
            'output_dir': config.get_output_dir(),
        }
        params.update(case.defaults)
        params.update(config.get_case_config(case_id))
        params.update({key: value for key, value in overrides.items() if value is not None})
        params.pop('case_id', None)
        try:
            return cls(case_id=case_id, **params)
        except ValidationError as e:
            raise ConfigurationError(f"Invalid parameters for {case_id}: {e}") from e


@dataclass
class CellResult:
    """Outcome of one (k, N) cell before reference errors are formed"""
    k: int
    N: int
    n_b: int
    J: int
    error: float
    grid: Optional[Grid] = None
    omega: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    extra: Any = None


def _run_extension_cell(spec: CaseSpec, k: int, N: int) -> CellResult:
    case = spec.case
    domain = case.domain()
    grid = Grid(domain.d, N)
    extended = extend_function(case.forcing, domain, k, grid, path=case.path,
                               rank_tolerance=spec.rank_tolerance)
    envelope = coefficient_envelope(extended.values, grid)
    # tail magnitude: largest coefficient above the resolved band
    tail = float(envelope[N // 4:].max())
    return CellResult(k, N, boundary_nodes(domain, N).n_b, extended.basis.J, tail, grid,
                      extended.omega, extended.values,
                      extra=coefficient_decay_rate(extended.values, grid))


def _run_poisson_cell(spec: CaseSpec, k: int, N: int) -> CellResult:
    case = spec.case
    domain = case.domain()
    grid = Grid(domain.d, N)
    bc = case.bc(boundary_nodes(domain, N))
    solver = SfeSolver(domain, grid, case.operator, k, bc.kinds, case.path,
                       rank_tolerance=spec.rank_tolerance, strict=True)
    solution = solver.solve_forcing(case.forcing, bc)
    error = manufactured_error(solution, case.exact) if case.exact is not None else math.nan
    return CellResult(k, N, solution.n_b, solution.J, error, grid, solution.masks.omega,
                      solution.values, extra=solution)


def stepper_config(spec: CaseSpec, k: int, N: int) -> StepperConfig:
    options = dict(k=k, scheme=JUMP_STARTS[spec.jump_start], regularity_path=spec.case.path,
                   rank_tolerance=spec.rank_tolerance)
    if spec.dt_rule == 'quarter_grid':
        return StepperConfig.quarter_grid_rule(N, spec.T, **options)
    return StepperConfig(dt=spec.dt, T=spec.T, **options)


def _run_heat_cell(spec: CaseSpec, k: int, N: int) -> CellResult:
    result = run(spec.case.heat_problem(), stepper_config(spec, k, N), N)
    final = result.final
    return CellResult(k, N, final.n_b, final.J, result.final_error, final.grid,
                      final.masks.omega, final.values, extra=result)


def _run_eigs_cell(spec: CaseSpec, k: int, N: int) -> CellResult:
    domain = spec.case.domain()
    config = EigConfig(sigma=spec.shifts[0], tau=spec.tau, max_iters=spec.max_iters, N=N, k=k,
                       seed=spec.seed, rank_tolerance=spec.rank_tolerance)
    results = scan_spectrum(spec.shifts, config, domain)
    if not any(r.converged for r in results):
        raise SfeError(f"No shift in {spec.shifts} converged at N={N}, k={k}")
    n_b = boundary_nodes(domain, N).n_b
    J = choose_num_modes(n_b, k, domain.d, ExtensionContext.BOUNDARY_VALUE)
    lowest = next(r for r in results if r.converged)
    return CellResult(k, N, n_b, J, lowest.eigenvalue, extra=results)


CELL_RUNNERS: Dict[CaseKind, Callable[[CaseSpec, int, int], CellResult]] = {
    CaseKind.EXTENSION: _run_extension_cell,
    CaseKind.POISSON: _run_poisson_cell,
    CaseKind.HEAT: _run_heat_cell,
    CaseKind.EIGS: _run_eigs_cell,
}


def _nested_difference(coarse: CellResult, fine: CellResult) -> float:
    """max over coarse Ω nodes of |u_N - u_finest| at the shared nodes"""
    if coarse.values is None:
        return abs(coarse.error - fine.error)
    fine_values = fine.grid.coarse_view(fine.values, coarse.grid)
    return float(np.max(np.abs(coarse.values - fine_values)[coarse.omega]))


def _rows(spec: CaseSpec, results: List[CellResult]) -> List[ConvergenceRow]:
    case = spec.case
    if case.kind is CaseKind.EXTENSION:
        return [ConvergenceRow(case.case_id, r.k, r.N, r.n_b, r.J, r.error, r.extra) for r in results]

    if case.reference is not ReferenceKind.FINEST_GRID and case.kind is not CaseKind.EIGS:
        return [ConvergenceRow(case.case_id, r.k, r.N, r.n_b, r.J, r.error) for r in results]

    rows = []
    for k in sorted({r.k for r in results}):
        cells = sorted((r for r in results if r.k == k), key=lambda r: r.N)
        finest = cells[-1]
        if finest.N != spec.n_values[-1]:
            logger.warning(f"[HARNESS] {case.case_id} k={k}: N={spec.n_values[-1]} failed, "
                           f"using N={finest.N} as reference")
        rows.extend(
            ConvergenceRow(case.case_id, r.k, r.N, r.n_b, r.J, _nested_difference(r, finest))
            for r in cells[:-1]
        )
    return rows


def package_versions() -> Dict[str, str]:
    versions = {}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = importlib.metadata.version(name)
        except importlib.metadata.PackageNotFoundError:
            versions[name] = 'unknown'
    return versions


def run_metadata(spec: CaseSpec, threads: int) -> Dict[str, Any]:
    case = spec.case
    metadata = {
        'case': case.case_id,
        'kind': case.kind.value,
        'description': case.description,
        'domain': case.domain_spec.to_dict(),
        'operator': case.operator.tag,
        'regularity_path': case.path.value,
        'params': spec.model_dump(),
        'seed': spec.seed,
        'threads': threads,
        'versions': package_versions(),
        'python': platform.python_version(),
        'platform': platform.platform(),
    }
    if case.kind is CaseKind.HEAT:
        metadata['start_scheme'] = JUMP_STARTS[spec.jump_start].value
    return metadata


def _eig_summary(results: List[CellResult]) -> Dict[str, List[Dict[str, Any]]]:
    return {
        f"k={r.k} N={r.N}": [
            {
                'shift': e.sigma,
                'eigenvalue': e.eigenvalue,
                'scaled_eigenvalue': e.scaled_eigenvalue,
                'iterations': e.iterations,
                'final_deviation': e.final_deviation,
                'converged': e.converged,
                'clustered': e.clustered,
            }
            for e in r.extra
        ]
        for r in sorted(results, key=lambda r: (r.k, r.N))
    }


def _subgeometric_rates(record: ConvergenceRecord, floor: float) -> Dict[str, float]:
    """c in e ~ exp(-c·N^{1/2}) per k, for k with two errors above the floor"""
    rates = {}
    for k in sorted({r.k for r in record.rows}):
        try:
            rates[str(k)] = estimate_subgeometric_rate(record.errors_for(k), floor)
        except InvalidParameterError as e:
            logger.info(f"[HARNESS] {record.case} k={k}: no sub-geometric fit ({e})")
    return rates


def run_cells(spec: CaseSpec, threads: int = 1) -> Tuple[List[CellResult], List[CellFailure]]:
    """
    Run every (k, N) cell; a failing cell is logged and recorded, not raised

    Cells run concurrently up to threads; FFT workers share what is left.
    """
    case = spec.case
    runner = CELL_RUNNERS[case.kind]
    cells = [(k, N) for k in spec.k_values for N in spec.n_values]
    cell_workers = max(1, min(threads, len(cells)))
    fft_workers = max(1, threads // cell_workers)

    def attempt(cell: Tuple[int, int]) -> Tuple[Optional[CellResult], Optional[CellFailure]]:
        k, N = cell
        with ErrorHandler(f"{case.case_id} k={k} N={N}") as handler:
            with scipy.fft.set_workers(fft_workers):
                return runner(spec, k, N), None
        return None, CellFailure(k, N, f"{type(handler.error).__name__}: {handler.error}")

    with ThreadPoolExecutor(max_workers=cell_workers) as pool:
        outcomes = list(pool.map(attempt, cells))

    results = [result for result, _ in outcomes if result is not None]
    failures = [failure for _, failure in outcomes if failure is not None]
    if failures:
        logger.warning(f"[HARNESS] {case.case_id}: {len(failures)} of {len(cells)} cells failed")
    return results, failures


def run_case(spec: CaseSpec, threads: int = 1, out_dir: Optional[str] = None) -> ConvergenceRecord:
    """
    Solver matrix over (k, N) for one case

    Errors come from the exact or manufactured solution when the case has
    one, otherwise from the finest grid at the shared nodes. With out_dir the
    record is written there.
    """
    case = spec.case
    logger.info(f"[HARNESS] Running {case.case_id}: N={spec.n_values}, k={spec.k_values}, threads={threads}")
    results, failures = run_cells(spec, threads)

    record = ConvergenceRecord(case.case_id, case.reference.value, failures=failures,
                               metadata=run_metadata(spec, threads))
    record.rows = _rows(spec, results)
    if case.kind is CaseKind.EIGS:
        record.metadata['eigenvalues'] = _eig_summary(results)
    if case.kind is not CaseKind.EXTENSION:
        record.with_rates(spec.error_floor)
    if case.kind is CaseKind.POISSON and case.reference is ReferenceKind.FINEST_GRID:
        record.metadata['subgeometric_rate'] = _subgeometric_rates(record, spec.error_floor)

    if out_dir is not None:
        emit(record, out_dir)
    return record


def write_envelope_csv(values: np.ndarray, grid: Grid, path: str) -> None:
    """Shell index and largest |c_j| on that shell"""
    envelope = coefficient_envelope(values, grid)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['j', 'max_abs_coefficient'])
        for j, magnitude in enumerate(envelope):
            writer.writerow([j, f"{magnitude:.17e}"])
    logger.info(f"[HARNESS] Wrote coefficient envelope to {path}")


# ============================================================================
# SUBCOMMANDS
# ============================================================================

def _load_spec(args: argparse.Namespace, kinds: Sequence[CaseKind]) -> Tuple[CaseSpec, int]:
    config = ConfigManager(args.config)
    case = get_case(args.case)
    if case.kind not in kinds:
        raise ConfigurationError(
            f"Case {case.case_id} is a {case.kind.value} case; "
            f"this command takes {', '.join(kind.value for kind in kinds)}"
        )
    overrides: Dict[str, Any] = {'seed': args.seed, 'output_dir': args.out}
    if getattr(args, 'N', None) is not None:
        overrides['n_values'] = [args.N]
    if getattr(args, 'k', None) is not None:
        overrides['k_values'] = [args.k]
    if getattr(args, 'shifts', None):
        overrides['shifts'] = args.shifts
    spec = CaseSpec.from_config(case.case_id, config, **overrides)
    threads = args.threads if args.threads is not None else config.get_threads()
    os.makedirs(spec.output_dir, exist_ok=True)
    return spec, threads


def _single_cell(spec: CaseSpec) -> Tuple[int, int]:
    """First k and finest N of the case"""
    return spec.k_values[0], spec.n_values[-1]


def _artifact(spec: CaseSpec, k: int, N: int, suffix: str) -> str:
    return os.path.join(spec.output_dir, f"{spec.case_id}_k{k}_N{N}.{suffix}")


def cmd_list_cases(args: argparse.Namespace) -> None:
    print(f"{'case':<22}{'kind':<11}{'reference':<14}description")
    for case in list_cases():
        print(f"{case.case_id:<22}{case.kind.value:<11}{case.reference.value:<14}{case.description}")


def cmd_extend(args: argparse.Namespace) -> None:
    spec, _ = _load_spec(args, [CaseKind.EXTENSION])
    k, N = _single_cell(spec)
    cell = _run_extension_cell(spec, k, N)
    write_envelope_csv(cell.values, cell.grid, _artifact(spec, k, N, 'envelope.csv'))
    print(f"{spec.case_id} k={k} N={N}: J={cell.J}, decay slope {cell.extra:.3f}, tail {cell.error:.3e}")


def cmd_solve(args: argparse.Namespace) -> None:
    spec, _ = _load_spec(args, [CaseKind.POISSON])
    k, N = _single_cell(spec)
    cell = _run_poisson_cell(spec, k, N)
    solution = cell.extra
    export_csv(solution, _artifact(spec, k, N, 'solution.csv'))
    export_binary(solution, _artifact(spec, k, N, 'solution.bin'))
    diagnostics = solution.diagnostics
    print(
        f"{spec.case_id} k={k} N={N}: n_b={cell.n_b}, J={cell.J}, system {solution.system_shape}, "
        f"rank {diagnostics.rank}, residual {diagnostics.residual:.2e}, error {cell.error:.3e}"
    )


def cmd_heat(args: argparse.Namespace) -> None:
    spec, _ = _load_spec(args, [CaseKind.HEAT])
    k, N = _single_cell(spec)
    cell = _run_heat_cell(spec, k, N)
    write_trace_csv(cell.extra, _artifact(spec, k, N, 'trace.csv'))
    print(f"{spec.case_id} k={k} N={N}: {len(cell.extra.trace)} steps, final error {cell.error:.3e}")


def cmd_eigs(args: argparse.Namespace) -> None:
    spec, threads = _load_spec(args, [CaseKind.EIGS])
    k, N = _single_cell(spec)
    config = EigConfig(sigma=spec.shifts[0], tau=spec.tau, max_iters=spec.max_iters, N=N, k=k, seed=spec.seed)
    results: List[EigResult] = scan_spectrum(spec.shifts, config, spec.case.domain(), max_workers=threads)
    write_eig_csv(results, _artifact(spec, k, N, 'eigs.csv'))
    for r in results:
        status = 'converged' if r.converged else 'NOT converged'
        print(f"σ={r.sigma:<8g} λ̃={r.eigenvalue:.10f}  λ̃|Ω|={r.scaled_eigenvalue:.6f}  "
              f"{r.iterations} iterations, {status}")


def cmd_converge(args: argparse.Namespace) -> None:
    case_ids = sorted(CATALOG) if args.case == 'all' else [args.case]
    for case_id in case_ids:
        args.case = case_id
        spec, threads = _load_spec(args, list(CaseKind))
        record = run_case(spec, threads, out_dir=spec.output_dir)
        for k in spec.k_values:
            rate = record.rate_for(k)
            print(f"{case_id} k={k}: rate {'undefined' if rate is None else f'{rate:.3f}'}")
        if record.failures:
            print(f"{case_id}: {len(record.failures)} failed cells, see {case_id}.meta.json")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', default='config.json', help='Config file path (default: config.json)')
    common.add_argument('--out', default=None, help='Output directory (default: config output_dir)')
    common.add_argument('--seed', type=int, default=None, help='Random seed for eigen iterations')
    common.add_argument('--threads', type=int, default=None, help='Worker threads (default: config threads)')

    cell = argparse.ArgumentParser(add_help=False)
    cell.add_argument('--case', required=True, help='Catalog case id (see list-cases)')
    cell.add_argument('--N', type=int, default=None, help='Grid size (default: finest configured N)')
    cell.add_argument('--k', type=int, default=None, help='Regularity order (default: first configured k)')

    parser = argparse.ArgumentParser(
        description='Spectral solver on embedded domains: experiments and convergence studies',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python -m services.Harness.harness_cli list-cases
  python -m services.Harness.harness_cli solve --case poisson_2d_disc --N 64 --k 1
  python -m services.Harness.harness_cli eigs --case eigs_diamond --shifts 2.1 8.6
  python -m services.Harness.harness_cli converge --case all --threads 4 --out results

Environment Variables:
  SFE_OUTPUT_DIR    - Output directory override
  SFE_THREADS       - Worker thread override
  LOG_LEVEL         - DEBUG, INFO, WARNING, ERROR (default: INFO)
  SFE_ENVIRONMENT   - 'production' for JSON log lines
        """
    )
    commands = parser.add_subparsers(dest='command', required=True)

    commands.add_parser('list-cases', parents=[common], help='List catalog cases').set_defaults(handler=cmd_list_cases)
    commands.add_parser('extend', parents=[common, cell], help='Fourier continuation of a forcing') \
        .set_defaults(handler=cmd_extend)
    commands.add_parser('solve', parents=[common, cell], help='One elliptic solve') \
        .set_defaults(handler=cmd_solve)
    commands.add_parser('heat', parents=[common, cell], help='One time-dependent run') \
        .set_defaults(handler=cmd_heat)

    eigs = commands.add_parser('eigs', parents=[common, cell], help='Shifted inverse power scan')
    eigs.add_argument('--shifts', type=float, nargs='+', default=None, help='Shifts σ (default: configured)')
    eigs.set_defaults(handler=cmd_eigs)

    converge = commands.add_parser('converge', parents=[common], help='Convergence study over N and k')
    converge.add_argument('--case', required=True, help="Catalog case id or 'all'")
    converge.set_defaults(handler=cmd_converge)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> None:
    """Main entry point."""
    args = build_parser().parse_args(argv)
    try:
        args.handler(args)
    except KeyboardInterrupt:
        print("\n\n⚠️  Interrupted by user")
        sys.exit(1)
    except (SfeError, ValueError, OSError) as e:
        logger.error(f"[HARNESS] {args.command} failed: {e}")
        print(f"\n❌ Error: {e}")
        sys.exit(1)


if __name__ == '__main__':
    main()
