"""
Smooth forcing extension

Builds the under-determined constraint system for the coefficients of the
extension h (a real trigonometric polynomial of half-width J) and, when the
operator is the Laplacian, the mean unknown U:

    boundary rows     S* L^{-1}(χ_E h) + U = g - S* L^{-1}(χ_Ω f)
    mean row          Δx^d Σ_E h = -Δx^d Σ_Ω f
    regularity rows   D_n^l h(s) = D_n^l f(s),  l = 0..k

Columns are ordered [1 | cos(j·x) for j in H | sin(j·x) for j in H | U]
where H is the half lattice of nonzero wave vectors whose first nonzero
component is positive.
"""
import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from itertools import product
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Tuple

import numpy as np

from services.BoundaryEval.boundary_eval import BoundaryEvaluator, TraceBlock, mode_traces
from services.Geometry.geometry import BoundaryDiscretization, Domain, GridMasks, boundary_nodes, grid_masks
from services.SpectralCore.spectral_core import Grid, OperatorSymbol, forward_transform, inverse_transform
from shared.error_utils import ConfigurationError, InvalidParameterError
from shared.logging_config import get_logger

from .min_norm import RANK_TOLERANCE, MinNormFactorization, SolveDiagnostics

if TYPE_CHECKING:
    from services.EllipticSolver.elliptic_solver import BcSpec

logger = get_logger(__name__)

COLUMN_CHUNK = 32
DECAY_FLOOR = 1e-13
DECAY_BINS = 8


class ExtensionContext(Enum):
    CONTINUATION = "continuation"
    BOUNDARY_VALUE = "boundary_value"


class RegularityPath(Enum):
    """Source of the traces D_n^l f(s) on the right of the regularity rows"""
    ANALYTIC = "analytic"          # closed-form normal derivatives of f
    GLOBAL_FIELD = "global_field"  # spectral traces of a field smooth on the whole box
    MASKED_FIELD = "masked_field"  # spectral traces of χ_Ω f matched by those of χ_Ω h


@dataclass(frozen=True)
class RegularityOrder:
    k: int

    def __post_init__(self):
        if self.k < -1:
            raise InvalidParameterError(f"Regularity order must be >= -1, got {self.k}")

    @property
    def has_rows(self) -> bool:
        return self.k >= 0

    @property
    def n_orders(self) -> int:
        return self.k + 1


@dataclass(frozen=True)
class Forcing:
    """
    Right-hand side f known in closed form

    normal_derivatives(points, normals, l) returns D_n^l f at the given nodes
    when f has closed-form traces. smooth_on_box marks forcings that may be
    sampled and differentiated spectrally on the whole box.
    """
    func: Callable[..., np.ndarray]
    normal_derivatives: Optional[Callable[[np.ndarray, np.ndarray, int], np.ndarray]] = None
    smooth_on_box: bool = False

    @property
    def has_closed_form_traces(self) -> bool:
        return self.normal_derivatives is not None

    def on_omega(self, grid: Grid, omega: np.ndarray) -> np.ndarray:
        """Samples at Ω nodes, zero elsewhere; f is never evaluated in E"""
        values = np.zeros(grid.shape)
        coords = [axis[omega] for axis in grid.mesh]
        values[omega] = np.asarray(self.func(*coords), dtype=float)
        return values

    def on_box(self, grid: Grid) -> np.ndarray:
        if not self.smooth_on_box:
            raise ConfigurationError("Forcing is not marked smooth on the whole box")
        return grid.sample(self.func)


def choose_num_modes(n_b: int, k: int, d: int,
                     context: ExtensionContext = ExtensionContext.BOUNDARY_VALUE,
                     mean_row: bool = False) -> int:
    """
    Half-width J of the extension basis

    1D continuation uses J = k+1 and 1D boundary-value problems J = k+2. In
    higher dimensions J starts from ceil(sqrt(n_b(k+2))/2 - 1) and grows until
    (2J+1)^d reaches the number of constraints.
    """
    if n_b < 2:
        raise InvalidParameterError(f"Need at least two boundary nodes, got {n_b}")
    RegularityOrder(k)
    if d == 1:
        return k + 1 if context is ExtensionContext.CONTINUATION else k + 2

    if context is ExtensionContext.CONTINUATION:
        n_rows = n_b * (k + 1)
    else:
        n_rows = n_b * (k + 2)
    n_rows += int(mean_row)
    J = max(0, math.ceil(math.sqrt(n_rows) / 2 - 1))
    while (2 * J + 1) ** d < n_rows:
        J += 1
    return J


class ExtensionBasis:
    """Real trigonometric basis {1, cos(j·x), sin(j·x)} with ‖j‖_∞ <= J"""

    def __init__(self, d: int, J: int):
        if J < 0:
            raise InvalidParameterError(f"Mode half-width must be non-negative, got {J}")
        self.d = d
        self.J = J

    @cached_property
    def half_lattice(self) -> np.ndarray:
        modes = [
            j for j in product(range(-self.J, self.J + 1), repeat=self.d)
            if any(j) and next(m for m in j if m != 0) > 0
        ]
        return np.array(modes, dtype=int).reshape(-1, self.d)

    @property
    def n_half(self) -> int:
        return self.half_lattice.shape[0]

    @property
    def n_columns(self) -> int:
        return 1 + 2 * self.n_half

    def column_labels(self) -> List[str]:
        names = [','.join(str(m) for m in j) for j in self.half_lattice]
        return ['1'] + [f"cos({n})" for n in names] + [f"sin({n})" for n in names]

    def check_grid(self, grid: Grid) -> None:
        if grid.d != self.d:
            raise ConfigurationError(f"Basis of dimension {self.d} used on a {grid.d}D grid")
        if self.J >= grid.nyquist_index:
            raise ConfigurationError(
                f"Mode half-width J={self.J} is not resolved on N={grid.N}"
            )

    def _phase(self, grid: Grid, modes: np.ndarray) -> np.ndarray:
        return np.tensordot(self.half_lattice[modes], np.stack(grid.mesh), axes=1)

    def sample_columns(self, grid: Grid, start: int, stop: int) -> np.ndarray:
        """Grid samples of basis columns start..stop-1, shape (stop-start, *grid.shape)"""
        index = np.arange(start, stop)
        samples = np.empty((index.size,) + grid.shape)
        is_const = index == 0
        is_cos = (index >= 1) & (index <= self.n_half)
        is_sin = index > self.n_half
        samples[is_const] = 1.0
        if is_cos.any():
            samples[is_cos] = np.cos(self._phase(grid, index[is_cos] - 1))
        if is_sin.any():
            samples[is_sin] = np.sin(self._phase(grid, index[is_sin] - 1 - self.n_half))
        return samples

    def closed_form_traces(self, nodes: BoundaryDiscretization, k: int) -> np.ndarray:
        """Realified mode traces, shape (k+1, n_b, n_columns)"""
        modes = mode_traces(self.half_lattice, nodes, k)
        const = np.zeros((k + 1, nodes.n_b, 1))
        const[0] = 1.0
        return np.concatenate([const, modes.real, modes.imag], axis=-1)

    def complex_coefficients(self, coefficients: np.ndarray, grid: Grid) -> np.ndarray:
        """Full coefficient array with c_j = (a_j - i b_j)/2 and c_{-j} = conj(c_j)"""
        self.check_grid(grid)
        coefficients = np.asarray(coefficients, dtype=float)
        if coefficients.shape != (self.n_columns,):
            raise ConfigurationError(
                f"Expected {self.n_columns} basis coefficients, got {coefficients.shape}"
            )
        a = coefficients[1:1 + self.n_half]
        b = coefficients[1 + self.n_half:]
        c = np.zeros(grid.shape, dtype=complex)
        c[(0,) * self.d] = coefficients[0]
        c[tuple(self.half_lattice.T)] = 0.5 * (a - 1j * b)
        c[tuple((-self.half_lattice).T)] = 0.5 * (a + 1j * b)
        return c

    def evaluate(self, coefficients: np.ndarray, grid: Grid) -> np.ndarray:
        return inverse_transform(self.complex_coefficients(coefficients, grid), self.d)


@dataclass
class ExtensionSystem:
    """Constraint matrix M, right-hand side b and row/column bookkeeping"""
    matrix: np.ndarray
    rhs: np.ndarray
    basis: ExtensionBasis
    row_blocks: Dict[str, slice]
    mean_column: bool = False

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    def column_labels(self) -> List[str]:
        labels = self.basis.column_labels()
        return labels + ['U'] if self.mean_column else labels

    def dump_csv(self, path: str) -> None:
        """Write [M | b] with one header row of column labels"""
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(self.column_labels() + ['rhs'])
            for row, value in zip(self.matrix, self.rhs):
                writer.writerow([f"{x:.17e}" for x in row] + [f"{value:.17e}"])
        logger.info(f"[EXTENSION] Wrote {self.n_rows}x{self.n_cols} system to {path}")


@dataclass
class ExtendedForcing:
    """h on the basis plus the composite f_e = χ_Ω f + χ_E h on a grid"""
    basis: ExtensionBasis
    coefficients: np.ndarray
    grid: Grid
    omega: np.ndarray
    forcing_values: np.ndarray
    mean: Optional[float] = None
    diagnostics: Optional[SolveDiagnostics] = None
    h_values: np.ndarray = field(init=False)
    values: np.ndarray = field(init=False)

    def __post_init__(self):
        self.h_values = self.basis.evaluate(self.coefficients, self.grid)
        self.values = np.where(self.omega, self.forcing_values, self.h_values)


def operator_image_traces(basis: ExtensionBasis, evaluator: BoundaryEvaluator,
                          inverse_multiplier: np.ndarray, extension_mask: np.ndarray,
                          order: int, chunk: int = COLUMN_CHUNK) -> np.ndarray:
    """
    Traces of L^{-1}(χ_E φ_c) for every basis column, shape (order+1, n_b, n_columns)

    Columns are processed in batches: sample, mask, transform, invert, trace.
    """
    grid = evaluator.grid
    basis.check_grid(grid)
    out = np.empty((order + 1, evaluator.nodes.n_b, basis.n_columns))
    for start in range(0, basis.n_columns, chunk):
        stop = min(start + chunk, basis.n_columns)
        masked = basis.sample_columns(grid, start, stop) * extension_mask
        coefficients = forward_transform(masked, grid.d) * inverse_multiplier
        block = evaluator.traces(coefficients, order).values
        out[..., start:stop] = np.moveaxis(block, 0, -1)
    return out


def _select_orders(traces: np.ndarray, neumann: np.ndarray) -> np.ndarray:
    """Order-0 trace at Dirichlet nodes, order-1 trace at Neumann nodes"""
    if not neumann.any():
        return traces[0]
    return np.where(neumann[:, None] if traces.ndim == 3 else neumann, traces[1], traces[0])


def boundary_matrix(basis: ExtensionBasis, evaluator: BoundaryEvaluator, operator: OperatorSymbol,
                    masks: GridMasks, neumann: np.ndarray) -> np.ndarray:
    """Mode columns of the boundary rows, with the U column appended on the mean path"""
    order = 1 if neumann.any() else 0
    traces = operator_image_traces(
        basis, evaluator, operator.inverse_multiplier(evaluator.grid), masks.extension, order
    )
    rows = _select_orders(traces, neumann)
    if operator.requires_mean_correction:
        rows = np.hstack([rows, (~neumann).astype(float)[:, None]])
    return rows


def boundary_rhs(evaluator: BoundaryEvaluator, operator: OperatorSymbol, masks: GridMasks,
                 forcing_values: np.ndarray, data: np.ndarray, neumann: np.ndarray) -> np.ndarray:
    """g - S* L^{-1}(χ_Ω f), or Neumann data minus the normal-derivative trace"""
    grid = evaluator.grid
    masked = np.where(masks.omega, forcing_values, 0.0)
    coefficients = forward_transform(masked, grid.d) * operator.inverse_multiplier(grid)
    traces = evaluator.traces(coefficients, 1 if neumann.any() else 0).values
    return np.asarray(data, dtype=float) - _select_orders(traces, neumann)


def assemble_boundary_rows(basis: ExtensionBasis, nodes: BoundaryDiscretization,
                           operator: OperatorSymbol, bc_spec: 'BcSpec', grid: Grid,
                           masks: GridMasks, forcing_values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    evaluator = BoundaryEvaluator(grid, nodes)
    neumann = bc_spec.neumann_mask
    rows = boundary_matrix(basis, evaluator, operator, masks, neumann)
    rhs = boundary_rhs(evaluator, operator, masks, forcing_values, bc_spec.values, neumann)
    return rows, rhs


def assemble_mean_row(basis: ExtensionBasis, grid: Grid, masks: GridMasks,
                      forcing_values: np.ndarray, mean_column: bool = True) -> Tuple[np.ndarray, float]:
    """Grid quadrature of h over E against that of f over Ω"""
    basis.check_grid(grid)
    row = np.empty(basis.n_columns)
    for start in range(0, basis.n_columns, COLUMN_CHUNK):
        stop = min(start + COLUMN_CHUNK, basis.n_columns)
        samples = basis.sample_columns(grid, start, stop)
        row[start:stop] = grid.cell_volume * samples[:, masks.extension].sum(axis=1)
    if mean_column:
        row = np.append(row, 0.0)
    return row, mean_rhs(grid, masks, forcing_values)


def mean_rhs(grid: Grid, masks: GridMasks, forcing_values: np.ndarray) -> float:
    return -grid.cell_volume * float(forcing_values[masks.omega].sum())


def forcing_traces(path: RegularityPath, nodes: BoundaryDiscretization, k: int,
                   forcing: Optional[Forcing] = None,
                   evaluator: Optional[BoundaryEvaluator] = None,
                   global_values: Optional[np.ndarray] = None,
                   omega: Optional[np.ndarray] = None) -> TraceBlock:
    """
    D_n^l f(s_i), l = 0..k, from closed forms, a globally smooth field, or
    the spectral traces of χ_Ω f on the masked path
    """
    if path is RegularityPath.ANALYTIC:
        if forcing is None or not forcing.has_closed_form_traces:
            raise ConfigurationError("Analytic regularity path needs closed-form traces of f")
        values = np.stack([
            np.asarray(forcing.normal_derivatives(nodes.points, nodes.normals, l), dtype=float)
            for l in range(k + 1)
        ])
        return TraceBlock(values)

    if evaluator is None or global_values is None:
        raise ConfigurationError(f"{path.value} regularity path needs a grid field and an evaluator")
    if path is RegularityPath.MASKED_FIELD:
        if omega is None:
            raise ConfigurationError("Masked regularity path needs the Ω mask")
        global_values = np.where(omega, global_values, 0.0)
    return evaluator.traces(forward_transform(global_values, evaluator.grid.d), k)


def _with_mean_column(rows: np.ndarray, mean_column: bool) -> np.ndarray:
    if mean_column:
        rows = np.hstack([rows, np.zeros((rows.shape[0], 1))])
    return rows


def regularity_matrix(basis: ExtensionBasis, nodes: BoundaryDiscretization, k: int,
                      mean_column: bool = False) -> np.ndarray:
    width = basis.n_columns + int(mean_column)
    if not RegularityOrder(k).has_rows:
        return np.zeros((0, width))
    rows = basis.closed_form_traces(nodes, k).reshape((k + 1) * nodes.n_b, basis.n_columns)
    return _with_mean_column(rows, mean_column)


def masked_regularity_matrix(basis: ExtensionBasis, evaluator: BoundaryEvaluator, omega: np.ndarray,
                             k: int, mean_column: bool = False) -> np.ndarray:
    """Rows T_k*(χ_Ω φ_c): spectral traces of every basis column cut to Ω"""
    width = basis.n_columns + int(mean_column)
    if not RegularityOrder(k).has_rows:
        return np.zeros((0, width))
    traces = operator_image_traces(basis, evaluator, np.ones(evaluator.grid.shape), omega, k)
    rows = traces.reshape((k + 1) * evaluator.nodes.n_b, basis.n_columns)
    return _with_mean_column(rows, mean_column)


def assemble_regularity_rows(basis: ExtensionBasis, nodes: BoundaryDiscretization, k: int,
                             traces: Optional[TraceBlock] = None,
                             mean_column: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """(k+1)·n_b rows matching D_n^l h to D_n^l f; no rows for k = -1"""
    rows = regularity_matrix(basis, nodes, k, mean_column)
    if not RegularityOrder(k).has_rows:
        return rows, np.zeros(0)
    if traces is None or traces.k != k or traces.n_b != nodes.n_b:
        raise ConfigurationError(f"Regularity rows need traces of order {k} at {nodes.n_b} nodes")
    return rows, traces.as_vector()


def solve_min_norm(system: ExtensionSystem,
                   rank_tolerance: float = RANK_TOLERANCE) -> Tuple[np.ndarray, SolveDiagnostics]:
    """Minimum-norm (c; U); rank deficiency is reported in the diagnostics"""
    if system.n_rows > system.n_cols:
        logger.warning(f"[EXTENSION] System {system.n_rows}x{system.n_cols} is over-determined")
    return MinNormFactorization(system.matrix, rank_tolerance).solve(system.rhs)


def extend_function(forcing: Forcing, domain: Domain, k: int, grid: Grid,
                    path: RegularityPath = RegularityPath.ANALYTIC,
                    J: Optional[int] = None,
                    rank_tolerance: float = RANK_TOLERANCE) -> ExtendedForcing:
    """
    Fourier continuation of f from Ω into E matching k normal derivatives at ∂Ω

    The continuation is built from regularity rows only and sampled on grid.
    """
    masks = grid_masks(domain, grid)
    nodes = boundary_nodes(domain, grid.N)
    if J is None:
        J = choose_num_modes(nodes.n_b, k, grid.d, ExtensionContext.CONTINUATION)
    basis = ExtensionBasis(grid.d, J)
    forcing_values = forcing.on_omega(grid, masks.omega)

    if not RegularityOrder(k).has_rows:
        return ExtendedForcing(basis, np.zeros(basis.n_columns), grid, masks.omega, forcing_values)

    evaluator = BoundaryEvaluator(grid, nodes) if path is RegularityPath.GLOBAL_FIELD else None
    global_values = forcing.on_box(grid) if path is RegularityPath.GLOBAL_FIELD else None
    traces = forcing_traces(path, nodes, k, forcing, evaluator, global_values)
    matrix, rhs = assemble_regularity_rows(basis, nodes, k, traces)

    system = ExtensionSystem(matrix, rhs, basis, {'regularity': slice(0, matrix.shape[0])})
    coefficients, diagnostics = solve_min_norm(system, rank_tolerance)
    logger.info(
        f"[EXTENSION] Continuation k={k}, J={J}: system {system.n_rows}x{system.n_cols}, "
        f"rank {diagnostics.rank}, residual {diagnostics.residual:.2e}"
    )
    return ExtendedForcing(basis, coefficients, grid, masks.omega, forcing_values,
                           diagnostics=diagnostics)


def coefficient_envelope(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Largest |c_j| on each shell ‖j‖_∞ = 0, ..., N/2"""
    magnitude = np.abs(forward_transform(np.asarray(values, dtype=float), grid.d))
    shell = np.max(np.abs(np.stack(grid.wave_mesh)), axis=0).astype(int)
    envelope = np.zeros(grid.nyquist_index + 1)
    np.maximum.at(envelope, shell.ravel(), magnitude.ravel())
    return envelope


def coefficient_decay_rate(values: np.ndarray, grid: Grid,
                           floor: float = DECAY_FLOOR, n_bins: int = DECAY_BINS) -> float:
    """
    Log-log slope of the envelope of |c_j| against ‖j‖_∞

    Only modes below N/4 and above floor·max|c| count as resolved; the fit
    uses the largest shell magnitude in log-spaced bins over the top
    half-decade of resolved shells.
    """
    envelope = coefficient_envelope(values, grid)

    band = np.arange(1, grid.N // 4 + 1)
    resolved = band[envelope[band] > floor * envelope.max()]
    if resolved.size == 0:
        raise InvalidParameterError("No resolved Fourier modes above the floor")
    top = resolved[-1]
    edges = np.unique(np.round(np.geomspace(top / math.sqrt(10.0), top, n_bins + 1)).astype(int))

    peaks_j, peaks_c = [], []
    for low, high in zip(edges[:-1], edges[1:]):
        shells = np.arange(low, high + 1)
        best = shells[np.argmax(envelope[shells])]
        if envelope[best] > 0:
            peaks_j.append(best)
            peaks_c.append(envelope[best])
    if len(peaks_j) < 3:
        raise InvalidParameterError(f"Only {len(peaks_j)} envelope points in the fitting band")

    slope = np.polyfit(np.log(peaks_j), np.log(peaks_c), 1)[0]
    logger.debug(f"[EXTENSION] Coefficient decay slope {slope:.3f} over shells {edges[0]}..{top}")
    return float(slope)
