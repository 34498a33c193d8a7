"""
Elliptic solves on embedded domains

Lu = f on Ω with Dirichlet or mixed conditions on ∂Ω, solved on the
periodic box as L u_e = χ_Ω f + χ_E h with h chosen by the extension
constraints. For the Laplacian the zero-mean inverse is used and the mean U
of u_e is carried as an extra unknown.
"""
import csv
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from services.BoundaryEval.boundary_eval import BoundaryEvaluator, TraceBlock
from services.Extension.extension import (
    ExtendedForcing,
    ExtensionBasis,
    ExtensionContext,
    Forcing,
    RegularityOrder,
    RegularityPath,
    assemble_mean_row,
    boundary_matrix,
    boundary_rhs,
    choose_num_modes,
    forcing_traces,
    masked_regularity_matrix,
    mean_rhs,
    regularity_matrix,
)
from services.Extension.min_norm import RANK_TOLERANCE, MinNormFactorization, SolveDiagnostics
from services.Geometry.geometry import BoundaryDiscretization, Domain, GridMasks, boundary_nodes, grid_masks
from services.SpectralCore.spectral_core import Grid, GridField, OperatorSymbol, apply_multiplier, forward_transform, inverse_transform
from shared.error_utils import ConfigurationError, SolveError
from shared.logging_config import get_logger

logger = get_logger(__name__)

BINARY_HEADER_DTYPE = '<i8'
BINARY_VALUE_DTYPE = '<f8'
MAX_MODE_GROWTH = 4


class BcKind(Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class BcSpec:
    """
    One condition per boundary node

    Neumann values are outward normal derivatives ∂_n u, so a condition
    u_x = q at a left endpoint is stored as -q.
    """
    kinds: Tuple[BcKind, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'values', np.asarray(self.values, dtype=float).ravel())
        if len(self.kinds) != self.values.size:
            raise ConfigurationError(
                f"{len(self.kinds)} condition kinds for {self.values.size} boundary values"
            )

    @classmethod
    def dirichlet(cls, values) -> 'BcSpec':
        values = np.asarray(values, dtype=float).ravel()
        return cls((BcKind.DIRICHLET,) * values.size, values)

    @classmethod
    def from_function(cls, nodes: BoundaryDiscretization, g: Callable[..., np.ndarray]) -> 'BcSpec':
        """Dirichlet data g(x, y, ...) sampled at every node"""
        values = np.broadcast_to(np.asarray(g(*nodes.points.T), dtype=float), (nodes.n_b,))
        return cls.dirichlet(values)

    @classmethod
    def homogeneous(cls, n_b: int) -> 'BcSpec':
        return cls.dirichlet(np.zeros(n_b))

    @property
    def n_b(self) -> int:
        return self.values.size

    @property
    def neumann_mask(self) -> np.ndarray:
        return np.array([kind is BcKind.NEUMANN for kind in self.kinds], dtype=bool)

    def with_values(self, values) -> 'BcSpec':
        return BcSpec(self.kinds, values)


@dataclass
class Solution:
    """Extended solution u_e on the box with the data that produced it"""
    field: GridField
    domain: Domain
    masks: GridMasks
    nodes: BoundaryDiscretization
    extended: ExtendedForcing
    diagnostics: SolveDiagnostics
    k: int
    mean: Optional[float] = None

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.data

    @property
    def J(self) -> int:
        return self.extended.basis.J

    @property
    def n_b(self) -> int:
        return self.nodes.n_b

    @property
    def system_shape(self) -> Tuple[int, int]:
        return self.diagnostics.n_rows, self.diagnostics.n_cols

    def restricted(self) -> np.ndarray:
        """u_e at the Ω nodes"""
        return self.values[self.masks.omega]

    def boundary_trace(self) -> np.ndarray:
        return BoundaryEvaluator(self.grid, self.nodes).evaluate(self.field.coefficients())


class SfeSolver:
    """
    Constraint machinery for one (domain, grid, operator, k, condition kinds)

    The matrix and its factorization are built once; each solve only builds
    a right-hand side and reconstructs u_e.
    When J is chosen automatically in two or more dimensions, the basis is
    widened by up to MAX_MODE_GROWTH half-widths until the constraint rows
    have full numerical rank.
    With strict set, a solve whose residual marks the constraints as
    inconsistent raises SolveError instead of returning.
    """

    def __init__(
        self,
        domain: Domain,
        grid: Grid,
        operator: OperatorSymbol,
        k: int,
        bc_kinds: Optional[Sequence[BcKind]] = None,
        path: RegularityPath = RegularityPath.GLOBAL_FIELD,
        J: Optional[int] = None,
        rank_tolerance: float = RANK_TOLERANCE,
        strict: bool = False,
    ):
        self.domain = domain
        self.grid = grid
        self.operator = operator
        self.k = RegularityOrder(k).k
        self.path = path
        self.strict = strict

        self.nodes = boundary_nodes(domain, grid.N)
        self.masks = grid_masks(domain, grid)
        self.evaluator = BoundaryEvaluator(grid, self.nodes)
        if bc_kinds is None:
            bc_kinds = (BcKind.DIRICHLET,) * self.nodes.n_b
        if len(bc_kinds) != self.nodes.n_b:
            raise ConfigurationError(
                f"{len(bc_kinds)} condition kinds for {self.nodes.n_b} boundary nodes"
            )
        self.bc_kinds = tuple(bc_kinds)
        self.neumann = np.array([kind is BcKind.NEUMANN for kind in self.bc_kinds], dtype=bool)
        self.mean_path = operator.requires_mean_correction
        self.inverse_multiplier = operator.inverse_multiplier(grid)

        grow = J is None and grid.d > 1
        if J is None:
            J = choose_num_modes(self.nodes.n_b, self.k, grid.d,
                                 ExtensionContext.BOUNDARY_VALUE, mean_row=self.mean_path)
        self._assemble(J, rank_tolerance)
        n_rows = self.matrix.shape[0]
        limit = J + MAX_MODE_GROWTH
        # widen the basis until the constraints have full numerical row rank
        while (grow and self.factorization.rank < n_rows
               and self.basis.J < limit and self.basis.J + 1 < grid.nyquist_index):
            logger.info(
                f"[ELLIPTIC] Rank {self.factorization.rank} of {n_rows} rows at J={self.basis.J}; "
                f"widening to J={self.basis.J + 1}"
            )
            self._assemble(self.basis.J + 1, rank_tolerance)

        n_b = self.nodes.n_b
        offset = n_b + int(self.mean_path)
        self.row_blocks = {'boundary': slice(0, n_b)}
        if self.mean_path:
            self.row_blocks['mean'] = slice(n_b, offset)
        self.row_blocks['regularity'] = slice(offset, n_rows)

        logger.info(
            f"[ELLIPTIC] Machinery for {operator.tag} on {domain.spec.kind.value}: "
            f"N={grid.N}, k={self.k}, n_b={n_b}, J={self.basis.J}, system {self.matrix.shape}, "
            f"rank {self.factorization.rank}"
        )

    def _assemble(self, J: int, rank_tolerance: float) -> None:
        self.basis = ExtensionBasis(self.grid.d, J)
        self.basis.check_grid(self.grid)

        blocks = [boundary_matrix(self.basis, self.evaluator, self.operator, self.masks, self.neumann)]
        if self.mean_path:
            mean_row, _ = assemble_mean_row(self.basis, self.grid, self.masks, np.zeros(self.grid.shape))
            blocks.append(mean_row[None, :])
        if self.path is RegularityPath.MASKED_FIELD:
            blocks.append(masked_regularity_matrix(self.basis, self.evaluator, self.masks.omega,
                                                   self.k, self.mean_path))
        else:
            blocks.append(regularity_matrix(self.basis, self.nodes, self.k, self.mean_path))
        self.matrix = np.vstack(blocks)
        self.factorization = MinNormFactorization(self.matrix, rank_tolerance)

    def regularity_traces(self, forcing: Optional[Forcing] = None,
                          global_values: Optional[np.ndarray] = None) -> Optional[TraceBlock]:
        if not RegularityOrder(self.k).has_rows:
            return None
        return forcing_traces(self.path, self.nodes, self.k, forcing, self.evaluator, global_values,
                              self.masks.omega)

    def build_rhs(self, forcing_values: np.ndarray, bc_values: np.ndarray,
                  traces: Optional[TraceBlock] = None) -> np.ndarray:
        parts = [boundary_rhs(self.evaluator, self.operator, self.masks,
                              forcing_values, bc_values, self.neumann)]
        if self.mean_path:
            parts.append(np.array([mean_rhs(self.grid, self.masks, forcing_values)]))
        if RegularityOrder(self.k).has_rows:
            if traces is None:
                raise ConfigurationError(f"Regularity order k={self.k} needs forcing traces")
            parts.append(traces.as_vector())
        return np.concatenate(parts)

    def solve(self, forcing_values: np.ndarray, bc_values: np.ndarray,
              traces: Optional[TraceBlock] = None) -> Solution:
        """Solve with f given as grid samples (only Ω entries are read)"""
        if forcing_values.shape != self.grid.shape:
            raise ConfigurationError(
                f"Forcing shape {forcing_values.shape} does not match grid {self.grid.shape}"
            )
        rhs = self.build_rhs(forcing_values, bc_values, traces)
        x, diagnostics = self.factorization.solve(rhs)
        if self.strict and diagnostics.inconsistent:
            raise SolveError(
                f"Extension constraints not met: residual {diagnostics.residual:.3e}, "
                f"rank {diagnostics.rank} of {min(self.matrix.shape)}",
                diagnostics,
            )

        mean = float(x[-1]) if self.mean_path else None
        coefficients = x[:-1] if self.mean_path else x
        extended = ExtendedForcing(self.basis, coefficients, self.grid, self.masks.omega,
                                   forcing_values, mean=mean, diagnostics=diagnostics)
        u = inverse_transform(forward_transform(extended.values, self.grid.d) * self.inverse_multiplier,
                              self.grid.d)
        if mean is not None:
            u = u + mean
        return Solution(
            field=GridField.from_values(self.grid, u),
            domain=self.domain,
            masks=self.masks,
            nodes=self.nodes,
            extended=extended,
            diagnostics=diagnostics,
            k=self.k,
            mean=mean,
        )

    def solve_forcing(self, forcing: Forcing, bc: BcSpec) -> Solution:
        """Solve with a closed-form forcing, drawing traces from the configured path"""
        if bc.kinds != self.bc_kinds:
            raise ConfigurationError("Boundary condition kinds differ from the assembled machinery")
        if self.path is RegularityPath.GLOBAL_FIELD:
            values = forcing.on_box(self.grid)
            traces = self.regularity_traces(global_values=values)
        elif self.path is RegularityPath.MASKED_FIELD:
            values = forcing.on_omega(self.grid, self.masks.omega)
            traces = self.regularity_traces(global_values=values)
        else:
            values = forcing.on_omega(self.grid, self.masks.omega)
            traces = self.regularity_traces(forcing=forcing)
        return self.solve(values, bc.values, traces)


def solve(operator: OperatorSymbol, forcing: Forcing, bc: BcSpec, domain: Domain, N: int, k: int,
          regularity_path: RegularityPath = RegularityPath.GLOBAL_FIELD) -> Solution:
    grid = Grid(domain.d, N)
    solver = SfeSolver(domain, grid, operator, k, bc.kinds, regularity_path)
    solution = solver.solve_forcing(forcing, bc)
    logger.info(
        f"[ELLIPTIC] Solved {operator.tag} N={N} k={k}: residual {solution.diagnostics.residual:.2e}"
    )
    return solution


def _sample_on_omega(solution: Solution, func: Callable[..., np.ndarray]) -> np.ndarray:
    omega = solution.masks.omega
    coords = [axis[omega] for axis in solution.grid.mesh]
    return np.broadcast_to(np.asarray(func(*coords), dtype=float), (int(omega.sum()),))


def manufactured_error(solution: Solution, exact: Callable[..., np.ndarray]) -> float:
    """max |u_e - u_exact| over the Ω nodes"""
    return float(np.max(np.abs(solution.restricted() - _sample_on_omega(solution, exact))))


def reference_error(coarse: Solution, fine: Solution) -> float:
    """max difference over coarse Ω nodes, comparing with the fine solution at shared nodes"""
    fine_values = fine.grid.coarse_view(fine.values, coarse.grid)
    return float(np.max(np.abs(coarse.restricted() - fine_values[coarse.masks.omega])))


def interior_residual(solution: Solution, operator: OperatorSymbol,
                      forcing: Callable[..., np.ndarray], margin: float = 2.0) -> float:
    """‖L u_e - f‖_∞ over Ω nodes at least margin·Δx away from every boundary node"""
    grid = solution.grid
    applied = apply_multiplier(solution.values, operator.evaluate(grid), grid.d)
    omega = solution.masks.omega
    points = np.column_stack([axis[omega] for axis in grid.mesh])
    distance, _ = cKDTree(solution.nodes.points).query(points)
    interior = distance >= margin * grid.dx
    if not interior.any():
        raise ConfigurationError("No Ω nodes far enough from the boundary")
    f = _sample_on_omega(solution, forcing)
    return float(np.max(np.abs(applied[omega] - f)[interior]))


def export_csv(solution: Solution, path: str) -> None:
    """One row per grid node: coordinates, value, Ω membership"""
    grid = solution.grid
    axes = ['x', 'y', 'z'][:grid.d]
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(axes + ['u', 'in_omega'])
        coords = [axis.ravel() for axis in grid.mesh]
        for i, (value, inside) in enumerate(zip(solution.values.ravel(), solution.masks.omega.ravel())):
            writer.writerow([f"{c[i]:.17e}" for c in coords] + [f"{value:.17e}", int(inside)])
    logger.info(f"[ELLIPTIC] Wrote solution CSV to {path}")


def export_binary(solution: Solution, path: str) -> None:
    """Header int64 d, int64 N, then row-major float64 values"""
    grid = solution.grid
    with open(path, 'wb') as f:
        f.write(np.array([grid.d, grid.N], dtype=BINARY_HEADER_DTYPE).tobytes())
        f.write(np.ascontiguousarray(solution.values, dtype=BINARY_VALUE_DTYPE).tobytes())
    logger.info(f"[ELLIPTIC] Wrote binary grid dump to {path}")


def read_binary(path: str) -> Tuple[Grid, np.ndarray]:
    with open(path, 'rb') as f:
        d, N = np.frombuffer(f.read(16), dtype=BINARY_HEADER_DTYPE)
        values = np.frombuffer(f.read(), dtype=BINARY_VALUE_DTYPE)
    grid = Grid(int(d), int(N))
    return grid, values.reshape(grid.shape).copy()
