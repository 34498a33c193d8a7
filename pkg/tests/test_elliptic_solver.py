"""
Tests for elliptic solves on embedded domains
"""
import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.BoundaryEval.boundary_eval import TraceBlock
from services.EllipticSolver.elliptic_solver import (
    MAX_MODE_GROWTH,
    BcKind,
    BcSpec,
    SfeSolver,
    export_binary,
    export_csv,
    interior_residual,
    manufactured_error,
    read_binary,
    reference_error,
    solve,
)
from services.Extension.extension import (
    ExtensionContext,
    Forcing,
    RegularityPath,
    choose_num_modes,
    masked_regularity_matrix,
)
from services.Extension.min_norm import SolveDiagnostics
from services.Geometry.geometry import boundary_nodes
from services.Harness.case_catalog import (
    DIRICHLET_C1,
    DIRICHLET_C2,
    MIXED_C1,
    MIXED_C2,
    pole_forcing,
    pole_solution,
    wave,
    wave_laplacian,
)
from services.SpectralCore.spectral_core import Grid, OperatorSymbol
from shared.error_utils import ConfigurationError, SolveError


def _smooth(func) -> Forcing:
    return Forcing(func=func, smooth_on_box=True)


class TestBcSpec:

    def test_kind_count_must_match_values(self):
        with pytest.raises(ConfigurationError):
            BcSpec((BcKind.DIRICHLET,), [1.0, 2.0])

    def test_from_function_samples_nodes(self, interval):
        nodes = boundary_nodes(interval, 32)
        bc = BcSpec.from_function(nodes, lambda x: x ** 2)
        assert_allclose(bc.values, [4.0, 25.0])
        assert not bc.neumann_mask.any()

    def test_constant_function_is_broadcast(self, disc):
        nodes = boundary_nodes(disc, 32)
        assert BcSpec.from_function(nodes, lambda x, y: 2.0).values.shape == (nodes.n_b,)

    def test_neumann_mask(self):
        bc = BcSpec((BcKind.NEUMANN, BcKind.DIRICHLET), [0.0, 1.0])
        assert bc.neumann_mask.tolist() == [True, False]
        assert bc.with_values([3.0, 4.0]).kinds == bc.kinds


class TestSfeSolver:

    def test_zero_data_gives_zero(self, interval):
        grid = Grid(1, 64)
        solver = SfeSolver(interval, grid, OperatorSymbol.laplacian(), 1, path=RegularityPath.ANALYTIC)
        solution = solver.solve(np.zeros(grid.shape), np.zeros(2), TraceBlock(np.zeros((2, 2))))
        assert_allclose(solution.values, 0.0, atol=1e-14)
        assert solution.mean == pytest.approx(0.0, abs=1e-14)

    def test_system_layout_1d(self, interval):
        solver = SfeSolver(interval, Grid(1, 64), OperatorSymbol.laplacian(), 2, path=RegularityPath.ANALYTIC)
        assert solver.matrix.shape == (9, 10)
        assert solver.row_blocks['boundary'] == slice(0, 2)
        assert solver.row_blocks['mean'] == slice(2, 3)
        assert solver.row_blocks['regularity'] == slice(3, 9)

    def test_helmholtz_has_no_mean_unknown(self, interval):
        grid = Grid(1, 64)
        solver = SfeSolver(interval, grid, OperatorSymbol.helmholtz(0.05), 0)
        assert 'mean' not in solver.row_blocks
        solution = solver.solve(np.zeros(grid.shape), np.array([1.0, 2.0]), TraceBlock(np.zeros((1, 2))))
        assert solution.mean is None
        assert_allclose(solution.boundary_trace(), [1.0, 2.0], atol=1e-10)

    def test_dirichlet_data_is_met(self, disc):
        grid = Grid(2, 32)
        solver = SfeSolver(disc, grid, OperatorSymbol.laplacian(), 0)
        data = np.cos(np.arange(solver.nodes.n_b))
        forcing = grid.sample(wave_laplacian)
        solution = solver.solve(forcing, data, solver.regularity_traces(global_values=forcing))
        assert not solution.diagnostics.rank_deficient
        assert_allclose(solution.boundary_trace(), data, atol=1e-8)

    def test_missing_traces_rejected(self, interval):
        grid = Grid(1, 32)
        solver = SfeSolver(interval, grid, OperatorSymbol.laplacian(), 0, path=RegularityPath.ANALYTIC)
        with pytest.raises(ConfigurationError):
            solver.solve(np.zeros(grid.shape), np.zeros(2))

    def test_forcing_shape_checked(self, interval):
        solver = SfeSolver(interval, Grid(1, 32), OperatorSymbol.laplacian(), -1)
        with pytest.raises(ConfigurationError):
            solver.solve(np.zeros(64), np.zeros(2))

    def test_kind_count_checked(self, interval):
        with pytest.raises(ConfigurationError):
            SfeSolver(interval, Grid(1, 32), OperatorSymbol.laplacian(), 0, bc_kinds=(BcKind.DIRICHLET,))

    def test_mismatched_kinds_rejected(self, interval):
        solver = SfeSolver(interval, Grid(1, 32), OperatorSymbol.laplacian(), 0, path=RegularityPath.ANALYTIC)
        bc = BcSpec((BcKind.NEUMANN, BcKind.DIRICHLET), [0.0, 0.0])
        with pytest.raises(ConfigurationError):
            solver.solve_forcing(pole_forcing(), bc)

    def test_machinery_reused_across_right_hand_sides(self, interval, mocker):
        grid = Grid(1, 64)
        solver = SfeSolver(interval, grid, OperatorSymbol.laplacian(), 0, path=RegularityPath.ANALYTIC)
        spy = mocker.spy(solver.factorization, 'solve')
        for data in ([1.0, -1.0], [0.0, 2.0]):
            solver.solve_forcing(pole_forcing(), BcSpec.dirichlet(data))
        assert spy.call_count == 2

    def test_solution_is_linear_in_the_data(self, disc):
        grid = Grid(2, 32)
        solver = SfeSolver(disc, grid, OperatorSymbol.laplacian(), 1)
        f1, f2 = grid.sample(wave_laplacian), grid.sample(lambda x, y: np.cos(x) * np.sin(2.0 * y))
        g1 = np.cos(np.arange(solver.nodes.n_b))
        g2 = np.sin(0.5 * np.arange(solver.nodes.n_b))

        def run(f, g):
            return solver.solve(f, g, solver.regularity_traces(global_values=f))

        combined = run(2.0 * f1 - 3.0 * f2, 2.0 * g1 - 3.0 * g2)
        expected = 2.0 * run(f1, g1).values - 3.0 * run(f2, g2).values
        assert_allclose(combined.values, expected, atol=1e-9)

    def test_box_mean_equals_mean_unknown(self, disc):
        grid = Grid(2, 32)
        solver = SfeSolver(disc, grid, OperatorSymbol.laplacian(), 1)
        forcing = grid.sample(wave_laplacian)
        solution = solver.solve(forcing, np.ones(solver.nodes.n_b), solver.regularity_traces(global_values=forcing))
        assert abs(solution.values.mean() - solution.mean) <= 1e-12

    def test_strict_solver_raises_on_inconsistent_constraints(self, interval, mocker):
        grid = Grid(1, 64)
        solver = SfeSolver(interval, grid, OperatorSymbol.laplacian(), 0, path=RegularityPath.ANALYTIC, strict=True)
        rows, cols = solver.matrix.shape
        diagnostics = SolveDiagnostics(rows, cols, rows, residual=1.0, tolerance=1e-10, condition=1.0)
        mocker.patch.object(solver.factorization, 'solve', return_value=(np.zeros(cols), diagnostics))
        with pytest.raises(SolveError) as info:
            solver.solve_forcing(pole_forcing(), BcSpec.dirichlet([1.0, -1.0]))
        assert info.value.diagnostics is diagnostics

    def test_lenient_solver_returns_inconsistent_diagnostics(self, interval, mocker):
        grid = Grid(1, 64)
        solver = SfeSolver(interval, grid, OperatorSymbol.laplacian(), 0, path=RegularityPath.ANALYTIC)
        rows, cols = solver.matrix.shape
        diagnostics = SolveDiagnostics(rows, cols, rows, residual=1.0, tolerance=1e-10, condition=1.0)
        mocker.patch.object(solver.factorization, 'solve', return_value=(np.zeros(cols), diagnostics))
        solution = solver.solve_forcing(pole_forcing(), BcSpec.dirichlet([1.0, -1.0]))
        assert solution.diagnostics.inconsistent

    def test_masked_path_uses_cut_column_rows(self, disc):
        solver = SfeSolver(disc, Grid(2, 32), OperatorSymbol.laplacian(), 1, path=RegularityPath.MASKED_FIELD)
        expected = masked_regularity_matrix(solver.basis, solver.evaluator, solver.masks.omega, 1, True)
        assert_allclose(solver.matrix[solver.row_blocks['regularity']], expected)

    def test_masked_path_meets_dirichlet_data(self, disc):
        grid = Grid(2, 32)
        solver = SfeSolver(disc, grid, OperatorSymbol.laplacian(), 1, path=RegularityPath.MASKED_FIELD)
        nodes = solver.nodes
        solution = solver.solve_forcing(_smooth(wave_laplacian), BcSpec.from_function(nodes, wave))
        assert_allclose(solution.boundary_trace(), BcSpec.from_function(nodes, wave).values, atol=1e-6)

    def test_automatic_basis_is_widened_towards_full_rank(self, diamond):
        grid = Grid(2, 32)
        solver = SfeSolver(diamond, grid, OperatorSymbol.laplacian(), 1)
        start = choose_num_modes(solver.nodes.n_b, 1, 2, ExtensionContext.BOUNDARY_VALUE, mean_row=True)
        assert solver.basis.J >= start
        full_rank = solver.factorization.rank == solver.matrix.shape[0]
        capped = solver.basis.J in (start + MAX_MODE_GROWTH, grid.nyquist_index - 1)
        assert full_rank or capped

    def test_explicit_half_width_is_kept(self, diamond):
        solver = SfeSolver(diamond, Grid(2, 32), OperatorSymbol.laplacian(), 1, J=3)
        assert solver.basis.J == 3

    def test_one_dimensional_basis_is_never_widened(self, interval):
        solver = SfeSolver(interval, Grid(1, 64), OperatorSymbol.laplacian(), 2, path=RegularityPath.ANALYTIC)
        assert solver.basis.J == choose_num_modes(2, 2, 1, ExtensionContext.BOUNDARY_VALUE, mean_row=True)


class TestPoisson1d:

    def test_dirichlet_manufactured(self, interval):
        solution = solve(OperatorSymbol.laplacian(), pole_forcing(), BcSpec.dirichlet([1.0, -1.0]),
                         interval, 256, 2, RegularityPath.ANALYTIC)
        assert manufactured_error(solution, pole_solution(DIRICHLET_C1, DIRICHLET_C2)) < 1e-5

    def test_mixed_manufactured(self, interval):
        bc = BcSpec((BcKind.NEUMANN, BcKind.DIRICHLET), [-1.0, -1.0])
        solution = solve(OperatorSymbol.laplacian(), pole_forcing(), bc, interval, 256, 2, RegularityPath.ANALYTIC)
        assert manufactured_error(solution, pole_solution(MIXED_C1, MIXED_C2)) < 1e-5

    def test_error_drops_with_regularity(self, interval):
        errors = [
            manufactured_error(
                solve(OperatorSymbol.laplacian(), pole_forcing(), BcSpec.dirichlet([1.0, -1.0]),
                      interval, 256, k, RegularityPath.ANALYTIC),
                pole_solution(DIRICHLET_C1, DIRICHLET_C2),
            )
            for k in (0, 2)
        ]
        assert errors[1] < errors[0]


class TestPoisson2d:

    def test_interior_residual_on_disc(self, disc):
        solution = solve(OperatorSymbol.laplacian(), _smooth(wave_laplacian),
                         BcSpec.homogeneous(boundary_nodes(disc, 32).n_b), disc, 32, 0)
        assert interior_residual(solution, OperatorSymbol.laplacian(), wave_laplacian) < 1e-8

    def test_self_reference_error_is_zero(self, disc):
        solution = solve(OperatorSymbol.laplacian(), _smooth(wave_laplacian),
                         BcSpec.homogeneous(boundary_nodes(disc, 32).n_b), disc, 32, -1)
        assert reference_error(solution, solution) == 0.0

    @pytest.mark.slow
    def test_eye_manufactured(self, eye):
        nodes = boundary_nodes(eye, 64)
        solution = solve(OperatorSymbol.laplacian(), _smooth(wave_laplacian), BcSpec.from_function(nodes, wave),
                         eye, 64, 1)
        assert manufactured_error(solution, wave) < 1e-3


class TestExport:

    @pytest.fixture
    def solution(self, interval):
        return solve(OperatorSymbol.laplacian(), pole_forcing(), BcSpec.dirichlet([1.0, -1.0]),
                     interval, 32, 0, RegularityPath.ANALYTIC)

    def test_binary_round_trip(self, tmp_path, solution):
        path = str(tmp_path / "u.bin")
        export_binary(solution, path)
        grid, values = read_binary(path)
        assert grid == solution.grid
        assert_allclose(values, solution.values, rtol=0, atol=0)

    def test_binary_size(self, tmp_path, solution):
        path = tmp_path / "u.bin"
        export_binary(solution, str(path))
        assert path.stat().st_size == 16 + 8 * 32

    def test_csv_rows(self, tmp_path, solution):
        path = tmp_path / "u.csv"
        export_csv(solution, str(path))
        with open(path) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ['x', 'u', 'in_omega']
        assert len(rows) == 33
        assert sum(int(r[2]) for r in rows[1:]) == solution.masks.n_omega
