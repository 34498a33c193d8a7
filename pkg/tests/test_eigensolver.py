"""
Tests for shifted inverse power iteration
"""
import csv
import math

import numpy as np
import pytest

import services.EigenSolver.eigensolver as eigensolver
from services.EigenSolver.eigensolver import (
    EigConfig,
    EigResult,
    _merge,
    _stalled,
    inverse_power,
    scan_spectrum,
    validate_shift,
    write_eig_csv,
)
from services.Geometry.geometry import grid_masks
from shared.error_utils import InvalidParameterError, NonConvergenceError, ShiftRejectedError

DIAMOND_LAMBDA_1 = 2 * math.pi ** 2 / 9


def _result(eigenvalue: float, deviation: float = 1e-10, converged: bool = True, sigma: float = 0.0) -> EigResult:
    return EigResult(sigma=sigma, eigenvalue=eigenvalue, field=None, iterations=3,
                     deviations=[1.0, deviation], converged=converged, measure=9.0)


class TestValidateShift:

    def test_sum_of_two_squares_rejected_in_2d(self):
        with pytest.raises(ShiftRejectedError) as info:
            validate_shift(5.0, 2)
        assert info.value.lattice_value == 5

    def test_off_lattice_shift_accepted(self):
        validate_shift(0.3, 2)
        validate_shift(5.0 + 1e-6, 2)

    def test_non_square_accepted_in_1d(self):
        validate_shift(2.0, 1)
        with pytest.raises(ShiftRejectedError):
            validate_shift(4.0, 1)

    def test_zero_is_always_singular(self):
        with pytest.raises(ShiftRejectedError):
            validate_shift(1e-10, 2)

    def test_unresolved_modes_do_not_count(self):
        validate_shift(9.0, 1, N=4)
        with pytest.raises(ShiftRejectedError):
            validate_shift(9.0, 1, N=8)

    def test_lattice_bound_is_on_the_sum(self):
        validate_shift(16.0, 2, N=4)
        with pytest.raises(ShiftRejectedError):
            validate_shift(16.0, 2, N=6)
        with pytest.raises(ShiftRejectedError):
            validate_shift(9.0, 2, N=6)


class TestEigConfig:

    def test_tolerance_positive(self):
        with pytest.raises(InvalidParameterError):
            EigConfig(sigma=1.1, tau=0.0)

    def test_iterations_positive(self):
        with pytest.raises(InvalidParameterError):
            EigConfig(sigma=1.1, max_iters=0)


class TestMerge:

    def test_duplicates_keep_best_deviation(self):
        merged = _merge([_result(2.0, 1e-9), _result(5.0), _result(2.0 + 1e-8, 1e-12)])
        assert [r.eigenvalue for r in merged] == [2.0 + 1e-8, 5.0]
        assert merged[0].final_deviation == 1e-12

    def test_distinct_values_sorted(self):
        merged = _merge([_result(3.0), _result(1.0), _result(2.0)])
        assert [r.eigenvalue for r in merged] == [1.0, 2.0, 3.0]


class TestScanSpectrum:

    def test_failures_follow_converged_and_rejections_skipped(self, diamond, mocker):
        def fake(config, domain):
            if config.sigma == 5.0:
                raise ShiftRejectedError(5.0, 5)
            if config.sigma == 8.6:
                raise NonConvergenceError("stalled", _result(8.7, 1e-3, converged=False, sigma=8.6))
            return _result(2.19 if config.sigma < 3 else 5.48, sigma=config.sigma)

        mocker.patch.object(eigensolver, 'inverse_power', side_effect=fake)
        results = scan_spectrum([8.6, 2.1, 5.0, 5.3, 2.2], EigConfig(sigma=0.0), diamond, max_workers=2)
        assert [r.eigenvalue for r in results] == [2.19, 5.48, 8.7]
        assert [r.converged for r in results] == [True, True, False]


class TestInversePower:

    def test_non_convergence_carries_result(self, diamond):
        config = EigConfig(sigma=2.1, tau=1e-30, max_iters=1, N=16)
        with pytest.raises(NonConvergenceError) as info:
            inverse_power(config, diamond)
        result = info.value.result
        assert result.iterations == 1
        assert not result.converged
        assert len(result.deviations) == 1

    def test_rejected_shift(self, diamond):
        with pytest.raises(ShiftRejectedError):
            inverse_power(EigConfig(sigma=2.0, N=16), diamond)

    def test_diamond_ground_state(self, diamond):
        result = inverse_power(EigConfig(sigma=2.1, tau=1e-8, N=32, k=0), diamond)
        assert result.converged
        assert result.eigenvalue == pytest.approx(DIAMOND_LAMBDA_1, rel=2e-2)
        assert result.scaled_eigenvalue == pytest.approx(result.eigenvalue * 9.0)
        assert result.deviations[-1] <= 1e-8

    def test_normalized_in_omega_and_deviations_shrink(self, diamond):
        result = inverse_power(EigConfig(sigma=2.1, tau=1e-8, N=32, k=-1), diamond)
        grid = result.field.grid
        omega = grid_masks(diamond, grid).omega
        norm = math.sqrt(grid.cell_volume * np.sum(result.field.data[omega] ** 2))
        assert norm == pytest.approx(1.0, abs=1e-12)
        tail = result.deviations[1:]
        assert tail[-1] < 1e-3 * tail[0]

    def test_seed_fixes_the_start(self, diamond):
        config = EigConfig(sigma=2.1, tau=1e-30, max_iters=2, N=16)

        def partial_eigenvalue():
            with pytest.raises(NonConvergenceError) as info:
                inverse_power(config, diamond)
            return info.value.result.eigenvalue

        assert partial_eigenvalue() == partial_eigenvalue()

    def test_converged_mode_satisfies_the_eigen_problem(self, diamond):
        result = inverse_power(EigConfig(sigma=2.1, tau=1e-8, N=32, k=0), diamond)
        assert result.residual <= 1e-5
        assert result.boundary_max <= 1e-6
        assert not result.clustered

    def test_nearby_shifts_find_the_same_eigenvalue(self, diamond):
        eigenvalues = [inverse_power(EigConfig(sigma=sigma, tau=1e-8, N=32, k=0), diamond).eigenvalue
                       for sigma in (2.1, 2.3)]
        assert eigenvalues[0] == pytest.approx(eigenvalues[1], abs=1e-6)

    def test_deviations_decay_geometrically(self, diamond):
        result = inverse_power(EigConfig(sigma=2.1, tau=1e-8, N=32, k=0), diamond)
        tail = result.deviations[2:]
        assert len(tail) >= 2
        assert all(b <= 0.99 * a for a, b in zip(tail[:-1], tail[1:]))

    @pytest.mark.slow
    @pytest.mark.parametrize("sigma,expected", [(2.1, DIAMOND_LAMBDA_1), (8.6, 8 * math.pi ** 2 / 9)])
    def test_diamond_eigenvalues_fine_grid(self, diamond, sigma, expected):
        result = inverse_power(EigConfig(sigma=sigma, tau=1e-10, N=128, k=0), diamond)
        assert result.eigenvalue == pytest.approx(expected, abs=1e-3)


class TestStall:

    def test_needs_three_changes(self):
        assert not _stalled([1.0, 1.0])

    def test_flat_changes_have_stalled(self):
        assert _stalled([1.0, 0.5, 0.499])

    def test_shrinking_changes_have_not(self):
        assert not _stalled([1.0, 0.5, 0.25])


class TestEigCsv:

    def test_columns(self, tmp_path):
        path = tmp_path / "eigs.csv"
        write_eig_csv([_result(2.0), _result(5.0, converged=False)], str(path))
        with open(path) as f:
            rows = list(csv.reader(f))
        assert rows[0][:3] == ['shift', 'eigenvalue', 'scaled_eigenvalue']
        assert float(rows[1][2]) == pytest.approx(18.0)
        assert rows[2][-1] == '0'
        assert np.isfinite(float(rows[1][4]))
