"""
Tests for rate fits and the convergence file formats
"""
import csv
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from services.Harness.convergence import (
    CSV_COLUMNS,
    CellFailure,
    ConvergenceRecord,
    ConvergenceRow,
    emit,
    estimate_rate,
    estimate_subgeometric_rate,
)
from shared.error_utils import InvalidParameterError

NS = [16, 32, 64, 128, 256]


class TestEstimateRate:

    def test_cubic(self):
        estimate = estimate_rate([(n, n ** -3.0) for n in NS])
        assert estimate.slope == pytest.approx(-3.0)
        assert all(p == pytest.approx(3.0) for p in estimate.pairwise)
        assert not estimate.saturated

    @given(st.floats(min_value=0.5, max_value=6.0), st.floats(min_value=1e-2, max_value=1e2))
    def test_recovers_power_laws(self, p, c):
        estimate = estimate_rate([(n, c * float(n) ** -p) for n in [32, 64, 128]])
        assert estimate.slope == pytest.approx(-p, abs=1e-9)

    def test_scaled_fifth_order(self):
        assert estimate_rate([(n, 7 * n ** -5.0) for n in NS[:3]]).slope == pytest.approx(-5.0)

    def test_order_of_points_is_irrelevant(self):
        errors = [(n, n ** -2.0) for n in NS]
        assert estimate_rate(errors[::-1]).slope == pytest.approx(estimate_rate(errors).slope)

    def test_too_few_points(self):
        with pytest.raises(InvalidParameterError):
            estimate_rate([(16, 1e-3), (32, 1e-4)])

    def test_floor_points_are_dropped(self):
        estimate = estimate_rate([(16, 1e-4), (32, 1e-6), (64, 1e-8), (128, 1e-13), (256, 2e-13)])
        assert estimate.n_used == 3
        assert estimate.slope == pytest.approx(-2 * math.log(10) / math.log(2))

    def test_saturated(self):
        estimate = estimate_rate([(16, 1e-5), (32, 1e-13), (64, 0.0)])
        assert estimate.saturated
        assert math.isnan(estimate.slope)
        assert not estimate.defined
        assert math.isnan(estimate.pairwise[-1])

    def test_subgeometric(self):
        errors = [(n, 3.0 * math.exp(-0.8 * math.sqrt(n))) for n in [16, 64, 256]]
        assert estimate_subgeometric_rate(errors) == pytest.approx(0.8)


class TestConvergenceRecord:

    def _record(self) -> ConvergenceRecord:
        rows = [ConvergenceRow('demo', k, n, 2, k + 2, n ** -(k + 2.0)) for k in (1, 0) for n in (64, 16, 32)]
        return ConvergenceRecord('demo', 'exact', rows)

    def test_rates_per_k(self):
        record = self._record().with_rates()
        assert record.rate_for(0) == pytest.approx(-2.0)
        assert record.rate_for(1) == pytest.approx(-3.0)
        assert record.rate_for(5) is None

    def test_short_sequences_keep_nan(self):
        record = ConvergenceRecord('demo', 'exact', [ConvergenceRow('demo', 0, 16, 2, 2, 1e-3)]).with_rates()
        assert record.rate_for(0) is None

    def test_saturation_is_recorded(self, tmp_path):
        rows = [ConvergenceRow('demo', 1, n, 2, 3, e) for n, e in [(16, 1e-5), (32, 1e-13), (64, 0.0)]]
        rows += [ConvergenceRow('demo', 0, n, 2, 2, n ** -2.0) for n in (16, 32, 64)]
        record = ConvergenceRecord('demo', 'finest-grid', rows).with_rates()
        assert record.rate_for(1) is None
        assert record.saturated_for(1)
        assert not record.saturated_for(0)
        assert not record.saturated_for(7)
        with open(emit(record, str(tmp_path))['meta']) as f:
            rates = json.load(f)['rates']
        assert rates['1'] == {'slope': None, 'saturated': True, 'n_used': 1}
        assert rates['0']['slope'] == pytest.approx(-2.0)

    def test_sorted_rows(self):
        assert [(r.k, r.N) for r in self._record().sorted_rows()] == [
            (0, 16), (0, 32), (0, 64), (1, 16), (1, 32), (1, 64)
        ]


class TestEmit:

    def test_single_row(self, tmp_path):
        record = ConvergenceRecord('demo', 'exact', [ConvergenceRow('demo', 0, 16, 2, 2, 0.5)])
        paths = emit(record, str(tmp_path))
        with open(paths['csv']) as f:
            rows = list(csv.reader(f))
        assert rows[0] == CSV_COLUMNS
        assert rows[1][:5] == ['demo', '0', '16', '2', '2']
        assert float(rows[1][5]) == 0.5
        assert rows[1][6] == 'nan'

    def test_reemit_is_byte_identical(self, tmp_path):
        rows = [ConvergenceRow('demo', k, n, 2, 3, 1.0 / n) for k in (0, 1) for n in (16, 32, 64)]
        record = ConvergenceRecord('demo', 'exact', rows, metadata={'seed': 1}).with_rates()
        first = emit(record, str(tmp_path / 'a'))
        shuffled = ConvergenceRecord('demo', 'exact', rows[::-1], metadata={'seed': 1}).with_rates()
        second = emit(shuffled, str(tmp_path / 'b'))
        for key in ('csv', 'dat', 'meta'):
            with open(first[key], 'rb') as a, open(second[key], 'rb') as b:
                assert a.read() == b.read()

    def test_dat_blocks_per_k(self, tmp_path):
        rows = [ConvergenceRow('demo', k, n, 2, 3, 1.0 / n) for k in (0, 1) for n in (16, 32)]
        paths = emit(ConvergenceRecord('demo', 'exact', rows), str(tmp_path))
        with open(paths['dat']) as f:
            text = f.read()
        assert text.startswith('# case k N quantity value\n')
        blocks = text.split('\n', 1)[1].strip('\n').split('\n\n')
        assert len(blocks) == 2
        for k, block in enumerate(blocks):
            lines = block.splitlines()
            assert len(lines) == 4
            assert all(line.split()[1] == str(k) for line in lines)
        assert 'demo 0 16 error_inf 6.25000000000000000e-02' in text

    def test_metadata_records_failures(self, tmp_path):
        record = ConvergenceRecord('demo', 'finest-grid', failures=[CellFailure(1, 64, 'boom')],
                                   metadata={'seed': 20200101})
        paths = emit(record, str(tmp_path))
        with open(paths['meta']) as f:
            meta = json.load(f)
        assert meta['reference'] == 'finest-grid'
        assert meta['failures'] == [{'k': 1, 'N': 64, 'error': 'boom'}]
        assert meta['seed'] == 20200101
