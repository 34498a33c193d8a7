"""
Convergence records, rate fits and their file formats
"""
import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from shared.error_utils import InvalidParameterError
from shared.logging_config import get_logger

logger = get_logger(__name__)

ERROR_FLOOR = 1e-13
FLOOR_MARGIN = 10.0
MIN_RATE_POINTS = 3
CSV_COLUMNS = ['case', 'k', 'N', 'n_b', 'J', 'error_inf', 'rate']


@dataclass(frozen=True)
class RateEstimate:
    slope: float
    pairwise: Tuple[float, ...]
    n_used: int
    saturated: bool

    @property
    def defined(self) -> bool:
        return not math.isnan(self.slope)


def estimate_rate(errors: Sequence[Tuple[int, float]], floor: float = ERROR_FLOOR) -> RateEstimate:
    """
    Least-squares slope of log e against log N

    Points at or below FLOOR_MARGIN·floor are left out of the fit. The
    pairwise entries are log(e_0/e_1) / log(N_1/N_0) over consecutive points.
    """
    if len(errors) < MIN_RATE_POINTS:
        raise InvalidParameterError(f"Rate fit needs at least {MIN_RATE_POINTS} points, got {len(errors)}")
    points = sorted((int(n), float(e)) for n, e in errors)
    pairwise = tuple(
        math.log(e0 / e1) / math.log(n1 / n0) if e0 > 0 and e1 > 0 else math.nan
        for (n0, e0), (n1, e1) in zip(points[:-1], points[1:])
    )
    usable = [(n, e) for n, e in points if e > FLOOR_MARGIN * floor]
    if len(usable) < 2:
        logger.warning(f"[HARNESS] All but {len(usable)} errors are at the floor; rate undefined")
        return RateEstimate(math.nan, pairwise, len(usable), saturated=True)

    n, e = np.array(usable, dtype=float).T
    slope = float(np.polyfit(np.log(n), np.log(e), 1)[0])
    return RateEstimate(slope, pairwise, len(usable), saturated=False)


def estimate_subgeometric_rate(errors: Sequence[Tuple[int, float]], floor: float = ERROR_FLOOR) -> float:
    """c in log e = a - c·N^{1/2}"""
    usable = [(n, e) for n, e in errors if e > FLOOR_MARGIN * floor]
    if len(usable) < 2:
        raise InvalidParameterError("Sub-geometric fit needs two errors above the floor")
    n, e = np.array(sorted(usable), dtype=float).T
    return float(-np.polyfit(np.sqrt(n), np.log(e), 1)[0])


@dataclass(frozen=True)
class ConvergenceRow:
    case: str
    k: int
    N: int
    n_b: int
    J: int
    error_inf: float
    rate: float = math.nan


@dataclass(frozen=True)
class CellFailure:
    k: int
    N: int
    error: str


@dataclass
class ConvergenceRecord:
    case: str
    reference: str
    rows: List[ConvergenceRow] = field(default_factory=list)
    failures: List[CellFailure] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def sorted_rows(self) -> List[ConvergenceRow]:
        return sorted(self.rows, key=lambda r: (r.k, r.N))

    def errors_for(self, k: int) -> List[Tuple[int, float]]:
        return [(r.N, r.error_inf) for r in self.sorted_rows() if r.k == k]

    def rate_for(self, k: int) -> Optional[float]:
        for row in self.rows:
            if row.k == k:
                return None if math.isnan(row.rate) else row.rate
        return None

    def with_rates(self, floor: float = ERROR_FLOOR) -> 'ConvergenceRecord':
        """
        Fill the rate column per k from the error sequence (left as nan with fewer than 3 points)

        Each fit is also kept in metadata['rates'] so a rate left undefined
        because the errors sit at the floor is told apart from a missing one.
        """
        rates: Dict[int, float] = {}
        fits: Dict[str, Dict[str, Any]] = {}
        for k in sorted({r.k for r in self.rows}):
            errors = self.errors_for(k)
            if len(errors) < MIN_RATE_POINTS:
                rates[k] = math.nan
                continue
            estimate = estimate_rate(errors, floor)
            rates[k] = estimate.slope
            fits[str(k)] = {
                'slope': None if math.isnan(estimate.slope) else estimate.slope,
                'saturated': estimate.saturated,
                'n_used': estimate.n_used,
            }
            logger.info(
                f"[HARNESS] {self.case} k={k}: rate {estimate.slope:.3f}, "
                f"pairwise {', '.join(f'{p:.2f}' for p in estimate.pairwise)}"
            )
        self.rows = [
            ConvergenceRow(r.case, r.k, r.N, r.n_b, r.J, r.error_inf, rates[r.k]) for r in self.rows
        ]
        self.metadata['rates'] = fits
        return self

    def saturated_for(self, k: int) -> bool:
        """True when the k errors all but reached the floor and no rate was fitted"""
        return bool(self.metadata.get('rates', {}).get(str(k), {}).get('saturated', False))


def _format(value: float) -> str:
    return f"{value:.17e}"


def emit(record: ConvergenceRecord, out_dir: str) -> Dict[str, str]:
    """
    Write <case>.csv, the long-format <case>.dat and <case>.meta.json

    Rows are ordered by (k, N) so identical records give identical files.
    """
    os.makedirs(out_dir, exist_ok=True)
    rows = record.sorted_rows()
    paths = {
        'csv': os.path.join(out_dir, f"{record.case}.csv"),
        'dat': os.path.join(out_dir, f"{record.case}.dat"),
        'meta': os.path.join(out_dir, f"{record.case}.meta.json"),
    }

    with open(paths['csv'], 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(CSV_COLUMNS)
        for r in rows:
            writer.writerow([r.case, r.k, r.N, r.n_b, r.J, _format(r.error_inf), _format(r.rate)])

    # one block per k, blank-line separated
    with open(paths["dat"], "w") as f:
        f.write("# case k N quantity value\n")
        for i, k in enumerate(sorted({r.k for r in rows})):
            if i:
                f.write("\n")
            for r in (r for r in rows if r.k == k):
                f.write(f"{r.case} {r.k} {r.N} error_inf {_format(r.error_inf)}\n")
                f.write(f"{r.case} {r.k} {r.N} rate {_format(r.rate)}\n")

    metadata = dict(record.metadata)
    metadata['reference'] = record.reference
    metadata['failures'] = [asdict(failure) for failure in record.failures]
    with open(paths['meta'], 'w') as f:
        json.dump(metadata, f, indent=2, sort_keys=True, default=str)

    logger.info(f"[HARNESS] Wrote {len(rows)} rows for {record.case} to {out_dir}")
    return paths
