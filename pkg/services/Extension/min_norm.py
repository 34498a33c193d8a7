"""
Minimum-norm solution of under-determined systems through a truncated SVD
"""
from dataclasses import asdict, dataclass
from typing import Any, Dict, Tuple

import numpy as np
import scipy.linalg

from shared.error_utils import ConfigurationError
from shared.logging_config import get_logger

logger = get_logger(__name__)

RANK_TOLERANCE = 1e-12
RESIDUAL_TOLERANCE = 1e-10
INCONSISTENCY_FACTOR = 10.0


@dataclass(frozen=True)
class SolveDiagnostics:
    n_rows: int
    n_cols: int
    rank: int
    residual: float
    tolerance: float
    condition: float

    @property
    def rank_deficient(self) -> bool:
        return self.residual > self.tolerance

    @property
    def inconsistent(self) -> bool:
        """Residual more than INCONSISTENCY_FACTOR times the tolerance"""
        return self.residual > INCONSISTENCY_FACTOR * self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['rank_deficient'] = self.rank_deficient
        data['inconsistent'] = self.inconsistent
        return data


class MinNormFactorization:
    """
    Rank-revealing factorization of a fixed matrix, reusable across right-hand sides

    Singular values below rank_tolerance * s_max are dropped; solve() returns
    the pseudoinverse solution V_r S_r^{-1} U_r^T b.
    """

    def __init__(self, matrix: np.ndarray, rank_tolerance: float = RANK_TOLERANCE):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.size == 0:
            raise ConfigurationError(f"Cannot factor a matrix of shape {matrix.shape}")
        self.matrix = matrix
        self.rank_tolerance = rank_tolerance

        U, s, Vh = scipy.linalg.svd(matrix, full_matrices=False, lapack_driver='gesdd')
        keep = s > rank_tolerance * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
        self.rank = int(keep.sum())
        self.singular_values = s
        self._U = U[:, keep]
        self._s = s[keep]
        self._Vh = Vh[keep, :]
        self.condition = float(s[0] / self._s[-1]) if self.rank else np.inf

        if matrix.shape[0] > matrix.shape[1]:
            logger.warning(
                f"[MIN_NORM] Over-determined system {matrix.shape}; returning least-squares solution"
            )
        logger.debug(f"[MIN_NORM] Factored {matrix.shape} matrix, rank {self.rank}, cond {self.condition:.3e}")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape

    def solve(self, rhs: np.ndarray) -> Tuple[np.ndarray, SolveDiagnostics]:
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.matrix.shape[0],):
            raise ConfigurationError(
                f"Right-hand side of shape {rhs.shape} does not match {self.matrix.shape[0]} rows"
            )
        x = self._Vh.T @ ((self._U.T @ rhs) / self._s)
        residual = float(np.linalg.norm(self.matrix @ x - rhs))
        diagnostics = SolveDiagnostics(
            n_rows=self.matrix.shape[0],
            n_cols=self.matrix.shape[1],
            rank=self.rank,
            residual=residual,
            tolerance=RESIDUAL_TOLERANCE * (1.0 + float(np.linalg.norm(rhs))),
            condition=self.condition,
        )
        if diagnostics.rank_deficient:
            logger.warning(
                f"[MIN_NORM] Residual {residual:.3e} above {diagnostics.tolerance:.3e} "
                f"(rank {self.rank} of {min(self.matrix.shape)})",
                extra={'extra_fields': diagnostics.to_dict()}
            )
        return x, diagnostics

