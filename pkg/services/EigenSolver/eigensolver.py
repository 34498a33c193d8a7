"""
Dirichlet eigenvalues of -Δ on embedded domains by shifted inverse power iteration

Each iteration solves (-Δ - σ)v = u^n with v = 0 on ∂Ω through the forcing
extension, normalizes v in L²(Ω) and takes λ̃ = <u, -Δu> over Ω.
"""
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from services.EllipticSolver.elliptic_solver import SfeSolver
from services.Extension.extension import RegularityPath
from services.Extension.min_norm import RANK_TOLERANCE
from services.Geometry.geometry import Domain
from services.SpectralCore.spectral_core import Grid, GridField, OperatorSymbol, apply_multiplier, forward_transform
from shared.error_utils import InvalidParameterError, NonConvergenceError, ShiftRejectedError
from shared.logging_config import get_logger

logger = get_logger(__name__)

SHIFT_TOLERANCE = 1e-8
MERGE_TOLERANCE = 1e-6
# a vector change that shrinks by less than this per iteration has stalled
STALL_RATIO = 0.99
CLUSTER_RESIDUAL = 1e-5


def _is_sum_of_squares(n: int, d: int) -> bool:
    """n = m_1² + ... + m_d² for integers m_l"""
    if n < 0:
        return False
    if d == 1:
        m = math.isqrt(n)
        return m * m == n
    return any(_is_sum_of_squares(n - m * m, d - 1) for m in range(math.isqrt(n) + 1))


def validate_shift(sigma: float, d: int, N: Optional[int] = None) -> None:
    """Reject σ where -Δ - σ is singular on the torus (σ = Σ m_l² <= N²d/4)"""
    nearest = round(sigma)
    if abs(sigma - nearest) > SHIFT_TOLERANCE:
        return
    if N is not None and nearest > N * N * d / 4:
        return
    if _is_sum_of_squares(int(nearest), d):
        raise ShiftRejectedError(sigma, int(nearest))


@dataclass(frozen=True)
class EigConfig:
    sigma: float
    tau: float = 1e-10
    max_iters: int = 200
    N: int = 128
    k: int = -1
    seed: int = 20200101
    rank_tolerance: float = RANK_TOLERANCE

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidParameterError(f"Tolerance must be positive, got {self.tau}")
        if self.max_iters < 1:
            raise InvalidParameterError(f"max_iters must be positive, got {self.max_iters}")


@dataclass
class EigResult:
    sigma: float
    eigenvalue: float
    field: GridField
    iterations: int
    deviations: List[float]
    converged: bool
    measure: float
    reciprocal_estimate: float = math.nan
    residual: float = math.nan
    boundary_max: float = math.nan
    clustered: bool = False

    @property
    def scaled_eigenvalue(self) -> float:
        """λ̃·|Ω|"""
        return self.eigenvalue * self.measure

    @property
    def final_deviation(self) -> float:
        return self.deviations[-1] if self.deviations else math.inf


class _OmegaInnerProduct:
    """Grid quadrature over the Ω nodes"""

    def __init__(self, grid: Grid, omega: np.ndarray):
        self.weight = grid.cell_volume
        self.omega = omega

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return self.weight * float(np.sum(a[self.omega] * b[self.omega]))

    def norm(self, a: np.ndarray) -> float:
        return math.sqrt(self.inner(a, a))


def _stalled(changes: List[float]) -> bool:
    return len(changes) >= 3 and changes[-1] >= STALL_RATIO * changes[-2]


def inverse_power(config: EigConfig, domain: Domain) -> EigResult:
    grid = Grid(domain.d, config.N)
    validate_shift(config.sigma, grid.d, grid.N)
    solver = SfeSolver(domain, grid, OperatorSymbol.shifted_laplacian(config.sigma), config.k,
                       path=RegularityPath.GLOBAL_FIELD, rank_tolerance=config.rank_tolerance)
    omega = solver.masks.omega
    quadrature = _OmegaInnerProduct(grid, omega)
    minus_laplacian = grid.squared_wavenumber
    zero_data = np.zeros(solver.nodes.n_b)

    rng = np.random.default_rng(config.seed)
    u = np.zeros(grid.shape)
    u[omega] = rng.uniform(-1.0, 1.0, size=int(omega.sum()))
    u /= quadrature.norm(u)

    eigenvalue = math.nan
    mu = math.nan
    deviations: List[float] = []
    changes: List[float] = []
    converged = False
    clustered = False
    iteration = 0
    for iteration in range(1, config.max_iters + 1):
        v = solver.solve(u, zero_data, solver.regularity_traces(global_values=u)).values
        mu = quadrature.inner(v, u)
        norm_v = quadrature.norm(v)
        u_next = v / norm_v
        if quadrature.inner(u_next, u) < 0:
            u_next, norm_v = -u_next, -norm_v

        estimate = quadrature.inner(u_next, apply_multiplier(u_next, minus_laplacian, grid.d))
        change = quadrature.norm(u_next - u)
        deviation = change if iteration == 1 else max(abs(estimate - eigenvalue), change)
        deviations.append(deviation)
        changes.append(change)
        logger.debug(f"[EIGEN] σ={config.sigma} iter {iteration}: λ̃={estimate:.12f}, d={deviation:.3e}")

        value_settled = iteration > 1 and abs(estimate - eigenvalue) <= config.tau
        # on Ω, -Δu^{n+1} = σu^{n+1} + u^n/‖v‖
        residual = quadrature.norm(u / norm_v - (estimate - config.sigma) * u_next)
        u, eigenvalue = u_next, estimate
        if iteration > 1 and deviation <= config.tau:
            converged = True
            break
        if value_settled and _stalled(changes) and residual <= CLUSTER_RESIDUAL:
            # the vector drifts inside a cluster of nearly equal eigenvalues
            converged = clustered = True
            logger.info(
                f"[EIGEN] σ={config.sigma}: vector change stalled at {change:.3e} with "
                f"eigen-residual {residual:.2e}; accepting λ̃ of a near-degenerate cluster"
            )
            break

    minus_laplacian_u = apply_multiplier(u, minus_laplacian, grid.d)
    result = EigResult(
        sigma=config.sigma,
        eigenvalue=eigenvalue,
        field=GridField.from_values(grid, u),
        iterations=iteration,
        deviations=deviations,
        converged=converged,
        measure=domain.measure(),
        clustered=clustered,
        reciprocal_estimate=config.sigma + 1.0 / mu if mu else math.nan,
        residual=quadrature.norm(minus_laplacian_u - eigenvalue * u),
        boundary_max=float(np.max(np.abs(solver.evaluator.evaluate(forward_transform(u, grid.d))))),
    )
    if not converged:
        logger.error(
            f"[EIGEN] σ={config.sigma} did not converge in {config.max_iters} iterations "
            f"(d={result.final_deviation:.3e} > τ={config.tau})"
        )
        raise NonConvergenceError(
            f"Inverse power iteration with σ={config.sigma} stopped at d={result.final_deviation:.3e}",
            result,
        )
    logger.info(
        f"[EIGEN] σ={config.sigma}: λ̃={eigenvalue:.10f} (λ̃|Ω|={result.scaled_eigenvalue:.6f}) "
        f"after {iteration} iterations, residual {result.residual:.2e}"
    )
    return result


def _merge(results: List[EigResult]) -> List[EigResult]:
    merged: List[EigResult] = []
    for result in sorted(results, key=lambda r: r.eigenvalue):
        if merged:
            last = merged[-1]
            if abs(result.eigenvalue - last.eigenvalue) <= MERGE_TOLERANCE * max(1.0, abs(last.eigenvalue)):
                if result.final_deviation < last.final_deviation:
                    merged[-1] = result
                continue
        merged.append(result)
    return merged


def scan_spectrum(shifts: Sequence[float], config: EigConfig, domain: Domain,
                  max_workers: int = 1) -> List[EigResult]:
    """
    Converged eigenvalues for every shift, deduplicated and ascending

    Shifts that fail to converge contribute their partial results after the
    converged ones; rejected shifts are logged and skipped.
    """
    def attempt(sigma: float) -> Optional[EigResult]:
        try:
            return inverse_power(replace(config, sigma=float(sigma)), domain)
        except NonConvergenceError as e:
            return e.result
        except ShiftRejectedError as e:
            logger.warning(f"[EIGEN] Skipping shift {sigma}: {e}")
            return None

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        outcomes = [r for r in pool.map(attempt, shifts) if r is not None]

    converged = _merge([r for r in outcomes if r.converged])
    failed = [r for r in outcomes if not r.converged]
    logger.info(
        f"[EIGEN] Scan of {len(shifts)} shifts: {len(converged)} distinct eigenvalues, {len(failed)} failures"
    )
    return converged + failed


def write_eig_csv(results: Sequence[EigResult], path: str) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['shift', 'eigenvalue', 'scaled_eigenvalue', 'iterations',
                         'final_deviation', 'residual', 'converged'])
        for r in results:
            writer.writerow([
                f"{r.sigma:.17e}", f"{r.eigenvalue:.17e}", f"{r.scaled_eigenvalue:.17e}",
                r.iterations, f"{r.final_deviation:.17e}", f"{r.residual:.17e}", int(r.converged),
            ])
    logger.info(f"[EIGEN] Wrote {len(results)} eigenvalues to {path}")
