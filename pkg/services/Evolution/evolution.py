"""
Time integration of u_t - Δu = f(t, x) on Ω

BDF-4 reduces every step to a Helmholtz problem (I - αΔ)u^{n+1} = F^{n+1}
with α = 12Δt/25 and

    F^{n+1} = (12Δt f^{n+1} + 48u^n - 36u^{n-1} + 16u^{n-2} - 3u^{n-3}) / 25

The first three steps come from Backward Euler (α = Δt, F = Δt f + u^n) or
from an exact solution. The machinery of each step kind is assembled once.
Regularity rows default to the masked form T_k*(χ_Ω h) = T_k*(χ_Ω F^{n+1}),
which reads F^{n+1} on Ω only; rows built from closed-form mode traces let
growing spurious modes into the iteration.
"""
import csv
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Deque, List, Optional, Union

import numpy as np

from services.EllipticSolver.elliptic_solver import SfeSolver, Solution
from services.Extension.extension import RegularityPath
from services.Extension.min_norm import RANK_TOLERANCE
from services.Geometry.geometry import Domain, boundary_nodes, grid_masks
from services.SpectralCore.spectral_core import Grid, GridField, OperatorSymbol, invert_helmholtz
from shared.error_utils import BlowUpError, ConfigurationError, InvalidParameterError
from shared.logging_config import get_logger

logger = get_logger(__name__)

BDF4_HISTORY_WEIGHTS = (48.0, -36.0, 16.0, -3.0)
BDF4_FORCING_WEIGHT = 12.0
BDF4_DENOMINATOR = 25.0
HISTORY_LENGTH = 4
BLOW_UP_FACTOR = 1e6
STEP_COUNT_TOLERANCE = 1e-9


class StartScheme(Enum):
    BDF4_WITH_EULER_START = "bdf4_with_euler_start"
    BDF4_WITH_EXACT_HISTORY = "bdf4_with_exact_history"


class StepKind(Enum):
    EULER = "euler"
    BDF4 = "bdf4"


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    T: float
    k: int = 0
    scheme: StartScheme = StartScheme.BDF4_WITH_EULER_START
    reuse_machinery: bool = True
    blow_up_factor: float = BLOW_UP_FACTOR
    regularity_path: RegularityPath = RegularityPath.MASKED_FIELD
    rank_tolerance: float = RANK_TOLERANCE

    def __post_init__(self):
        if not self.dt > 0:
            raise InvalidParameterError(f"Time step must be positive, got {self.dt}")
        if not self.T > 0:
            raise InvalidParameterError(f"Final time must be positive, got {self.T}")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > STEP_COUNT_TOLERANCE * max(1.0, ratio):
            raise InvalidParameterError(f"T={self.T} is not an integer multiple of dt={self.dt}")

    @classmethod
    def quarter_grid_rule(cls, N: int, T: float, **kwargs) -> 'StepperConfig':
        """Δt = 1/(4N)"""
        return cls(dt=1.0 / (4 * N), T=T, **kwargs)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


def step_alpha(kind: StepKind, dt: float) -> float:
    if kind is StepKind.BDF4:
        return BDF4_FORCING_WEIGHT * dt / BDF4_DENOMINATOR
    return dt


class History:
    """Last four solutions, newest first"""

    def __init__(self, grid: Grid):
        self.grid = grid
        self._fields: Deque[np.ndarray] = deque(maxlen=HISTORY_LENGTH)

    def push(self, values: np.ndarray) -> None:
        if values.shape != self.grid.shape:
            raise ConfigurationError(
                f"History field of shape {values.shape} does not match grid {self.grid.shape}"
            )
        self._fields.appendleft(np.asarray(values, dtype=float))

    def __len__(self) -> int:
        return len(self._fields)

    @property
    def full(self) -> bool:
        return len(self._fields) == HISTORY_LENGTH

    @property
    def latest(self) -> np.ndarray:
        return self._fields[0]

    def bdf4_combination(self) -> np.ndarray:
        """48u^n - 36u^{n-1} + 16u^{n-2} - 3u^{n-3}"""
        if not self.full:
            raise ConfigurationError(f"BDF-4 needs {HISTORY_LENGTH} history fields, have {len(self)}")
        return sum(w * u for w, u in zip(BDF4_HISTORY_WEIGHTS, self._fields))


@dataclass
class PeriodicSolution:
    field: GridField

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.data


class SfeStepSolver:
    """Helmholtz machinery of one step kind on an embedded domain"""

    def __init__(self, domain: Domain, grid: Grid, dt: float, k: int, kind: StepKind,
                 path: RegularityPath = RegularityPath.MASKED_FIELD,
                 rank_tolerance: float = RANK_TOLERANCE):
        self.grid = grid
        self.dt = dt
        self.kind = kind
        self.alpha = step_alpha(kind, dt)
        self.solver = SfeSolver(domain, grid, OperatorSymbol.helmholtz(self.alpha), k,
                                path=path, rank_tolerance=rank_tolerance)

    @property
    def nodes(self):
        return self.solver.nodes

    def step(self, rhs_field: np.ndarray, bc_values: Optional[np.ndarray]) -> Solution:
        traces = self.solver.regularity_traces(global_values=rhs_field)
        return self.solver.solve(rhs_field, bc_values, traces)


class PeriodicStepSolver:
    """The same steps on the whole torus, with no boundary"""

    def __init__(self, grid: Grid, dt: float, kind: StepKind):
        self.grid = grid
        self.dt = dt
        self.kind = kind
        self.alpha = step_alpha(kind, dt)

    def step(self, rhs_field: np.ndarray, bc_values: Optional[np.ndarray] = None) -> PeriodicSolution:
        return PeriodicSolution(invert_helmholtz(GridField.from_values(self.grid, rhs_field), self.alpha))


StepMachinery = Union[SfeStepSolver, PeriodicStepSolver]
StepResult = Union[Solution, PeriodicSolution]


def _check_machinery(machinery: StepMachinery, kind: StepKind, grid: Grid) -> None:
    if machinery.kind is not kind:
        raise ConfigurationError(f"{kind.value} step given {machinery.kind.value} machinery")
    if machinery.grid != grid:
        raise ConfigurationError(f"Machinery grid N={machinery.grid.N} does not match N={grid.N}")


def bdf4_step(history: History, f_next: np.ndarray, g_next: Optional[np.ndarray],
              machinery: StepMachinery) -> StepResult:
    _check_machinery(machinery, StepKind.BDF4, history.grid)
    rhs_field = (BDF4_FORCING_WEIGHT * machinery.dt * f_next
                 + history.bdf4_combination()) / BDF4_DENOMINATOR
    return machinery.step(rhs_field, g_next)


def euler_step(u_prev: np.ndarray, f_next: np.ndarray, g_next: Optional[np.ndarray],
               machinery: StepMachinery) -> StepResult:
    _check_machinery(machinery, StepKind.EULER, machinery.grid)
    if u_prev.shape != machinery.grid.shape:
        raise ConfigurationError(f"Previous field shape {u_prev.shape} does not match the machinery grid")
    return machinery.step(machinery.dt * f_next + u_prev, g_next)


@dataclass(frozen=True)
class HeatProblem:
    """
    u_t - Δu = f(t, x) with u = g(t, s) on ∂Ω and u(0, x) = u0(x)

    forcing, initial and exact take coordinates as separate arrays and must
    be smooth on the whole box; boundary takes (t, points) and returns one
    value per node. domain None means the whole torus.
    """
    name: str
    forcing: Callable[..., np.ndarray]
    initial: Callable[..., np.ndarray]
    domain: Optional[Domain] = None
    boundary: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    exact: Optional[Callable[..., np.ndarray]] = None


@dataclass(frozen=True)
class TraceRow:
    step: int
    t: float
    error_inf: float
    field_max: float


@dataclass
class RunResult:
    final: StepResult
    trace: List[TraceRow] = field(default_factory=list)
    scheme: StartScheme = StartScheme.BDF4_WITH_EULER_START

    @property
    def final_error(self) -> float:
        return self.trace[-1].error_inf if self.trace else math.nan


class _Stepper:
    """Time loop shared by embedded and periodic runs"""

    def __init__(self, problem: HeatProblem, grid: Grid, config: StepperConfig):
        self.problem = problem
        self.grid = grid
        self.config = config
        if problem.domain is not None:
            self.nodes = boundary_nodes(problem.domain, grid.N)
            self.omega = grid_masks(problem.domain, grid).omega
        else:
            self.nodes = None
            self.omega = np.ones(grid.shape, dtype=bool)
        self._machinery = {}

    def machinery(self, kind: StepKind) -> StepMachinery:
        if self.config.reuse_machinery and kind in self._machinery:
            return self._machinery[kind]
        if self.problem.domain is None:
            built = PeriodicStepSolver(self.grid, self.config.dt, kind)
        else:
            built = SfeStepSolver(self.problem.domain, self.grid, self.config.dt, self.config.k, kind,
                                  self.config.regularity_path, self.config.rank_tolerance)
        self._machinery[kind] = built
        return built

    def forcing_at(self, t: float) -> np.ndarray:
        return self.grid.sample(lambda *x: self.problem.forcing(t, *x))

    def boundary_at(self, t: float) -> Optional[np.ndarray]:
        if self.nodes is None:
            return None
        if self.problem.boundary is None:
            return np.zeros(self.nodes.n_b)
        return np.broadcast_to(
            np.asarray(self.problem.boundary(t, self.nodes.points), dtype=float), (self.nodes.n_b,)
        )

    def exact_at(self, t: float) -> np.ndarray:
        return self.grid.sample(lambda *x: self.problem.exact(t, *x))

    def error_at(self, values: np.ndarray, t: float) -> float:
        if self.problem.exact is None:
            return math.nan
        return float(np.max(np.abs(values - self.exact_at(t))[self.omega]))

    def run(self) -> RunResult:
        config = self.config
        dt, n_steps = config.dt, config.n_steps
        u0 = self.grid.sample(self.problem.initial)
        limit = config.blow_up_factor * (1.0 + float(np.abs(u0).max()))

        history = History(self.grid)
        history.push(u0)
        result = RunResult(final=None, scheme=config.scheme)
        n_start = min(HISTORY_LENGTH - 1, n_steps)

        if config.scheme is StartScheme.BDF4_WITH_EXACT_HISTORY:
            if self.problem.exact is None:
                raise ConfigurationError(f"{self.problem.name}: exact history needs an exact solution")
            if n_steps < HISTORY_LENGTH:
                raise ConfigurationError(f"Exact-history start needs at least {HISTORY_LENGTH} steps")
            for n in range(1, n_start + 1):
                history.push(self.exact_at(n * dt))
        else:
            for n in range(1, n_start + 1):
                t = n * dt
                solved = euler_step(history.latest, self.forcing_at(t), self.boundary_at(t),
                                    self.machinery(StepKind.EULER))
                self._record(result, history, solved, n, t, limit)

        for n in range(n_start + 1, n_steps + 1):
            t = n * dt
            solved = bdf4_step(history, self.forcing_at(t), self.boundary_at(t),
                               self.machinery(StepKind.BDF4))
            self._record(result, history, solved, n, t, limit)

        logger.info(
            f"[EVOLUTION] {self.problem.name}: {n_steps} steps of dt={dt:.3e} at N={self.grid.N}, "
            f"scheme {config.scheme.value}, final error {result.final_error:.3e}"
        )
        return result

    def _record(self, result: RunResult, history: History, solved: StepResult,
                n: int, t: float, limit: float) -> None:
        values = solved.values
        norm = float(np.abs(values).max())
        if not np.isfinite(norm) or norm > limit:
            logger.error(f"[EVOLUTION] {self.problem.name}: blow-up at step {n}, ‖u‖={norm:.3e}")
            raise BlowUpError(n, norm, limit)
        history.push(values)
        result.final = solved
        result.trace.append(TraceRow(n, t, self.error_at(values, t), norm))
        logger.debug(f"[EVOLUTION] step {n} t={t:.6f} max={norm:.6e}")


def run(problem: HeatProblem, config: StepperConfig, N: int) -> RunResult:
    d = problem.domain.d if problem.domain is not None else 1
    return _Stepper(problem, Grid(d, N), config).run()


def run_periodic(problem: HeatProblem, config: StepperConfig, grid: Grid) -> RunResult:
    """Torus run with no boundary; the problem's domain is ignored"""
    if problem.domain is not None:
        problem = HeatProblem(problem.name, problem.forcing, problem.initial, exact=problem.exact)
    return _Stepper(problem, grid, config).run()


def write_trace_csv(result: RunResult, path: str) -> None:
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(['step', 't', 'error_inf', 'field_max'])
        for row in result.trace:
            writer.writerow([row.step, f"{row.t:.17e}", f"{row.error_inf:.17e}", f"{row.field_max:.17e}"])
    logger.info(f"[EVOLUTION] Wrote {len(result.trace)} trace rows to {path}")
