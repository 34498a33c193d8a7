"""
Catalog of the fixed experiments

Each case names its domain, operator, forcing, boundary data, reference
solution and default parameter lists. Forcings and exact solutions live here
as code; the config file only overrides parameters.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from services.EllipticSolver.elliptic_solver import BcKind, BcSpec
from services.Evolution.evolution import HeatProblem
from services.Extension.extension import Forcing, RegularityPath
from services.Geometry.geometry import BoundaryDiscretization, Domain, DomainSpec
from services.SpectralCore.spectral_core import OperatorSymbol
from shared.error_utils import ConfigurationError


class CaseKind(Enum):
    EXTENSION = "extension"
    POISSON = "poisson"
    HEAT = "heat"
    EIGS = "eigs"


class ReferenceKind(Enum):
    EXACT = "exact"
    MANUFACTURED = "manufactured"
    FINEST_GRID = "finest-grid"
    DECAY = "decay"


INTERVAL = DomainSpec.interval(2.0, 5.0)
DISC = DomainSpec.disc_complement((2.0, 3.0), 1.0)
EYE = DomainSpec.eye((3.0, 3.0), 3.0, 3.0 * np.pi / 4.0)
DIAMOND = DomainSpec.diamond((3.0, 3.5), 3.0)

N_VALUES_1D = [16, 32, 64, 128, 256, 512, 1024]
N_VALUES_2D = [32, 64, 128, 256]

# u = (x-1) ln(x-1) + C1 x + C2 with u'' = 1/(x-1)
DIRICHLET_C1 = (-2.0 - 4.0 * math.log(4.0)) / 3.0
DIRICHLET_C2 = 1.0 - 2.0 * DIRICHLET_C1
MIXED_C1 = 0.0
MIXED_C2 = -1.0 - 4.0 * math.log(4.0)


def pole_forcing() -> Forcing:
    """f = 1/(x-1), singular outside Ω at x = 1"""
    def traces(points: np.ndarray, normals: np.ndarray, l: int) -> np.ndarray:
        x, n = points[:, 0], normals[:, 0]
        return n ** l * (-1) ** l * math.factorial(l) / (x - 1.0) ** (l + 1)
    return Forcing(func=lambda x: 1.0 / (x - 1.0), normal_derivatives=traces)


def pole_solution(c1: float, c2: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda x: (x - 1.0) * np.log(x - 1.0) + c1 * x + c2


def wave(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """e^{sin x} cos y"""
    return np.exp(np.sin(x)) * np.cos(y)


def wave_laplacian(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.exp(np.sin(x)) * np.cos(y) * (np.cos(x) ** 2 - np.sin(x) - 1.0)


def wave_heat_solution(t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return wave(x, y) * np.cos(t)


def wave_heat_forcing(t: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """u_t - Δu for u = e^{sin x} cos y cos t"""
    return -wave(x, y) * np.sin(t) - np.cos(t) * wave_laplacian(x, y)


def _dirichlet_from(g: Callable[..., np.ndarray]) -> Callable[[BoundaryDiscretization], BcSpec]:
    return lambda nodes: BcSpec.from_function(nodes, g)


@dataclass(frozen=True)
class CatalogCase:
    case_id: str
    description: str
    kind: CaseKind
    domain_spec: DomainSpec
    reference: ReferenceKind
    defaults: Dict[str, Any]
    operator: OperatorSymbol = field(default_factory=OperatorSymbol.laplacian)
    forcing: Optional[Forcing] = None
    bc: Optional[Callable[[BoundaryDiscretization], BcSpec]] = None
    exact: Optional[Callable[..., np.ndarray]] = None
    path: RegularityPath = RegularityPath.GLOBAL_FIELD
    heat: Optional[Callable[[Domain], HeatProblem]] = None

    def domain(self) -> Domain:
        return self.domain_spec.build()

    def heat_problem(self) -> HeatProblem:
        if self.heat is None:
            raise ConfigurationError(f"Case {self.case_id} is not a time-dependent problem")
        return self.heat(self.domain())


def _heat_1d(domain: Domain) -> HeatProblem:
    return HeatProblem(
        name='heat_1d',
        forcing=lambda t, x: np.sin(x),
        initial=lambda x: np.exp(np.sin(x)),
        domain=domain,
        boundary=lambda t, points: np.where(points[:, 0] < 3.5, 1.0, 0.0),
    )


def _heat_2d(domain: Domain) -> HeatProblem:
    return HeatProblem(
        name='heat_2d',
        forcing=wave_heat_forcing,
        initial=lambda x, y: wave_heat_solution(0.0, x, y),
        domain=domain,
        boundary=lambda t, points: wave_heat_solution(t, points[:, 0], points[:, 1]),
        exact=wave_heat_solution,
    )


_CASES: List[CatalogCase] = [
    CatalogCase(
        case_id='extension_1d',
        description='Fourier continuation of 1/(x-1) from (2,5)',
        kind=CaseKind.EXTENSION,
        domain_spec=INTERVAL,
        reference=ReferenceKind.DECAY,
        defaults={'n_values': [4096], 'k_values': [0, 1, 2, 3]},
        forcing=pole_forcing(),
        path=RegularityPath.ANALYTIC,
    ),
    CatalogCase(
        case_id='poisson_1d_dirichlet',
        description='u_xx = 1/(x-1) on (2,5), u(2) = 1, u(5) = -1',
        kind=CaseKind.POISSON,
        domain_spec=INTERVAL,
        reference=ReferenceKind.EXACT,
        defaults={'n_values': N_VALUES_1D, 'k_values': [-1, 0, 1, 2]},
        forcing=pole_forcing(),
        bc=lambda nodes: BcSpec.dirichlet([1.0, -1.0]),
        exact=pole_solution(DIRICHLET_C1, DIRICHLET_C2),
        path=RegularityPath.ANALYTIC,
    ),
    CatalogCase(
        case_id='poisson_1d_mixed',
        description='u_xx = 1/(x-1) on (2,5), u_x(2) = 1, u(5) = -1',
        kind=CaseKind.POISSON,
        domain_spec=INTERVAL,
        reference=ReferenceKind.EXACT,
        defaults={'n_values': N_VALUES_1D, 'k_values': [0, 1, 2]},
        forcing=pole_forcing(),
        # outward normal at x = 2 is -1, so u_x = 1 becomes ∂_n u = -1
        bc=lambda nodes: BcSpec((BcKind.NEUMANN, BcKind.DIRICHLET), [-1.0, -1.0]),
        exact=pole_solution(MIXED_C1, MIXED_C2),
        path=RegularityPath.ANALYTIC,
    ),
    CatalogCase(
        case_id='heat_1d',
        description='u_t - u_xx = sin x on (2,5), u0 = e^{sin x}, u(t,2) = 1, u(t,5) = 0',
        kind=CaseKind.HEAT,
        domain_spec=INTERVAL,
        reference=ReferenceKind.FINEST_GRID,
        defaults={'n_values': [32, 64, 128, 256], 'k_values': [0, 1], 'dt': 2.5e-3, 'T': 1.0,
                  'jump_start': 'euler'},
        heat=_heat_1d,
    ),
    CatalogCase(
        case_id='poisson_2d_disc',
        description='-Δu = 5 sin x cos y outside the disc |x - (2,3)| <= 1, u = 0 on the circle',
        kind=CaseKind.POISSON,
        domain_spec=DISC,
        reference=ReferenceKind.FINEST_GRID,
        defaults={'n_values': N_VALUES_2D, 'k_values': [-1, 0, 1]},
        forcing=Forcing(func=lambda x, y: -5.0 * np.sin(x) * np.cos(y), smooth_on_box=True),
        bc=lambda nodes: BcSpec.homogeneous(nodes.n_b),
    ),
    CatalogCase(
        case_id='poisson_2d_eye',
        description='Manufactured u = e^{sin x} cos y on the eye (R = 3, Θ = 3π/4)',
        kind=CaseKind.POISSON,
        domain_spec=EYE,
        reference=ReferenceKind.MANUFACTURED,
        defaults={'n_values': N_VALUES_2D, 'k_values': [-1, 0, 1]},
        forcing=Forcing(func=wave_laplacian, smooth_on_box=True),
        bc=_dirichlet_from(wave),
        exact=wave,
    ),
    CatalogCase(
        case_id='poisson_2d_diamond',
        description='Manufactured u = e^{sin x} cos y on the diamond (s = 3)',
        kind=CaseKind.POISSON,
        domain_spec=DIAMOND,
        reference=ReferenceKind.MANUFACTURED,
        defaults={'n_values': N_VALUES_2D, 'k_values': [-1, 0, 1]},
        forcing=Forcing(func=wave_laplacian, smooth_on_box=True),
        bc=_dirichlet_from(wave),
        exact=wave,
    ),
    CatalogCase(
        case_id='heat_2d',
        description='u_t - Δu = f outside the disc, exact u = e^{sin x} cos y cos t',
        kind=CaseKind.HEAT,
        domain_spec=DISC,
        reference=ReferenceKind.EXACT,
        defaults={'n_values': [32, 64, 128], 'k_values': [0, 1], 'dt_rule': 'quarter_grid', 'T': 2.0,
                  'jump_start': 'exact'},
        heat=_heat_2d,
        path=RegularityPath.MASKED_FIELD,
    ),
    CatalogCase(
        case_id='eigs_disc',
        description='Dirichlet eigenvalues of -Δ outside the disc',
        kind=CaseKind.EIGS,
        domain_spec=DISC,
        reference=ReferenceKind.FINEST_GRID,
        defaults={'n_values': [128], 'k_values': [-1], 'shifts': [0.1], 'tau': 1e-8},
    ),
    CatalogCase(
        case_id='eigs_eye',
        description='Dirichlet eigenvalues of -Δ on the eye',
        kind=CaseKind.EIGS,
        domain_spec=EYE,
        reference=ReferenceKind.FINEST_GRID,
        defaults={'n_values': [128], 'k_values': [-1], 'shifts': [1.1], 'tau': 1e-8},
    ),
    CatalogCase(
        case_id='eigs_diamond',
        description='Dirichlet eigenvalues of -Δ on the diamond',
        kind=CaseKind.EIGS,
        domain_spec=DIAMOND,
        reference=ReferenceKind.FINEST_GRID,
        defaults={'n_values': [128], 'k_values': [-1], 'shifts': [2.1, 5.3, 8.6], 'tau': 1e-8},
    ),
]

CATALOG: Dict[str, CatalogCase] = {case.case_id: case for case in _CASES}


def get_case(case_id: str) -> CatalogCase:
    try:
        return CATALOG[case_id]
    except KeyError:
        raise ConfigurationError(
            f"Unknown case '{case_id}'; known cases: {', '.join(sorted(CATALOG))}"
        ) from None


def list_cases() -> List[CatalogCase]:
    return [CATALOG[case_id] for case_id in sorted(CATALOG)]
