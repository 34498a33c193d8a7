"""
Physical domains embedded in the periodic box [0, 2π)^d

Maps each catalog shape to:
- grid masks χ_Ω / χ_E
- boundary nodes with outward unit normals (outward from Ω)
- the closed-form measure |Ω|
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Tuple

import numpy as np

from services.SpectralCore.spectral_core import Grid
from shared.error_utils import ConfigurationError, InvalidParameterError
from shared.logging_config import get_logger

logger = get_logger(__name__)

TWO_PI = 2.0 * np.pi
MEMBERSHIP_TOLERANCE = 1e-12
MIN_BOUNDARY_GRID = 8


class DomainKind(Enum):
    INTERVAL = "interval"
    DISC_COMPLEMENT = "disc_complement"
    EYE = "eye"
    DIAMOND = "diamond"


@dataclass(frozen=True)
class DomainSpec:
    """
    Shape parameters of a catalog domain

    interval         bounds = (a, b)
    disc_complement  center, radius          Ω = box minus the closed disc
    eye              center, radius R, angle Θ  intersection of two discs
    diamond          center, side s          square rotated by 45°
    """
    kind: DomainKind
    center: Tuple[float, ...] = ()
    radius: float = 0.0
    angle: float = 0.0
    side: float = 0.0
    bounds: Tuple[float, ...] = ()

    @classmethod
    def interval(cls, a: float, b: float) -> 'DomainSpec':
        return cls(DomainKind.INTERVAL, bounds=(float(a), float(b)))

    @classmethod
    def disc_complement(cls, center: Tuple[float, float], radius: float) -> 'DomainSpec':
        return cls(DomainKind.DISC_COMPLEMENT, center=tuple(map(float, center)), radius=float(radius))

    @classmethod
    def eye(cls, center: Tuple[float, float], radius: float, angle: float) -> 'DomainSpec':
        return cls(DomainKind.EYE, center=tuple(map(float, center)),
                   radius=float(radius), angle=float(angle))

    @classmethod
    def diamond(cls, center: Tuple[float, float], side: float) -> 'DomainSpec':
        return cls(DomainKind.DIAMOND, center=tuple(map(float, center)), side=float(side))

    @property
    def d(self) -> int:
        return 1 if self.kind is DomainKind.INTERVAL else 2

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'kind': self.kind.value}
        if self.kind is DomainKind.INTERVAL:
            data['bounds'] = list(self.bounds)
            return data
        data['center'] = list(self.center)
        if self.kind is DomainKind.DIAMOND:
            data['side'] = self.side
        else:
            data['radius'] = self.radius
        if self.kind is DomainKind.EYE:
            data['angle'] = self.angle
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'DomainSpec':
        try:
            kind = DomainKind(data['kind'])
        except (KeyError, ValueError) as e:
            raise ConfigurationError(f"Unknown domain kind in {data!r}") from e
        if kind is DomainKind.INTERVAL:
            return cls.interval(*data['bounds'])
        if kind is DomainKind.DISC_COMPLEMENT:
            return cls.disc_complement(data['center'], data['radius'])
        if kind is DomainKind.EYE:
            return cls.eye(data['center'], data['radius'], data['angle'])
        return cls.diamond(data['center'], data['side'])

    def build(self) -> 'Domain':
        builders = {
            DomainKind.INTERVAL: IntervalDomain,
            DomainKind.DISC_COMPLEMENT: DiscComplementDomain,
            DomainKind.EYE: EyeDomain,
            DomainKind.DIAMOND: DiamondDomain,
        }
        return builders[self.kind](self)


@dataclass(frozen=True)
class BoundaryDiscretization:
    """Boundary nodes s_i (n_b x d) and outward unit normals n_i"""
    points: np.ndarray
    normals: np.ndarray
    spacing: Optional[float] = None

    def __post_init__(self):
        if self.points.shape != self.normals.shape or self.points.ndim != 2:
            raise ConfigurationError(
                f"Boundary points {self.points.shape} and normals {self.normals.shape} disagree"
            )

    @property
    def n_b(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class GridMasks:
    """Indicators of Ω and E at the grid nodes; nodes exactly on ∂Ω belong to Ω"""
    omega: np.ndarray
    extension: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, 'extension', ~self.omega)

    @property
    def n_omega(self) -> int:
        return int(self.omega.sum())

    @property
    def n_extension(self) -> int:
        return int(self.extension.sum())


class Domain(ABC):
    """Closed physical domain Ω inside the periodic box"""

    def __init__(self, spec: DomainSpec):
        self.spec = spec
        self._validate()

    @property
    def d(self) -> int:
        return self.spec.d

    @abstractmethod
    def _validate(self) -> None:
        pass

    @abstractmethod
    def contains(self, *coords: np.ndarray) -> np.ndarray:
        """Membership in the closed domain for arrays of coordinates"""
        pass

    @abstractmethod
    def measure(self) -> float:
        pass

    @abstractmethod
    def boundary_nodes(self, N: int) -> BoundaryDiscretization:
        pass

    @abstractmethod
    def boundary_residual(self, points: np.ndarray) -> np.ndarray:
        """Deviation of each point from the boundary equation of the shape"""
        pass

    def _check_inside_box(self, low: float, high: float, what: str) -> None:
        if not (0.0 < low and high < TWO_PI):
            raise ConfigurationError(f"{what} [{low:.6g}, {high:.6g}] leaves the box (0, 2π)")

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.spec.to_dict()})"


class IntervalDomain(Domain):

    def _validate(self) -> None:
        a, b = self.spec.bounds
        if not a < b:
            raise ConfigurationError(f"Interval needs a < b, got ({a}, {b})")
        self._check_inside_box(a, b, "Interval")

    def contains(self, *coords: np.ndarray) -> np.ndarray:
        (x,) = coords
        a, b = self.spec.bounds
        return (x >= a - MEMBERSHIP_TOLERANCE) & (x <= b + MEMBERSHIP_TOLERANCE)

    def measure(self) -> float:
        a, b = self.spec.bounds
        return b - a

    def boundary_nodes(self, N: int) -> BoundaryDiscretization:
        a, b = self.spec.bounds
        return BoundaryDiscretization(
            points=np.array([[a], [b]]),
            normals=np.array([[-1.0], [1.0]]),
        )

    def boundary_residual(self, points: np.ndarray) -> np.ndarray:
        a, b = self.spec.bounds
        x = points[:, 0]
        return np.minimum(np.abs(x - a), np.abs(x - b))


class DiscComplementDomain(Domain):

    def _validate(self) -> None:
        cx, cy = self.spec.center
        r = self.spec.radius
        if r <= 0:
            raise ConfigurationError(f"Disc radius must be positive, got {r}")
        self._check_inside_box(cx - r, cx + r, "Disc x-extent")
        self._check_inside_box(cy - r, cy + r, "Disc y-extent")

    def contains(self, *coords: np.ndarray) -> np.ndarray:
        x, y = coords
        cx, cy = self.spec.center
        return np.hypot(x - cx, y - cy) >= self.spec.radius - MEMBERSHIP_TOLERANCE

    def measure(self) -> float:
        return TWO_PI ** 2 - np.pi * self.spec.radius ** 2

    def boundary_nodes(self, N: int) -> BoundaryDiscretization:
        n_b = math.ceil(0.5 * N)
        theta = TWO_PI * np.arange(n_b) / n_b
        radial = np.column_stack([np.cos(theta), np.sin(theta)])
        center = np.asarray(self.spec.center)
        return BoundaryDiscretization(
            points=center + self.spec.radius * radial,
            # Ω lies outside the disc, so its outward normal points to the center
            normals=-radial,
            spacing=TWO_PI * self.spec.radius / n_b,
        )

    def boundary_residual(self, points: np.ndarray) -> np.ndarray:
        center = np.asarray(self.spec.center)
        return np.abs(np.linalg.norm(points - center, axis=1) - self.spec.radius)


class EyeDomain(Domain):
    """Lens bounded by two circular arcs of radius R, each subtending Θ; corners on the horizontal axis"""

    def _validate(self) -> None:
        R, theta = self.spec.radius, self.spec.angle
        if R <= 0 or not 0 < theta < np.pi:
            raise ConfigurationError(f"Eye needs R > 0 and 0 < Θ < π, got R={R}, Θ={theta}")
        cx, cy = self.spec.center
        half_width = R * math.sin(theta / 2)
        half_height = R * (1 - math.cos(theta / 2))
        self._check_inside_box(cx - half_width, cx + half_width, "Eye x-extent")
        self._check_inside_box(cy - half_height, cy + half_height, "Eye y-extent")

    @property
    def arc_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """Centers of the circles carrying the upper and the lower arc"""
        cx, cy = self.spec.center
        offset = self.spec.radius * math.cos(self.spec.angle / 2)
        return np.array([cx, cy - offset]), np.array([cx, cy + offset])

    def contains(self, *coords: np.ndarray) -> np.ndarray:
        x, y = coords
        R = self.spec.radius + MEMBERSHIP_TOLERANCE
        lower_center, upper_center = self.arc_centers
        inside_first = np.hypot(x - lower_center[0], y - lower_center[1]) <= R
        inside_second = np.hypot(x - upper_center[0], y - upper_center[1]) <= R
        return inside_first & inside_second

    def measure(self) -> float:
        R, theta = self.spec.radius, self.spec.angle
        return R ** 2 * (theta - math.sin(theta))

    def boundary_nodes(self, N: int) -> BoundaryDiscretization:
        R, theta = self.spec.radius, self.spec.angle
        n_b = math.ceil(R * theta * N / TWO_PI)
        # odd counts put the extra node on the upper arc
        upper_count = math.ceil(n_b / 2)
        lower_count = n_b - upper_count

        def arc_offsets(count: int) -> np.ndarray:
            # Half-spacing offset keeps nodes off the two corners
            return (np.arange(count) + 0.5) * theta / count

        upper_circle, lower_circle = self.arc_centers
        upper_phi = np.pi / 2 - theta / 2 + arc_offsets(upper_count)
        lower_phi = -np.pi / 2 - theta / 2 + arc_offsets(lower_count)

        upper_dir = np.column_stack([np.cos(upper_phi), np.sin(upper_phi)])
        lower_dir = np.column_stack([np.cos(lower_phi), np.sin(lower_phi)])
        return BoundaryDiscretization(
            points=np.vstack([upper_circle + R * upper_dir, lower_circle + R * lower_dir]),
            normals=np.vstack([upper_dir, lower_dir]),
            spacing=R * theta / lower_count,
        )

    def boundary_residual(self, points: np.ndarray) -> np.ndarray:
        first, second = self.arc_centers
        r_first = np.abs(np.linalg.norm(points - first, axis=1) - self.spec.radius)
        r_second = np.abs(np.linalg.norm(points - second, axis=1) - self.spec.radius)
        return np.minimum(r_first, r_second)


class DiamondDomain(Domain):
    """Square of side s centered at c and rotated by 45°: |x - cx| + |y - cy| <= s/√2"""

    def _validate(self) -> None:
        s = self.spec.side
        if s <= 0:
            raise ConfigurationError(f"Diamond side must be positive, got {s}")
        cx, cy = self.spec.center
        h = s / math.sqrt(2)
        self._check_inside_box(cx - h, cx + h, "Diamond x-extent")
        self._check_inside_box(cy - h, cy + h, "Diamond y-extent")

    @property
    def half_diagonal(self) -> float:
        return self.spec.side / math.sqrt(2)

    def contains(self, *coords: np.ndarray) -> np.ndarray:
        x, y = coords
        cx, cy = self.spec.center
        return np.abs(x - cx) + np.abs(y - cy) <= self.half_diagonal + MEMBERSHIP_TOLERANCE

    def measure(self) -> float:
        return self.spec.side ** 2

    def boundary_nodes(self, N: int) -> BoundaryDiscretization:
        s = self.spec.side
        per_side = math.ceil(s * N / (4 * np.pi))
        center = np.asarray(self.spec.center)
        h = self.half_diagonal
        vertices = [center + h * np.array(v) for v in ((1, 0), (0, 1), (-1, 0), (0, -1))]
        side_normals = [np.array(v) / math.sqrt(2) for v in ((1, 1), (-1, 1), (-1, -1), (1, -1))]

        t = (np.arange(per_side) + 0.5) / per_side
        points, normals = [], []
        for i in range(4):
            start, end = vertices[i], vertices[(i + 1) % 4]
            points.append(start + np.outer(t, end - start))
            normals.append(np.tile(side_normals[i], (per_side, 1)))
        return BoundaryDiscretization(
            points=np.vstack(points),
            normals=np.vstack(normals),
            spacing=s / per_side,
        )

    def boundary_residual(self, points: np.ndarray) -> np.ndarray:
        center = np.asarray(self.spec.center)
        return np.abs(np.abs(points - center).sum(axis=1) - self.half_diagonal)


def boundary_nodes(domain: Domain, N: int) -> BoundaryDiscretization:
    if N < MIN_BOUNDARY_GRID:
        raise InvalidParameterError(f"Boundary discretization needs N >= {MIN_BOUNDARY_GRID}, got {N}")
    nodes = domain.boundary_nodes(N)
    logger.debug(f"[GEOMETRY] {domain.spec.kind.value}: n_b={nodes.n_b} at N={N}")
    return nodes


def grid_masks(domain: Domain, grid: Grid) -> GridMasks:
    if domain.d != grid.d:
        raise ConfigurationError(f"Domain dimension {domain.d} does not match grid dimension {grid.d}")
    return GridMasks(omega=np.asarray(domain.contains(*grid.mesh), dtype=bool))


def measure(domain: Domain) -> float:
    return float(domain.measure())
