"""
Uniform periodic grids on C = [0, 2π)^d and constant-coefficient operators
applied through their Fourier symbols.

Coefficients use c_j = N^{-d} Σ_m f(x_m) e^{-i j·x_m} with wave vectors in
[-N/2, N/2)^d stored in FFT order. Odd-order derivative symbols vanish on the
Nyquist index so real fields stay real.
"""
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Callable, Tuple

import numpy as np
import scipy.fft

from shared.error_utils import (
    ConfigurationError,
    GridError,
    InvalidParameterError,
    SymmetryViolationError,
)
from shared.logging_config import get_logger

logger = get_logger(__name__)

SYMMETRY_TOLERANCE = 1e-12
SUPPORTED_DIMENSIONS = (1, 2, 3)


def _is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def fft_axes(d: int) -> Tuple[int, ...]:
    """Trailing axes holding the grid; leading axes are batch dimensions"""
    return tuple(range(-d, 0))


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with N points per axis on [0, 2π)^d"""
    d: int
    N: int

    def __post_init__(self):
        if self.d not in SUPPORTED_DIMENSIONS:
            raise GridError(f"Unsupported dimension d={self.d}")
        if self.N < 4 or not _is_power_of_two(self.N):
            raise GridError(f"N must be a power of two and at least 4, got {self.N}")

    @property
    def dx(self) -> float:
        return 2.0 * np.pi / self.N

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.d

    @cached_property
    def nodes(self) -> np.ndarray:
        axis = np.arange(self.N) * self.dx
        axis.flags.writeable = False
        return axis

    @cached_property
    def mesh(self) -> Tuple[np.ndarray, ...]:
        arrays = np.meshgrid(*([self.nodes] * self.d), indexing='ij')
        for array in arrays:
            array.flags.writeable = False
        return tuple(arrays)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wave numbers in FFT order: 0, 1, ..., N/2-1, -N/2, ..., -1"""
        k = np.fft.fftfreq(self.N, d=1.0 / self.N)
        k.flags.writeable = False
        return k

    @cached_property
    def wave_mesh(self) -> Tuple[np.ndarray, ...]:
        arrays = np.meshgrid(*([self.wavenumbers] * self.d), indexing='ij')
        for array in arrays:
            array.flags.writeable = False
        return tuple(arrays)

    @cached_property
    def squared_wavenumber(self) -> np.ndarray:
        k2 = sum(k ** 2 for k in self.wave_mesh)
        k2.flags.writeable = False
        return k2

    @property
    def nyquist_index(self) -> int:
        return self.N // 2

    def sample(self, func: Callable[..., np.ndarray]) -> np.ndarray:
        """Evaluate func(x, y, ...) at every grid node"""
        values = np.asarray(func(*self.mesh), dtype=float)
        return np.broadcast_to(values, self.shape).copy()

    def refines(self, coarse: 'Grid') -> bool:
        return self.d == coarse.d and self.N >= coarse.N and self.N % coarse.N == 0

    def coarse_view(self, values: np.ndarray, coarse: 'Grid') -> np.ndarray:
        """Values of a fine-grid array at the nodes shared with a nested coarse grid"""
        if not self.refines(coarse):
            raise GridError(f"Grid N={self.N} does not nest N={coarse.N}")
        stride = self.N // coarse.N
        return values[(slice(None, None, stride),) * self.d]


class Representation(Enum):
    VALUES = "values"
    COEFFICIENTS = "coefficients"


def forward_transform(values: np.ndarray, d: int) -> np.ndarray:
    """Normalized forward transform over the trailing d axes"""
    n_points = np.prod(values.shape[-d:])
    return scipy.fft.fftn(values, axes=fft_axes(d)) / n_points


def inverse_transform(coefficients: np.ndarray, d: int) -> np.ndarray:
    """Inverse of forward_transform, real part only"""
    n_points = np.prod(coefficients.shape[-d:])
    return np.real(scipy.fft.ifftn(coefficients, axes=fft_axes(d))) * n_points


def reflect(coefficients: np.ndarray, d: int) -> np.ndarray:
    """Array with entry j holding the input entry -j (indices mod N)"""
    axes = fft_axes(d)
    return np.roll(np.flip(coefficients, axis=axes), 1, axis=axes)


def symmetry_defect(coefficients: np.ndarray, d: int) -> float:
    """max |c_j - conj(c_{-j})| relative to max |c_j|"""
    scale = np.abs(coefficients).max()
    if scale == 0.0:
        return 0.0
    return float(np.abs(coefficients - np.conj(reflect(coefficients, d))).max() / scale)


@dataclass(frozen=True)
class GridField:
    """A real field on a Grid held either as samples or as Fourier coefficients"""
    grid: Grid
    data: np.ndarray
    representation: Representation = Representation.VALUES

    def __post_init__(self):
        if self.data.shape != self.grid.shape:
            raise GridError(
                f"Field shape {self.data.shape} does not match grid shape {self.grid.shape}"
            )

    @classmethod
    def from_values(cls, grid: Grid, values: np.ndarray) -> 'GridField':
        return cls(grid, np.asarray(values, dtype=float), Representation.VALUES)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> 'GridField':
        return cls.from_values(grid, grid.sample(func))

    @classmethod
    def from_coefficients(cls, grid: Grid, coefficients: np.ndarray) -> 'GridField':
        return cls(grid, np.asarray(coefficients, dtype=complex), Representation.COEFFICIENTS)

    @property
    def is_values(self) -> bool:
        return self.representation is Representation.VALUES

    def values(self) -> np.ndarray:
        if self.is_values:
            return self.data
        return to_values(self).data

    def coefficients(self) -> np.ndarray:
        if not self.is_values:
            return self.data
        return forward_transform(self.data, self.grid.d)

    def mean(self) -> float:
        if self.is_values:
            return float(self.data.mean())
        return float(np.real(self.data[(0,) * self.grid.d]))


class SymbolKind(Enum):
    IDENTITY = "identity"
    LAPLACIAN = "laplacian"
    HELMHOLTZ = "helmholtz"
    DERIVATIVE = "derivative"
    SHIFTED_LAPLACIAN = "shifted_laplacian"


@dataclass(frozen=True)
class OperatorSymbol:
    """
    Fourier multiplier of a constant-coefficient operator.

    laplacian            Δ          -|j|²
    helmholtz(α)         I - αΔ     1 + α|j|²
    derivative(α)        ∂^α        Π (i j_m)^{α_m}
    shifted_laplacian(σ) -Δ - σ     |j|² - σ
    """
    kind: SymbolKind
    alpha: float = 0.0
    shift: float = 0.0
    multi_index: Tuple[int, ...] = ()

    @classmethod
    def identity(cls) -> 'OperatorSymbol':
        return cls(SymbolKind.IDENTITY)

    @classmethod
    def laplacian(cls) -> 'OperatorSymbol':
        return cls(SymbolKind.LAPLACIAN)

    @classmethod
    def helmholtz(cls, alpha: float) -> 'OperatorSymbol':
        if not alpha > 0:
            raise InvalidParameterError(f"Helmholtz parameter must be positive, got {alpha}")
        return cls(SymbolKind.HELMHOLTZ, alpha=float(alpha))

    @classmethod
    def derivative(cls, multi_index: Tuple[int, ...]) -> 'OperatorSymbol':
        multi_index = tuple(int(a) for a in multi_index)
        if any(a < 0 for a in multi_index):
            raise InvalidParameterError(f"Negative derivative order in {multi_index}")
        return cls(SymbolKind.DERIVATIVE, multi_index=multi_index)

    @classmethod
    def shifted_laplacian(cls, sigma: float) -> 'OperatorSymbol':
        return cls(SymbolKind.SHIFTED_LAPLACIAN, shift=float(sigma))

    @property
    def tag(self) -> str:
        if self.kind is SymbolKind.HELMHOLTZ:
            return f"helmholtz({self.alpha:.17g})"
        if self.kind is SymbolKind.SHIFTED_LAPLACIAN:
            return f"shifted-laplacian({self.shift:.17g})"
        if self.kind is SymbolKind.DERIVATIVE:
            return f"derivative{self.multi_index}"
        return self.kind.value

    @property
    def requires_mean_correction(self) -> bool:
        """The torus inverse exists only on zero-mean fields"""
        return self.kind is SymbolKind.LAPLACIAN

    def evaluate(self, grid: Grid) -> np.ndarray:
        k2 = grid.squared_wavenumber
        if self.kind is SymbolKind.IDENTITY:
            return np.ones(grid.shape)
        if self.kind is SymbolKind.LAPLACIAN:
            return -k2
        if self.kind is SymbolKind.HELMHOLTZ:
            return 1.0 + self.alpha * k2
        if self.kind is SymbolKind.SHIFTED_LAPLACIAN:
            return k2 - self.shift
        if len(self.multi_index) != grid.d:
            raise ConfigurationError(
                f"Multi-index {self.multi_index} does not match dimension {grid.d}"
            )
        return derivative_multiplier(grid, self.multi_index)

    def inverse_multiplier(self, grid: Grid) -> np.ndarray:
        """Multiplier of L^{-1}; the zero-mean inverse A for the Laplacian"""
        if self.kind is SymbolKind.LAPLACIAN:
            return zero_mean_laplacian_multiplier(grid)
        symbol = self.evaluate(grid)
        if np.any(np.abs(symbol) < 1e-14):
            raise ConfigurationError(
                f"Operator {self.tag} is not invertible on the torus at N={grid.N}"
            )
        return 1.0 / symbol


def derivative_multiplier(grid: Grid, multi_index: Tuple[int, ...]) -> np.ndarray:
    multiplier = np.ones(grid.shape, dtype=complex)
    for axis, order in enumerate(multi_index):
        if order == 0:
            continue
        k = grid.wave_mesh[axis]
        factor = (1j * k) ** order
        if order % 2 == 1:
            factor = np.where(k == -grid.nyquist_index, 0.0, factor)
        multiplier = multiplier * factor
    return multiplier


def zero_mean_laplacian_multiplier(grid: Grid) -> np.ndarray:
    k2 = grid.squared_wavenumber
    multiplier = np.zeros(grid.shape)
    nonzero = k2 > 0
    multiplier[nonzero] = -1.0 / k2[nonzero]
    return multiplier


def apply_multiplier(values: np.ndarray, multiplier: np.ndarray, d: int) -> np.ndarray:
    """Real-valued c_j <- m_j c_j on a (possibly batched) array of samples"""
    return inverse_transform(forward_transform(values, d) * multiplier, d)


def _with_multiplier(field: GridField, multiplier: np.ndarray) -> GridField:
    if field.is_values:
        return GridField.from_values(
            field.grid, apply_multiplier(field.data, multiplier, field.grid.d)
        )
    return GridField.from_coefficients(field.grid, field.data * multiplier)


def to_coefficients(field: GridField) -> GridField:
    if not field.is_values:
        return field
    return GridField.from_coefficients(field.grid, forward_transform(field.data, field.grid.d))


def to_values(field: GridField) -> GridField:
    if field.is_values:
        return field
    defect = symmetry_defect(field.data, field.grid.d)
    if defect > SYMMETRY_TOLERANCE:
        raise SymmetryViolationError(
            f"Coefficients violate conjugate symmetry by {defect:.3e} (relative)"
        )
    return GridField.from_values(field.grid, inverse_transform(field.data, field.grid.d))


def apply_symbol(field: GridField, symbol: OperatorSymbol) -> GridField:
    return _with_multiplier(field, symbol.evaluate(field.grid))


def invert_symbol(field: GridField, symbol: OperatorSymbol) -> GridField:
    return _with_multiplier(field, symbol.inverse_multiplier(field.grid))


def invert_zero_mean_laplacian(field: GridField) -> GridField:
    return _with_multiplier(field, zero_mean_laplacian_multiplier(field.grid))


def invert_helmholtz(field: GridField, alpha: float) -> GridField:
    symbol = OperatorSymbol.helmholtz(alpha)
    return _with_multiplier(field, 1.0 / symbol.evaluate(field.grid))
