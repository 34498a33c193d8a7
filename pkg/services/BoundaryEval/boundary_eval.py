"""
Boundary traces of spectral fields

Evaluates Σ_j c_j e^{i j·s} and its normal derivatives at arbitrary nodes by
exact direct summation. The sum is separable across axes, so each evaluation
contracts the coefficient array with one Vandermonde factor per axis instead
of forming the full n_b x N^d matrix.
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import product
from typing import Dict, List, Tuple

import numpy as np

from services.Geometry.geometry import BoundaryDiscretization
from services.SpectralCore.spectral_core import Grid, GridField, derivative_multiplier
from shared.error_utils import ConfigurationError, InvalidParameterError
from shared.logging_config import get_logger

logger = get_logger(__name__)


@lru_cache(maxsize=None)
def multi_indices(order: int, d: int) -> Tuple[Tuple[Tuple[int, ...], int], ...]:
    """Multi-indices α with |α| = order and their multinomial weights order!/α!"""
    terms = []
    for alpha in product(range(order + 1), repeat=d):
        if sum(alpha) != order:
            continue
        weight = math.factorial(order)
        for a in alpha:
            weight //= math.factorial(a)
        terms.append((alpha, weight))
    return tuple(terms)


@dataclass(frozen=True)
class TraceBlock:
    """
    Traces D_n^l f(s_i) for l = 0..k

    values has shape (..., k+1, n_b); leading axes index a batch of fields.
    Flattened rows run over l first, then nodes.
    """
    values: np.ndarray

    @property
    def k(self) -> int:
        return self.values.shape[-2] - 1

    @property
    def n_b(self) -> int:
        return self.values.shape[-1]

    def order(self, l: int) -> np.ndarray:
        return self.values[..., l, :]

    def as_vector(self) -> np.ndarray:
        return self.values.reshape(self.values.shape[:-2] + (-1,))


class BoundaryEvaluator:
    """Direct-summation S* and T_k* for one grid and one node set"""

    def __init__(self, grid: Grid, nodes: BoundaryDiscretization):
        if nodes.d != grid.d:
            raise ConfigurationError(
                f"Nodes of dimension {nodes.d} cannot be evaluated on a {grid.d}D grid"
            )
        self.grid = grid
        self.nodes = nodes
        self._factors = self._build_factors()
        self._multipliers: Dict[Tuple[int, ...], np.ndarray] = {}

    def _build_factors(self) -> List[np.ndarray]:
        k = self.grid.wavenumbers
        nyquist = k == -self.grid.nyquist_index
        factors = []
        for axis in range(self.grid.d):
            s = self.nodes.points[:, axis]
            factor = np.exp(1j * np.outer(s, k))
            # Symmetric Nyquist term keeps the interpolant of a real field real
            factor[:, nyquist] = np.cos(self.grid.nyquist_index * s)[:, None]
            factors.append(factor)
        return factors

    def _multiplier(self, alpha: Tuple[int, ...]) -> np.ndarray:
        if alpha not in self._multipliers:
            self._multipliers[alpha] = derivative_multiplier(self.grid, alpha)
        return self._multipliers[alpha]

    def evaluate(self, coefficients: np.ndarray) -> np.ndarray:
        """Real part of Σ_j c_j e^{i j·s_i}; accepts leading batch axes"""
        d = self.grid.d
        if coefficients.shape[-d:] != self.grid.shape:
            raise ConfigurationError(
                f"Coefficient shape {coefficients.shape} does not end with grid shape {self.grid.shape}"
            )
        work = coefficients @ self._factors[-1].T
        for axis in range(d - 2, -1, -1):
            work = np.einsum('...ai,ia->...i', work, self._factors[axis])
        return np.real(work)

    def traces(self, coefficients: np.ndarray, k: int) -> TraceBlock:
        """D_n^l of the field(s) at every node, l = 0..k, by the multinomial expansion"""
        if k < 0:
            raise InvalidParameterError(f"Trace order must be non-negative, got {k}")
        normals = self.nodes.normals
        batch = coefficients.shape[:-self.grid.d]
        values = np.zeros(batch + (k + 1, self.nodes.n_b))
        values[..., 0, :] = self.evaluate(coefficients)
        for l in range(1, k + 1):
            for alpha, weight in multi_indices(l, self.grid.d):
                directional = weight * np.prod(normals ** np.array(alpha), axis=1)
                if not np.any(directional):
                    continue
                derivative = self.evaluate(coefficients * self._multiplier(alpha))
                values[..., l, :] += directional * derivative
        return TraceBlock(values)


def eval_at_nodes(field: GridField, nodes: BoundaryDiscretization) -> np.ndarray:
    return BoundaryEvaluator(field.grid, nodes).evaluate(field.coefficients())


def normal_derivative_traces(field: GridField, nodes: BoundaryDiscretization, k: int) -> TraceBlock:
    return BoundaryEvaluator(field.grid, nodes).traces(field.coefficients(), k)


def mode_traces(wavevectors: np.ndarray, nodes: BoundaryDiscretization, k: int) -> np.ndarray:
    """
    Closed-form traces (i j·n)^l e^{i j·s} of many modes at once

    Returns a complex array of shape (k+1, n_b, n_modes).
    """
    if k < 0:
        raise InvalidParameterError(f"Trace order must be non-negative, got {k}")
    wavevectors = np.atleast_2d(np.asarray(wavevectors, dtype=float))
    phase = np.exp(1j * nodes.points @ wavevectors.T)
    slope = 1j * (nodes.normals @ wavevectors.T)
    powers = slope[None, :, :] ** np.arange(k + 1)[:, None, None]
    return powers * phase[None, :, :]


def mode_trace_closed_form(wavevector, nodes: BoundaryDiscretization, k: int) -> np.ndarray:
    """(i j·n)^l e^{i j·s} for a single mode; shape (k+1, n_b)"""
    return mode_traces(np.asarray(wavevector, dtype=float)[None, :], nodes, k)[..., 0]
