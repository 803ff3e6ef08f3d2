"""Two-factor logarithmic kernel, energies and potentials on grids.

The kernel of the weighted energy is
    k(x, y) = -log|x - y| - log|f(x) - f(y)| + Q(x) + Q(y),
regularized near the diagonal by clamping both gap factors at the grid scale:
each -log uses max(gap, eps) with eps equal to half the minimum cell width.
The same eps on both factors keeps the identity-map decomposition of the
energy an exact algebraic identity.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ParameterError, ResourceError, StructuralError
from .geometry import GridSet, MapSpec, WeightSpec, same_grid

DEFAULT_MAX_GRID = 4096


def _max_grid_size() -> int:
    return int(os.environ.get("BIORTHEQ_MAX_GRID", DEFAULT_MAX_GRID))


@dataclass(eq=False)
class DiscreteMeasure:
    """Nonnegative weights over a grid; a probability measure when mass is 1."""

    grid: GridSet
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (self.grid.size,):
            raise StructuralError("weight vector does not match the grid")
        if np.any(self.weights < 0):
            raise ParameterError("measure weights must be nonnegative")

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def is_probability(self) -> bool:
        return abs(self.mass - 1.0) <= 1e-12

    def normalized(self) -> "DiscreteMeasure":
        m = self.mass
        if m <= 0:
            raise StructuralError("cannot normalize a zero measure")
        return DiscreteMeasure(self.grid, self.weights / m)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.weights)

    @classmethod
    def uniform(cls, grid: GridSet) -> "DiscreteMeasure":
        return cls(grid, np.full(grid.size, 1.0 / grid.size))

    @classmethod
    def from_cell_masses(cls, grid: GridSet) -> "DiscreteMeasure":
        """Normalized quadrature measure (Lebesgue on the domain)."""
        return cls(grid, grid.cell_mass / grid.cell_mass.sum())


@dataclass(eq=False)
class KernelMatrix:
    """Dense symmetric matrix of regularized kernel values at grid points."""

    values: np.ndarray
    epsilon: float
    grid: GridSet
    weight: WeightSpec
    fmap: MapSpec

    @property
    def size(self) -> int:
        return int(self.values.shape[0])


def _clamped_neglog(gaps: np.ndarray, epsilon: float) -> np.ndarray:
    return -np.log(np.maximum(gaps, epsilon))


def modified_kernel(x, y, weight: WeightSpec, fmap: MapSpec, epsilon: float):
    """Pointwise kernel value; symmetric in (x, y)."""
    if not epsilon > 0:
        raise ParameterError("epsilon must be positive")
    x = np.asarray(x)
    y = np.asarray(y)
    val = (_clamped_neglog(np.abs(x - y), epsilon)
           + _clamped_neglog(np.abs(fmap(x) - fmap(y)), epsilon)
           + weight(x) + weight(y))
    return val if np.ndim(val) else float(val)


def assemble_kernel_matrix(grid: GridSet, weight: WeightSpec, fmap: MapSpec) -> KernelMatrix:
    """Full kernel matrix with eps taken from the grid spacing."""
    n = grid.size
    cap = _max_grid_size()
    if n > cap:
        raise ResourceError(f"grid size {n} exceeds the configured maximum {cap} "
                            "(override with BIORTHEQ_MAX_GRID)")
    pts = grid.points
    eps = grid.spacing
    fv = fmap(pts)
    qv = np.asarray(weight(pts), dtype=float)
    gaps = np.abs(pts[:, None] - pts[None, :])
    fgaps = np.abs(fv[:, None] - fv[None, :])
    values = _clamped_neglog(gaps, eps) + _clamped_neglog(fgaps, eps) + qv[:, None] + qv[None, :]
    if not np.all(np.isfinite(values)):
        raise NumericalError("kernel matrix contains non-finite entries")
    return KernelMatrix(values, eps, grid, weight, fmap)


def _require_same_grid(mu: DiscreteMeasure, grid: GridSet):
    if not same_grid(mu.grid, grid):
        raise StructuralError("measure and kernel live on different grids")


def energy(mu: DiscreteMeasure, km: KernelMatrix) -> float:
    """Quadratic form of the kernel matrix at a probability measure,
    diagonal included."""
    _require_same_grid(mu, km.grid)
    if abs(mu.mass - 1.0) > 1e-9:
        raise StructuralError("energy expects a probability measure")
    w = mu.weights
    return float(w @ (km.values @ w))


def log_energy(mu: DiscreteMeasure) -> float:
    """Regularized single-factor logarithmic energy of the measure."""
    pts = mu.grid.points
    neglog = _clamped_neglog(np.abs(pts[:, None] - pts[None, :]), mu.grid.spacing)
    w = mu.weights
    return float(w @ (neglog @ w))


def weighted_log_energy(mu: DiscreteMeasure, weight: WeightSpec) -> float:
    """Single-factor energy plus twice the field integral."""
    qv = np.asarray(weight(mu.grid.points), dtype=float)
    return log_energy(mu) + 2.0 * float(mu.weights @ qv)


def pushforward_energy(mu: DiscreteMeasure, fmap: MapSpec) -> float:
    """Logarithmic energy of the image measure under f, same regularization."""
    fv = fmap(mu.grid.points)
    neglog = _clamped_neglog(np.abs(fv[:, None] - fv[None, :]), mu.grid.spacing)
    w = mu.weights
    return float(w @ (neglog @ w))


def potential(mu: DiscreteMeasure, z):
    """Regularized logarithmic potential of the measure at z (scalar or array)."""
    z = np.asarray(z)
    gaps = np.abs(mu.grid.points[None, ...] - np.atleast_1d(z)[..., None])
    vals = _clamped_neglog(gaps, mu.grid.spacing) @ mu.weights
    return vals if np.ndim(z) else float(vals[0])


def modified_potential(mu: DiscreteMeasure, z, weight: WeightSpec, fmap: MapSpec):
    """Potential of mu at z plus potential of the image measure at f(z) plus Q(z)."""
    z = np.asarray(z)
    zz = np.atleast_1d(z)
    pts = mu.grid.points
    eps = mu.grid.spacing
    p_direct = _clamped_neglog(np.abs(pts[None, :] - zz[:, None]), eps) @ mu.weights
    fpts = fmap(pts)
    fz = fmap(zz)
    p_image = _clamped_neglog(np.abs(fpts[None, :] - fz[:, None]), eps) @ mu.weights
    vals = p_direct + p_image + np.asarray(weight(zz), dtype=float)
    return vals if np.ndim(z) else float(vals[0])


def classical_capacity(grid: GridSet, max_iters: int = 4000) -> float:
    """Capacity from the minimal regularized single-log energy over the simplex.

    Reuses the equilibrium solver with the second kernel factor disabled and
    returns exp(-I_min).
    """
    from .equilibrium import SolverOptions, minimize_energy

    if grid.size < 1:
        raise StructuralError("empty grid")
    pts = grid.points
    neglog = _clamped_neglog(np.abs(pts[:, None] - pts[None, :]), grid.spacing)
    km = KernelMatrix(neglog, grid.spacing, grid, WeightSpec.zero(), MapSpec.identity())
    res = minimize_energy(km, np.zeros(grid.size), SolverOptions(max_iters=max_iters))
    return float(np.exp(-res.V_w))
