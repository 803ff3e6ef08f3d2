"""Distribution-function comparisons on grids.

Real grids use cumulative sums of cell weights; sup distances against a
continuous reference are evaluated on both sides of each jump.  Small point
configurations are compared through the midpoint plotting-position
interpolant (j + 1/2)/m at the j-th sorted point, which removes the 1/(2m)
granularity floor of the raw step function.  Complex rectangle grids fall
back to a discrepancy over products of half-plane indicators.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError, StructuralError


def grid_cdf(weights: np.ndarray) -> np.ndarray:
    return np.cumsum(np.asarray(weights, dtype=float))


def sup_distance_weights(wa: np.ndarray, wb: np.ndarray) -> float:
    """Sup distance of two weight vectors on one sorted real grid."""
    wa, wb = np.asarray(wa, dtype=float), np.asarray(wb, dtype=float)
    if wa.shape != wb.shape:
        raise StructuralError("weight vectors live on different grids")
    return float(np.max(np.abs(np.cumsum(wa) - np.cumsum(wb))))


def measure_cdf_sup_distance(grid, weights: np.ndarray, ref) -> float:
    """Sup distance of a cell-carried measure against a reference CDF.

    Grid weights stand for mass spread over their cells, so the measure's CDF
    matches the cumulative sums at the cell right edges; the comparison runs
    over all cell edges, the quadrature-consistent convention for solver
    output (atomic configurations use the jump-aware comparison instead).
    """
    pts = np.asarray(grid.points, dtype=float)
    half = 0.5 * np.asarray(grid.cell_mass, dtype=float)
    edges = np.concatenate(([pts[0] - half[0]], pts + half))
    values = np.concatenate(([0.0], np.cumsum(np.asarray(weights, dtype=float))))
    return float(np.max(np.abs(values - np.asarray(ref(edges), dtype=float))))


def sup_distance_vs_function(points: np.ndarray, weights: np.ndarray, ref) -> float:
    """Jump-aware sup distance of a discrete measure against a reference CDF."""
    points = np.asarray(points)
    if np.iscomplexobj(points):
        raise StructuralError("continuous-reference comparison needs a real grid")
    if np.any(np.diff(points) < 0):
        raise StructuralError("grid points must be sorted")
    cum = np.cumsum(np.asarray(weights, dtype=float))
    fv = np.asarray(ref(points), dtype=float)
    upper = np.max(np.abs(cum - fv))
    lower = np.max(np.abs(np.concatenate(([0.0], cum[:-1])) - fv))
    return float(max(upper, lower))


def midpoint_positions(m: int) -> np.ndarray:
    return (np.arange(m) + 0.5) / m


def ogive_cdf(sample_points: np.ndarray, eval_points: np.ndarray) -> np.ndarray:
    """Plotting-position interpolant of a point configuration.

    Sorted sample points are assigned levels (j + 1/2)/m and joined linearly;
    evaluation is clamped to the end levels outside the sample range.
    """
    sp = np.sort(np.asarray(sample_points, dtype=float))
    if sp.size < 2:
        raise ParameterError("interpolant needs at least two sample points")
    return np.interp(np.asarray(eval_points, dtype=float), sp, midpoint_positions(sp.size))


def config_sup_distance(sample_points: np.ndarray, grid_points: np.ndarray,
                        ref_cdf_values: np.ndarray) -> float:
    """Sup distance of a configuration's interpolated CDF to reference values
    given on the grid."""
    est = ogive_cdf(sample_points, grid_points)
    return float(np.max(np.abs(est - np.asarray(ref_cdf_values, dtype=float))))


def halfplane_cdf(points: np.ndarray, weights: np.ndarray,
                  eval_points: np.ndarray) -> np.ndarray:
    """F(z) = sum of weights over {Re <= Re z, Im <= Im z}; the product
    half-plane surrogate for complex grids."""
    pts = np.asarray(points)
    ev = np.asarray(eval_points)
    re, im = np.real(pts), np.imag(pts)
    mask = (re[None, :] <= np.real(ev)[:, None] + 1e-15) & \
           (im[None, :] <= np.imag(ev)[:, None] + 1e-15)
    return mask @ np.asarray(weights, dtype=float)


def halfplane_discrepancy(points: np.ndarray, wa: np.ndarray, wb: np.ndarray) -> float:
    fa = halfplane_cdf(points, wa, points)
    fb = halfplane_cdf(points, wb, points)
    return float(np.max(np.abs(fa - fb)))
