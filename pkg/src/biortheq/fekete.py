"""Weighted Vandermonde configurations: evaluation, search, and diagnostics.

Configurations are (k+1)-tuples of grid points scored by the log of the
weighted two-factor Vandermonde.  The search is grid-constrained: a greedy
pass seeds the configuration, single-coordinate exchange passes refine it.
Everything runs in the log domain; coincident points (or coincident map
values) score -inf and carry zero generalized diameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, StructuralError
from .geometry import GridSet, MapSpec, WeightSpec
from .kernel import DiscreteMeasure

PAIR_TABLE_MAX = 2048


@dataclass(frozen=True)
class Configuration:
    """Ordered tuple of k+1 points with its log weighted Vandermonde value."""

    points: tuple
    log_vdm: float

    def __post_init__(self):
        if len(self.points) < 2:
            raise ParameterError("a configuration needs at least 2 points")

    @property
    def k(self) -> int:
        return len(self.points) - 1


def log_vdm(points, weight: WeightSpec, fmap: MapSpec) -> float:
    """Sum over pairs of log gaps of the points and of their map images,
    minus k times the summed field; -inf when any pair collides."""
    pts = np.asarray(points)
    if pts.size < 2:
        raise ParameterError("need at least 2 points")
    k = pts.size - 1
    fv = fmap(pts)
    iu, ju = np.triu_indices(pts.size, 1)
    with np.errstate(divide="ignore"):
        pair_sum = float(np.sum(np.log(np.abs(pts[iu] - pts[ju])))
                         + np.sum(np.log(np.abs(fv[iu] - fv[ju]))))
    return pair_sum - k * float(np.sum(weight(pts)))


def make_configuration(points, weight: WeightSpec, fmap: MapSpec) -> Configuration:
    return Configuration(tuple(np.asarray(points).tolist()),
                         log_vdm(points, weight, fmap))


def delta_k(config: Configuration) -> float:
    """Generalized-diameter value exp(2 log_vdm / (k (k+1))); 0 on collisions."""
    k = config.k
    if config.log_vdm == -np.inf:
        return 0.0
    return float(np.exp(2.0 * config.log_vdm / (k * (k + 1))))


def pair_log_table(grid: GridSet, fmap: MapSpec) -> np.ndarray:
    """T[i, j] = log|x_i - x_j| + log|f_i - f_j| with -inf on the diagonal."""
    pts = grid.points
    fv = fmap(pts)
    with np.errstate(divide="ignore"):
        t = np.log(np.abs(pts[:, None] - pts[None, :])) \
            + np.log(np.abs(fv[:, None] - fv[None, :]))
    return t


def _pair_columns(grid: GridSet, fmap: MapSpec, indices: np.ndarray) -> np.ndarray:
    """Columns of the pair-log table for the given indices, built on the fly."""
    pts = grid.points
    fv = fmap(pts)
    sel = np.asarray(indices, dtype=int)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(pts[:, None] - pts[sel][None, :])) \
            + np.log(np.abs(fv[:, None] - fv[sel][None, :]))


def greedy_leja(grid: GridSet, k: int, weight: WeightSpec, fmap: MapSpec) -> Configuration:
    """Greedy configuration of order k: start at the field minimizer, then
    append the grid point maximizing the incremental log terms.  Ties break
    toward the lowest grid index."""
    if k < 1:
        raise ParameterError("order k must be at least 1")
    if grid.size < k + 1:
        raise ParameterError("grid has fewer than k+1 points")
    qv = np.asarray(weight(grid.points), dtype=float)
    scorer = _ExchangeWorkspace(grid, weight, fmap)
    idx = np.empty(k + 1, dtype=int)
    idx[0] = int(np.argmax(-2.0 * qv))
    cum = scorer.column(idx[0]).copy()
    for m in range(1, k + 1):
        scores = cum - m * qv
        idx[m] = int(np.argmax(scores))
        cum += scorer.column(idx[m])
    pts = grid.points[idx]
    return Configuration(tuple(pts.tolist()), log_vdm(pts, weight, fmap))


class _ExchangeWorkspace:
    """Pair-log columns plus full scores for grid-constrained configurations."""

    def __init__(self, grid: GridSet, weight: WeightSpec, fmap: MapSpec):
        self.grid = grid
        self.qv = np.asarray(weight(grid.points), dtype=float)
        self.fmap = fmap
        self.table = pair_log_table(grid, fmap) if grid.size <= PAIR_TABLE_MAX else None

    def column(self, index: int) -> np.ndarray:
        if self.table is not None:
            return self.table[:, index]
        return _pair_columns(self.grid, self.fmap, np.array([index]))[:, 0]

    def columns(self, indices: np.ndarray) -> np.ndarray:
        if self.table is not None:
            return self.table[:, indices]
        return _pair_columns(self.grid, self.fmap, indices)

    def full_score(self, indices: np.ndarray) -> float:
        idx = np.asarray(indices, dtype=int)
        k = idx.size - 1
        cols = self.columns(idx)
        sub = cols[idx, :]
        iu, ju = np.triu_indices(idx.size, 1)
        return float(np.sum(sub[iu, ju])) - k * float(np.sum(self.qv[idx]))


def _nearest_grid_indices(points, grid: GridSet) -> np.ndarray:
    gpts = grid.points
    pts = np.asarray(points)
    if np.iscomplexobj(gpts) or np.iscomplexobj(pts):
        return np.array([int(np.argmin(np.abs(gpts - p))) for p in pts])
    return np.array([int(np.argmin(np.abs(gpts - p))) for p in np.real(pts)])


def exchange_optimize(config: Configuration, grid: GridSet, weight: WeightSpec,
                      fmap: MapSpec, max_passes: int = 30,
                      return_trace: bool = False):
    """Single-coordinate improvement passes over the grid.

    Each coordinate is replaced by the grid argmax of the one-variable slice
    of the log Vandermonde (remaining coordinates held fixed); a replacement
    is committed only when the full recomputed score does not decrease, so
    the score is non-decreasing across passes by construction.  Stops after a
    pass without improvement or after max_passes.
    """
    ws = _ExchangeWorkspace(grid, weight, fmap)
    idx = _nearest_grid_indices(config.points, grid)
    k = idx.size - 1
    current = ws.full_score(idx)
    trace = [current]
    for _ in range(max_passes):
        improved = False
        for j in range(k + 1):
            others = np.delete(idx, j)
            slice_scores = ws.columns(others).sum(axis=1) - k * ws.qv
            best = int(np.argmax(slice_scores))
            if best == idx[j] or not slice_scores[best] > slice_scores[idx[j]]:
                continue
            candidate = idx.copy()
            candidate[j] = best
            cand_score = ws.full_score(candidate)
            if cand_score >= current:
                idx, current = candidate, cand_score
                improved = True
        trace.append(current)
        if not improved:
            break
    pts = grid.points[idx]
    out = Configuration(tuple(pts.tolist()), log_vdm(pts, weight, fmap))
    return (out, trace) if return_trace else out


def empirical_measure(config: Configuration, grid: GridSet) -> DiscreteMeasure:
    """Uniform atoms of the configuration snapped onto grid weights."""
    idx = _nearest_grid_indices(config.points, grid)
    w = np.bincount(idx, minlength=grid.size).astype(float) / idx.size
    return DiscreteMeasure(grid, w)


@dataclass
class FeketeStep:
    k: int
    delta: float
    config: Configuration
    measure: DiscreteMeasure


@dataclass
class FeketeSeries:
    steps: list[FeketeStep]
    reference_delta: float
    reference_energy: float

    def deltas(self) -> np.ndarray:
        return np.array([(s.k, s.delta) for s in self.steps])


def fekete_sequence(grid: GridSet, k_max: int, weight: WeightSpec, fmap: MapSpec,
                    solver_opts=None) -> FeketeSeries:
    """Greedy-plus-exchange configurations for k = 1..k_max with the
    equilibrium reference value exp(-V_w) computed on the same grid."""
    from .equilibrium import SolverOptions, solve_on_grid

    if k_max < 2:
        raise ParameterError("k_max must be at least 2")
    if grid.size < k_max + 1:
        raise ParameterError("grid smaller than k_max + 1")
    opts = solver_opts if solver_opts is not None else SolverOptions()
    res, _ = solve_on_grid(grid, weight, fmap, opts)
    steps = []
    for k in range(1, k_max + 1):
        cfg = exchange_optimize(greedy_leja(grid, k, weight, fmap), grid, weight, fmap)
        steps.append(FeketeStep(k, delta_k(cfg), cfg, empirical_measure(cfg, grid)))
    return FeketeSeries(steps, float(np.exp(-res.V_w)), res.V_w)


def tightness_report(config: Configuration, radius: float) -> float:
    """Fraction of configuration points with modulus at most the radius."""
    pts = np.asarray(config.points)
    return float(np.mean(np.abs(pts) <= radius))
