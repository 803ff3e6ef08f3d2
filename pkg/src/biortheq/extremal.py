"""Closed-form Green functions and certified lower bounds for the weighted
extremal function of the two-factor polynomial class.

The lower bounds come from one-variable slices through a configuration: fix
all points but one and normalize the resulting product of two polynomial
factors by its weighted sup norm on the grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, StructuralError
from .fekete import Configuration
from .geometry import GridSet, MapSpec, WeightSpec


@dataclass(frozen=True)
class GreenFunctionSpec:
    """Reference set with a closed-form Green function: an interval [a, b]
    or a closed disk of given center and radius."""

    kind: str
    a: float = -1.0
    b: float = 1.0
    center: complex = 0.0
    radius: float = 1.0

    def __post_init__(self):
        if self.kind not in ("interval", "disk"):
            raise ParameterError(f"unknown reference set kind {self.kind!r}")
        if self.kind == "interval" and not self.a < self.b:
            raise ParameterError("interval needs a < b")
        if self.kind == "disk" and not self.radius > 0:
            raise ParameterError("disk needs a positive radius")

    def __call__(self, z):
        if self.kind == "interval":
            return green_interval(z, self.a, self.b)
        return green_disk(z, self.center, self.radius)


def green_interval(z, a: float, b: float):
    """Green function of the complement of [a, b] with pole at infinity.

    Equals log|w + sqrt(w^2 - 1)| for the affine image w of z onto the
    reference interval [-1, 1], with the branch of the root chosen so the
    modulus is at least 1; zero on [a, b].
    """
    w = (2.0 * np.asarray(z, dtype=complex) - (a + b)) / (b - a)
    s = np.sqrt(w * w - 1.0)
    u = np.where(np.abs(w + s) >= 1.0, w + s, w - s)
    val = np.maximum(np.log(np.abs(u)), 0.0)
    return val if np.ndim(z) else float(val)


def green_disk(z, center: complex = 0.0, radius: float = 1.0):
    """log^+ of |z - center| / radius."""
    if not radius > 0:
        raise ParameterError("radius must be positive")
    val = np.maximum(np.log(np.abs(np.asarray(z) - center) / radius), 0.0)
    return val if np.ndim(z) else float(val)


def _slice_log_abs(t, anchors: np.ndarray, fmap: MapSpec):
    """Log modulus of the slice product at t (field factor excluded):
    sum of log|t - a_i| + log|f(t) - f(a_i)|."""
    t = np.asarray(t)
    tt = np.atleast_1d(t)
    fa = fmap(anchors)
    ft = fmap(tt)
    with np.errstate(divide="ignore"):
        vals = np.sum(np.log(np.abs(tt[:, None] - anchors[None, :])), axis=1) \
            + np.sum(np.log(np.abs(ft[:, None] - fa[None, :])), axis=1)
    return vals if np.ndim(t) else float(vals[0])


def wkq_lower_estimate(z, config: Configuration, grid: GridSet,
                       weight: WeightSpec, fmap: MapSpec):
    """Certified lower bound for the weighted extremal function at z.

    Slices the configuration through its first coordinate, normalizes the
    slice by its weighted sup norm over the grid, and returns the scaled log
    modulus at z.  The value is -inf exactly at the slice anchors.
    """
    if config.log_vdm == -np.inf:
        raise ParameterError("configuration must have a finite log Vandermonde")
    anchors = np.asarray(config.points[1:])
    k = config.k
    on_grid = _slice_log_abs(grid.points, anchors, fmap) \
        - k * np.asarray(weight(grid.points), dtype=float)
    norm = float(np.max(on_grid))
    if norm == -np.inf:
        raise StructuralError("slice vanishes identically on the grid")
    val = (_slice_log_abs(z, anchors, fmap) - norm) / k
    return val if np.ndim(z) else float(val)


@dataclass
class BwBoundReport:
    ks: list[int]
    per_k_max: list[float]
    spread: float
    slope: float
    passed: bool


def bw_bound_check(configs, grid: GridSet, test_points, da: GreenFunctionSpec,
                   weight: WeightSpec, fmap: MapSpec,
                   spread_tol: float = 0.5, trend_tol: float = 0.25) -> BwBoundReport:
    """Boundedness probe for the growth estimate off the set.

    For each supplied configuration order k and each test point z, forms
    B_k(z) as the slice lower bound minus the Green values at z and f(z), and
    checks that the per-k maxima stay within spread_tol of each other with no
    upward trend across k.
    """
    configs = list(configs)
    if len(configs) < 2:
        raise ParameterError("need configurations at two or more orders")
    zs = np.asarray(test_points)
    ks, maxima = [], []
    for cfg in configs:
        lk = np.atleast_1d(wkq_lower_estimate(zs, cfg, grid, weight, fmap))
        bk = lk - np.atleast_1d(da(zs)) - np.atleast_1d(da(fmap(zs)))
        ks.append(cfg.k)
        maxima.append(float(np.max(bk)))
    spread = max(maxima) - min(maxima)
    slope = float(np.polyfit(ks, maxima, 1)[0])
    passed = spread < spread_tol and slope * (max(ks) - min(ks)) <= trend_tol
    return BwBoundReport(ks, maxima, spread, slope, passed)
