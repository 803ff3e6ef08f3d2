"""Energy minimization over the probability simplex and its certificates.

Projected gradient descent with backtracking line search on the dense
quadratic form, Euclidean projection onto the simplex by sort-and-threshold.
The converged measure carries a residual certificate built from the balance
of the combined potential against the constant F_w: the potential must not
drop below F_w anywhere on the grid and must not exceed it on the support.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, ParameterError, StructuralError
from .geometry import DomainSet, GridSet, MapSpec, TruncationOptions, WeightSpec, \
    adaptive_truncation, build_grid, same_grid
from .kernel import DiscreteMeasure, KernelMatrix, assemble_kernel_matrix, \
    modified_potential


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 4000
    tol_energy: float = 1e-10
    tol_frostman: float = 1e-8
    plateau_span: int = 10
    armijo: float = 1e-4
    support_tol: float | None = None     # defaults to 1e-8 / n
    record_trace: bool = False

    def __post_init__(self):
        if self.max_iters < 1 or self.tol_energy < 0 or self.tol_frostman < 0:
            raise ParameterError("invalid solver options")


@dataclass
class ResidualReport:
    lower: float      # worst violation of potential >= F_w on the grid
    upper: float      # worst violation of potential <= F_w on the support
    tol: float
    passed: bool

    @property
    def worst(self) -> float:
        return max(self.lower, self.upper)


@dataclass
class EquilibriumResult:
    mu_star: DiscreteMeasure
    V_w: float
    F_w: float
    support_idx: np.ndarray
    residual_report: ResidualReport
    iterations: int
    converged: bool
    energy_trace: list[float] = field(default_factory=list)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w : w >= 0, sum(w) = 1} by sort and threshold."""
    a = np.sort(v)[::-1]
    thresholds = (np.cumsum(a) - 1.0) / np.arange(1, v.size + 1)
    rho = np.nonzero(a > thresholds)[0][-1]
    return np.maximum(v - thresholds[rho], 0.0)


def _support_tol(opts: SolverOptions, n: int) -> float:
    return opts.support_tol if opts.support_tol is not None else 1e-8 / n


def _residuals(kw: np.ndarray, w: np.ndarray, qv: np.ndarray, tau: float):
    """Certificate residuals from the current matrix-vector product.

    The combined potential at grid point i is (Kw)_i - <w, Q>, and the target
    constant is F_w = V_w - <w, Q>; both offsets cancel, so the residuals can
    be read off kw against the scalar V_w = <w, kw>.
    """
    v_w = float(w @ kw)
    lower = float(np.max(v_w - kw)) if kw.size else 0.0
    support = w > tau
    upper = float(np.max(kw[support] - v_w)) if support.any() else 0.0
    return max(lower, 0.0), max(upper, 0.0), v_w


def minimize_energy(km: KernelMatrix, Qvec: np.ndarray,
                    opts: SolverOptions = SolverOptions(),
                    initial: np.ndarray | None = None) -> EquilibriumResult:
    """Minimize the kernel quadratic form over the probability simplex.

    Parameters
    ----------
    km : KernelMatrix
        Symmetric finite kernel matrix (field included in its entries).
    Qvec : array
        Field values at the grid points, used for the F_w bookkeeping.
    opts : SolverOptions
        Iteration budget, energy-plateau tolerance, residual tolerance.
    initial : array, optional
        Starting weights (defaults to uniform); projected onto the simplex.

    Stops when the relative energy decrease stays below tol_energy for
    plateau_span consecutive iterations, or when the certificate residual
    drops below tol_frostman.  Returns converged=False with the best iterate
    when the budget runs out first.
    """
    K = km.values
    n = km.size
    qv = np.asarray(Qvec, dtype=float)
    if qv.shape != (n,):
        raise StructuralError("field vector does not match the kernel size")
    if initial is None:
        w = np.full(n, 1.0 / n)
    else:
        w = project_simplex(np.asarray(initial, dtype=float))
    tau = _support_tol(opts, n)

    def quad_form(v: np.ndarray):
        """Energy of a trial point; small supports go through a submatrix
        gather, full supports through a matvec (returned for reuse)."""
        idx = np.nonzero(v)[0]
        if idx.size <= n // 2:
            vs = v[idx]
            return float(vs @ (K[np.ix_(idx, idx)] @ vs)), None
        kv = K @ v
        return float(v @ kv), kv

    kw = K @ w
    e = float(w @ kw)
    trace = [e] if opts.record_trace else []
    plateau = 0
    converged = False
    iterations = 0
    for iterations in range(1, opts.max_iters + 1):
        g = 2.0 * kw
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient; check the kernel matrix")
        r_lo, r_hi, _ = _residuals(kw, w, qv, tau)
        if max(r_lo, r_hi) <= opts.tol_frostman:
            converged = True
            break
        t = 1.0
        accepted = False
        while t >= 1e-20:
            w_t = project_simplex(w - t * g)
            d = w_t - w
            gd = float(g @ d)
            e_t, kw_t = quad_form(w_t)
            if e_t <= e + opts.armijo * gd:
                accepted = True
                break
            t *= 0.5
        if accepted and e_t < e:
            rel = (e - e_t) / max(1.0, abs(e))
            w, e = w_t, e_t
            kw = kw_t if kw_t is not None else K @ w_t
            plateau = plateau + 1 if rel < opts.tol_energy else 0
        else:
            plateau += 1
        if opts.record_trace:
            trace.append(e)
        if plateau >= opts.plateau_span:
            converged = True
            break

    r_lo, r_hi, v_w = _residuals(kw, w, qv, tau)
    mu = DiscreteMeasure(km.grid, w)
    f_w = v_w - float(w @ qv)
    support_idx = np.nonzero(w > tau)[0]
    report = ResidualReport(r_lo, r_hi, opts.tol_frostman,
                            max(r_lo, r_hi) <= opts.tol_frostman)
    return EquilibriumResult(mu, v_w, f_w, support_idx, report,
                             iterations, converged, trace)


def frostman_check(res: EquilibriumResult, grid: GridSet, weight: WeightSpec,
                   fmap: MapSpec, tol: float) -> ResidualReport:
    """Recompute the potential balance from scratch and compare against F_w.

    Reports the worst shortfall of the combined potential below F_w over all
    grid points and the worst excess above F_w over the support; PASS when
    both stay within tol.
    """
    mu = res.mu_star
    if not same_grid(mu.grid, grid):
        raise StructuralError("result and grid do not match")
    u = modified_potential(mu, grid.points, weight, fmap)
    lower = max(float(np.max(res.F_w - u)), 0.0)
    if res.support_idx.size:
        upper = max(float(np.max(u[res.support_idx] - res.F_w)), 0.0)
    else:
        upper = 0.0
    return ResidualReport(lower, upper, tol, max(lower, upper) <= tol)


def certify_minimizer(mu: DiscreteMeasure, grid: GridSet, weight: WeightSpec,
                      fmap: MapSpec, tol: float,
                      support_tol: float | None = None) -> bool:
    """Balance certificate for an arbitrary probability measure.

    Sets the candidate constant to the support median of the combined
    potential; certifies when the potential clears it (within tol) everywhere
    and does not exceed it on the support.
    """
    if not same_grid(mu.grid, grid):
        raise StructuralError("measure and grid do not match")
    tau = support_tol if support_tol is not None else 1e-8 / grid.size
    support = mu.weights > tau
    if not support.any():
        raise StructuralError("measure has empty support")
    if support.sum() == 1:
        warnings.warn("single-point support: the upper balance condition is vacuous",
                      stacklevel=2)
    u = modified_potential(mu, grid.points, weight, fmap)
    c = float(np.median(u[support]))
    return bool(np.all(u >= c - tol) and np.all(u[support] <= c + tol))


def rate_function(mu: DiscreteMeasure, res: EquilibriumResult,
                  km: KernelMatrix, Qvec: np.ndarray | None = None) -> float:
    """Energy excess of mu over the computed minimum."""
    from .kernel import energy as _energy

    if not same_grid(mu.grid, km.grid) or not same_grid(res.mu_star.grid, km.grid):
        raise StructuralError("measure, result and kernel must share one grid")
    return _energy(mu, km) - res.V_w


def solve_on_grid(grid: GridSet, weight: WeightSpec, fmap: MapSpec,
                  opts: SolverOptions = SolverOptions(),
                  initial: np.ndarray | None = None) -> tuple[EquilibriumResult, KernelMatrix]:
    km = assemble_kernel_matrix(grid, weight, fmap)
    qv = np.asarray(weight(grid.points), dtype=float)
    return minimize_energy(km, qv, opts, initial), km


def truncation_solver(weight: WeightSpec, fmap: MapSpec, n: int,
                      opts: SolverOptions = SolverOptions()):
    """Equilibrium callback for adaptive truncation: domain -> (grid, weights)."""
    def solve(domain: DomainSet):
        grid = build_grid(domain, n)
        res, _ = solve_on_grid(grid, weight, fmap, opts)
        return grid, res.mu_star.weights
    return solve


def solve_on_domain(domain: DomainSet, weight: WeightSpec, fmap: MapSpec, n: int,
                    opts: SolverOptions = SolverOptions(),
                    trunc: TruncationOptions = TruncationOptions(),
                    probe_opts: SolverOptions | None = None):
    """Truncate if needed, grid, and solve; returns (result, kernel, grid, radius).

    Radius probes only need the support location, so the truncation loop runs
    a shorter solver profile by default; the final solve uses the full one.
    """
    if probe_opts is None:
        probe_opts = SolverOptions(max_iters=min(800, opts.max_iters),
                                   tol_energy=opts.tol_energy,
                                   tol_frostman=max(opts.tol_frostman, 1e-6))
    radius, bounded = adaptive_truncation(domain, weight, fmap,
                                          truncation_solver(weight, fmap, n, probe_opts),
                                          trunc)
    grid = build_grid(bounded, n)
    res, km = solve_on_grid(grid, weight, fmap, opts)
    return res, km, grid, radius
