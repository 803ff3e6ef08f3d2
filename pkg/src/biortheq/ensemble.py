"""Ensemble sampling against a base measure, partition sums, tail and
neighborhood statistics.

The target on (k+1)-tuples of grid points has density proportional to the
absolute weighted two-factor Vandermonde against the product base measure.
Single-site Metropolis with fresh proposals drawn from the normalized base
measure makes the base-measure factors cancel in the acceptance ratio and is
irreducible on the support in one step.  All randomness flows through one
seeded generator, so runs are bitwise reproducible.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .cdf import config_sup_distance, grid_cdf, halfplane_cdf
from .errors import ParameterError, ResourceError, StructuralError
from .geometry import GridSet, MapSpec, WeightSpec, same_grid
from .kernel import DiscreteMeasure

PAIR_TABLE_MAX = 2048
CHECKPOINT_INTERVAL = 50_000


@dataclass(eq=False)
class BaseMeasure:
    """Nonnegative cell weights over a grid with optional mass-density
    parameters (T, r0) and a decay witness for unbounded problems."""

    grid: GridSet
    nu: np.ndarray
    mass_T: float | None = None
    mass_r0: float | None = None
    decay_alpha: float | None = None

    def __post_init__(self):
        self.nu = np.asarray(self.nu, dtype=float)
        if self.nu.shape != (self.grid.size,):
            raise StructuralError("base-measure weights do not match the grid")
        if np.any(self.nu < 0) or not np.all(np.isfinite(self.nu)):
            raise ParameterError("base-measure weights must be finite and nonnegative")
        if not self.nu.sum() > 0:
            raise StructuralError("base measure has zero total mass")

    @property
    def total(self) -> float:
        return float(self.nu.sum())

    @classmethod
    def lebesgue(cls, grid: GridSet, **kw) -> "BaseMeasure":
        return cls(grid, grid.cell_mass.copy(), **kw)

    @classmethod
    def from_density(cls, grid: GridSet, density, **kw) -> "BaseMeasure":
        return cls(grid, np.asarray(density(grid.points), dtype=float) * grid.cell_mass, **kw)


@dataclass
class MassDensityReport:
    passed: bool
    worst_point: complex
    worst_radius: float
    worst_ratio: float
    T: float
    r0: float


def mass_density_check(base: BaseMeasure, T: float | None = None,
                       r0: float | None = None, levels: int = 13) -> MassDensityReport:
    """Check nu(D(z, r)) >= r^T at every grid point over dyadic radii r0/2^m.

    Disk masses sum the cell weights within distance r of the point (closed
    disk with a relative slack for ties).  Returns the worst ratio and its
    location.
    """
    T = T if T is not None else base.mass_T
    r0 = r0 if r0 is not None else base.mass_r0
    if T is None or r0 is None:
        raise ParameterError("mass-density check needs T and r0")
    if not T > 0:
        raise ParameterError("T must be positive")
    pts = base.grid.points
    span = float(np.abs(pts[:, None] - pts[None, :]).max()) if pts.size > 1 else 0.0
    if not (0 < r0 <= max(span, r0)):
        raise ParameterError("r0 must be positive and at most the domain diameter")
    if span > 0 and r0 > span:
        raise ParameterError("r0 exceeds the grid diameter")
    dist = np.abs(pts[:, None] - pts[None, :])
    worst = (math.inf, 0j, 0.0)
    for m in range(levels):
        r = r0 / 2.0 ** m
        masses = (dist <= r * (1 + 1e-12)) @ base.nu
        ratios = masses / r ** T
        i = int(np.argmin(ratios))
        if ratios[i] < worst[0]:
            worst = (float(ratios[i]), pts[i], r)
    ratio, point, radius = worst
    return MassDensityReport(ratio >= 1.0, point, radius, ratio, T, r0)


# ---------------------------------------------------------------------------
# Metropolis chain
# ---------------------------------------------------------------------------

@dataclass
class ChainState:
    """Live chain data: current tuple (as grid indices), cached log density,
    per-site pair sums, and proposal counters."""

    indices: np.ndarray
    log_density: float
    site_sums: np.ndarray
    proposals: int = 0
    acceptances: int = 0


@dataclass(eq=False)
class SampleBatch:
    """Thinned configurations with their log densities and summaries."""

    grid: GridSet
    k: int
    indices: np.ndarray          # (count, k+1) int
    log_vdm: np.ndarray          # (count,)
    acceptance_rate: float
    seed: int
    steps: int
    burn: int
    thin: int
    mean_cdf: np.ndarray
    max_drift: float

    @property
    def count(self) -> int:
        return int(self.indices.shape[0])

    def points(self) -> np.ndarray:
        return self.grid.points[self.indices]

    def to_csv(self, path) -> None:
        """One row per kept configuration: the k+1 points then log_vdm."""
        pts = self.points()
        is_complex = np.iscomplexobj(pts)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if is_complex:
                head = [f"z{j}_{part}" for j in range(self.k + 1) for part in ("re", "im")]
            else:
                head = [f"z{j}" for j in range(self.k + 1)]
            writer.writerow(head + ["log_vdm"])
            for row, lv in zip(pts, self.log_vdm):
                if is_complex:
                    cells = [format(v, ".17g") for z in row for v in (z.real, z.imag)]
                else:
                    cells = [format(float(z), ".17g") for z in row]
                writer.writerow(cells + [format(float(lv), ".17g")])

    def summary_dict(self) -> dict:
        return {
            "k": self.k,
            "count": self.count,
            "acceptance_rate": self.acceptance_rate,
            "seed": self.seed,
            "steps": self.steps,
            "burn": self.burn,
            "thin": self.thin,
            "max_drift": self.max_drift,
            "cdf_grid": [float(x) for x in np.real(self.grid.points)],
            "mean_cdf": [float(v) for v in self.mean_cdf],
        }


def _pair_table(pts: np.ndarray, fv: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(np.abs(pts[:, None] - pts[None, :])) \
            + np.log(np.abs(fv[:, None] - fv[None, :]))


def _chain_columns(pts, fv, cur_pts, cur_fv, i):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(cur_pts - pts[i])) + np.log(np.abs(cur_fv - fv[i]))


def mcmc_sample(base: BaseMeasure, k: int, weight: WeightSpec, fmap: MapSpec,
                steps: int, burn: int | None = None, thin: int | None = None,
                seed: int = 0) -> SampleBatch:
    """Single-site Metropolis targeting the ensemble on (k+1)-tuples.

    Parameters
    ----------
    steps : int
        Total proposal count.
    burn, thin : int, optional
        Proposals to discard, and proposals between kept samples.  Defaults:
        a quarter of the steps, and k*n/10 (at least 1).
    seed : int
        Generator seed; fixed seed gives a bitwise identical batch.

    Each proposal redraws one coordinate from the normalized base measure, so
    the acceptance ratio reduces to the change of the log Vandermonde terms
    touching that coordinate (order k work).  The cached log density is
    recomputed from scratch at checkpoints and the worst drift is reported.
    """
    grid = base.grid
    n = grid.size
    if k < 1:
        raise ParameterError("k must be at least 1")
    if steps < 1:
        raise ParameterError("steps must be positive")
    burn = steps // 4 if burn is None else int(burn)
    thin = max(1, (k * n) // 10) if thin is None else int(thin)
    if burn < 0 or thin < 1 or steps <= burn:
        raise ParameterError("need steps > burn >= 0 and thin >= 1")
    prob = base.nu / base.total
    if int(np.count_nonzero(prob)) < k + 1:
        raise StructuralError("base measure supports fewer than k+1 distinct points")

    rng = np.random.default_rng(seed)
    pts = grid.points
    fv = fmap(pts)
    qv = np.asarray(weight(pts), dtype=float)
    cum = np.cumsum(prob)
    cum[-1] = 1.0
    table = _pair_table(pts, fv) if n <= PAIR_TABLE_MAX else None

    idx = rng.choice(n, size=k + 1, replace=False, p=prob).astype(np.int64)

    def column(i, cur_idx):
        if table is not None:
            return table[i, cur_idx]
        return _chain_columns(pts, fv, pts[cur_idx], fv[cur_idx], i)

    def full_sums(cur_idx):
        cols = np.empty((k + 1, k + 1))
        for a in range(k + 1):
            cols[a] = column(cur_idx[a], cur_idx)
        np.fill_diagonal(cols, 0.0)
        site = cols.sum(axis=1)
        lv = 0.5 * float(site.sum()) - k * float(qv[cur_idx].sum())
        return site, lv

    site, lv = full_sums(idx)
    state = ChainState(idx, lv, site)

    keep_total = (steps - burn) // thin
    kept_idx = np.empty((keep_total, k + 1), dtype=np.int64)
    kept_lv = np.empty(keep_total)
    kept = 0
    cdf_accum = np.zeros(n)
    max_drift = 0.0

    chunk = 200_000
    done = 0
    while done < steps:
        m = min(chunk, steps - done)
        coords = rng.integers(0, k + 1, size=m)
        prop = np.searchsorted(cum, rng.random(m), side="right")
        logu = np.log(rng.random(m))
        for t in range(m):
            state.proposals += 1
            j = coords[t]
            ip = int(prop[t])
            old = int(idx[j])
            if ip == old:
                state.acceptances += 1
            else:
                col_new = column(ip, idx)
                s_new = float(col_new.sum() - col_new[j])
                delta = (s_new - site[j]) - k * (qv[ip] - qv[old])
                if logu[t] < delta:
                    state.acceptances += 1
                    col_old = column(old, idx)
                    site += col_new - col_old
                    site[j] = s_new
                    idx[j] = ip
                    lv += delta
            step_no = done + t + 1
            if step_no > burn and (step_no - burn) % thin == 0 and kept < keep_total:
                kept_idx[kept] = idx
                kept_lv[kept] = lv
                counts = np.bincount(idx, minlength=n)
                cdf_accum += np.cumsum(counts)
                kept += 1
            if step_no % CHECKPOINT_INTERVAL == 0:
                site_chk, lv_chk = full_sums(idx)
                max_drift = max(max_drift, abs(lv_chk - lv))
                site, lv = site_chk, lv_chk
        done += m

    site_chk, lv_chk = full_sums(idx)
    max_drift = max(max_drift, abs(lv_chk - lv))
    state.log_density = lv_chk
    state.site_sums = site_chk

    mean_cdf = cdf_accum / (kept * (k + 1)) if kept else np.zeros(n)
    return SampleBatch(grid, k, kept_idx[:kept], kept_lv[:kept],
                       state.acceptances / max(state.proposals, 1),
                       seed, steps, burn, thin, mean_cdf, float(max_drift))


# ---------------------------------------------------------------------------
# Partition sums
# ---------------------------------------------------------------------------

def _logsumexp(a: np.ndarray) -> float:
    a = np.asarray(a, dtype=float).ravel()
    m = float(np.max(a)) if a.size else -math.inf
    if m == -math.inf:
        return -math.inf
    return m + math.log(float(np.sum(np.exp(a - m))))


def _tuple_log_vdm(pts_sel: np.ndarray, fv_sel: np.ndarray, qv_sel: np.ndarray,
                   k: int) -> np.ndarray:
    """Log Vandermonde for a batch of tuples given per-tuple coordinate arrays
    of shape (N, k+1)."""
    lv = np.zeros(pts_sel.shape[0])
    with np.errstate(divide="ignore"):
        for a in range(k + 1):
            for b in range(a + 1, k + 1):
                lv += np.log(np.abs(pts_sel[:, a] - pts_sel[:, b]))
                lv += np.log(np.abs(fv_sel[:, a] - fv_sel[:, b]))
    lv -= k * qv_sel.sum(axis=1)
    return lv


def exact_zk_grid(base: BaseMeasure, k: int, weight: WeightSpec, fmap: MapSpec,
                  budget: int = 20_000_000) -> float:
    """Exact partition sum over all grid tuples, evaluated in the log domain."""
    if k < 1 or k > 3:
        raise ParameterError("exact summation is limited to k <= 3")
    n = base.grid.size
    dims = k + 1
    if n ** dims > budget:
        raise ResourceError(f"{n}^{dims} tuples exceed the budget {budget}")
    pts = base.grid.points
    fv = fmap(pts)
    qv = np.asarray(weight(pts), dtype=float)
    with np.errstate(divide="ignore"):
        table = np.log(np.abs(pts[:, None] - pts[None, :])) \
            + np.log(np.abs(fv[:, None] - fv[None, :]))
        log_nu = np.log(base.nu)
    per_point = log_nu - k * qv
    total = np.zeros((n,) * dims)
    for a in range(dims):
        for b in range(a + 1, dims):
            shape = [1] * dims
            shape[a] = n
            shape[b] = n
            total += table.reshape(shape)
    for a in range(dims):
        shape = [1] * dims
        shape[a] = n
        total += per_point.reshape(shape)
    return float(np.exp(_logsumexp(total)))


@dataclass
class ZkEstimate:
    estimate: float
    log_estimate: float
    stderr_log: float
    n_samples: int
    seed: int
    degenerate: bool = False


def estimate_zk_mc(base: BaseMeasure, k: int, weight: WeightSpec, fmap: MapSpec,
                   N: int, seed: int = 0) -> ZkEstimate:
    """Plain Monte Carlo partition estimate from iid product-base tuples.

    Averages the Vandermonde magnitudes in the log domain and rescales by the
    total mass to the power k+1; the spread is a jackknife standard error of
    the log estimate.
    """
    if N < 100:
        raise ParameterError("need at least 100 samples")
    rng = np.random.default_rng(seed)
    grid = base.grid
    pts = grid.points
    fv = fmap(pts)
    qv = np.asarray(weight(pts), dtype=float)
    cum = np.cumsum(base.nu / base.total)
    cum[-1] = 1.0
    draws = np.searchsorted(cum, rng.random((N, k + 1)), side="right")
    lv = _tuple_log_vdm(pts[draws], fv[draws], qv[draws], k)
    scale = (k + 1) * math.log(base.total)
    lse = _logsumexp(lv)
    if lse == -math.inf:
        return ZkEstimate(0.0, -math.inf, math.inf, N, seed, degenerate=True)
    log_est = lse - math.log(N) + scale
    rel = np.exp(lv - lse)
    with np.errstate(divide="ignore", invalid="ignore"):
        loo = lse + np.log1p(-rel)
    if not np.all(np.isfinite(loo)):
        stderr = math.inf
    else:
        theta = loo - math.log(N - 1)
        stderr = math.sqrt((N - 1) / N * float(np.sum((theta - theta.mean()) ** 2)))
    return ZkEstimate(float(np.exp(log_est)), float(log_est), float(stderr), N, seed)


@dataclass
class ZkRootEntry:
    k: int
    log_z: float
    root: float
    stderr_log: float | None
    method: str


@dataclass
class ZkSeries:
    entries: list[ZkRootEntry]
    reference_delta: float
    bm_surrogate: str


def zk_root_sequence(base: BaseMeasure, k_list, weight: WeightSpec, fmap: MapSpec,
                     N: int = 100_000, seed: int = 0,
                     budget: int = 20_000_000, solver_opts=None) -> ZkSeries:
    """Scaled partition roots Z_k^(2/k(k+1)) per k with the equilibrium
    reference exp(-V_w) for convergence plots.

    Small k within the exact budget are summed exactly, the rest estimated by
    Monte Carlo with per-k child seeds.  When the base measure carries (T, r0)
    the mass-density surrogate is enforced; otherwise it is reported unchecked.
    """
    from .equilibrium import SolverOptions, solve_on_grid

    k_list = list(k_list)
    if not k_list:
        raise ParameterError("k_list must not be empty")
    if base.mass_T is not None and base.mass_r0 is not None:
        report = mass_density_check(base)
        if not report.passed:
            raise ParameterError(
                f"base measure fails its mass-density condition at r={report.worst_radius}")
        bm_note = "mass-density PASS"
    else:
        bm_note = "unchecked (no (T, r0) on the base measure)"
    opts = solver_opts if solver_opts is not None else SolverOptions()
    res, _ = solve_on_grid(base.grid, weight, fmap, opts)
    children = np.random.SeedSequence(seed).spawn(len(k_list))
    entries = []
    n = base.grid.size
    for child, k in zip(children, k_list):
        if 1 <= k <= 3 and n ** (k + 1) <= budget:
            z = exact_zk_grid(base, k, weight, fmap, budget)
            log_z = math.log(z) if z > 0 else -math.inf
            entries.append(ZkRootEntry(k, log_z,
                                       math.exp(2.0 * log_z / (k * (k + 1))) if z > 0 else 0.0,
                                       None, "exact"))
        else:
            est = estimate_zk_mc(base, k, weight, fmap, N,
                                 seed=int(child.generate_state(1)[0]))
            root = math.exp(2.0 * est.log_estimate / (k * (k + 1))) \
                if est.log_estimate > -math.inf else 0.0
            entries.append(ZkRootEntry(k, est.log_estimate, root, est.stderr_log, "mc"))
    return ZkSeries(entries, float(np.exp(-res.V_w)), bm_note)


# ---------------------------------------------------------------------------
# Tail sets and neighborhood masses
# ---------------------------------------------------------------------------

def tail_probability(batch: SampleBatch, eta: float, delta_ref: float) -> float:
    """Fraction of kept samples whose scaled Vandermonde root falls below
    delta_ref - eta; the threshold clamps to 0 (empty tail) when eta >= delta_ref."""
    if batch.count == 0:
        raise StructuralError("empty sample batch")
    if not delta_ref > 0:
        raise ParameterError("delta_ref must be positive")
    if eta < 0:
        raise ParameterError("eta must be nonnegative")
    threshold = delta_ref - eta
    if threshold <= 0:
        return 0.0
    k = batch.k
    log_threshold = 0.5 * k * (k + 1) * math.log(threshold)
    return float(np.mean(batch.log_vdm < log_threshold))


@dataclass(frozen=True)
class CdfBall:
    """Neighborhood of a reference measure in sup distance of distribution
    functions (half-plane discrepancy on complex grids)."""

    reference: DiscreteMeasure
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError("ball radius must be positive")


@dataclass
class NeighborhoodMass:
    k: int
    sigma: float
    root: float
    hits: int
    total: int
    zero_hits: bool
    one_sided_bound: float | None = None


def neighborhood_mass(base: BaseMeasure, k: int, weight: WeightSpec, fmap: MapSpec,
                      ball: CdfBall, batch: SampleBatch | None = None,
                      steps: int | None = None, burn: int | None = None,
                      thin: int | None = None, seed: int | None = None) -> NeighborhoodMass:
    """Chain estimate of the ensemble mass of a distribution-function ball.

    Counts kept samples whose interpolated configuration CDF stays within the
    ball radius of the reference CDF; reports the hit fraction and its scaled
    log root 2 log(sigma) / (k (k+1)).  Zero hits come back flagged with a
    one-sided bound of 1/count.
    """
    if batch is None:
        if steps is None or seed is None:
            raise ParameterError("provide a batch, or steps and seed to run one")
        batch = mcmc_sample(base, k, weight, fmap, steps, burn, thin, seed)
    if batch.k != k or not same_grid(batch.grid, base.grid):
        raise StructuralError("batch does not match the requested ensemble")
    if not same_grid(ball.reference.grid, base.grid):
        raise StructuralError("ball reference lives on a different grid")
    if batch.count == 0:
        raise StructuralError("empty sample batch")
    ref = ball.reference.normalized()
    gpts = base.grid.points
    pts = batch.points()
    if base.grid.is_real:
        ref_cdf = grid_cdf(ref.weights)
        dists = np.array([config_sup_distance(row, gpts, ref_cdf) for row in pts])
    else:
        ref_cdf = halfplane_cdf(gpts, ref.weights, gpts)
        w_cfg = np.full(k + 1, 1.0 / (k + 1))
        dists = np.array([float(np.max(np.abs(halfplane_cdf(row, w_cfg, gpts) - ref_cdf)))
                          for row in pts])
    hits = int(np.sum(dists <= ball.radius))
    sigma = hits / batch.count
    root = 2.0 * math.log(sigma) / (k * (k + 1)) if hits else -math.inf
    return NeighborhoodMass(k, sigma, root, hits, batch.count, hits == 0,
                            None if hits else 1.0 / batch.count)


@dataclass
class LdpReport:
    ks: list[int]
    roots: list[float]
    mean_root: float
    slope: float
    rate_ref: float
    magnitude_ratio: float
    consistent_within_factor3: bool
    sigmas: list[float] = field(default_factory=list)
    degenerate: bool = False


def ldp_slope(series, rate_ref: float) -> LdpReport:
    """Constant fit of the scaled log neighborhood masses with a qualitative
    comparison against the rate value of the ball's center.

    Desk-scale k cannot reach the limit; the report states the trend and
    whether the mean root magnitude lies within a factor of 3 of the rate.
    """
    series = list(series)
    if len(series) < 3:
        raise ParameterError("need at least 3 k-values")
    live = [s for s in series if s.sigma > 0]
    if not live:
        return LdpReport([s.k for s in series], [], math.nan, math.nan, rate_ref,
                         math.nan, False, [s.sigma for s in series], degenerate=True)
    ks = [s.k for s in live]
    roots = [s.root for s in live]
    mean_root = float(np.mean(roots))
    slope = float(np.polyfit(ks, roots, 1)[0]) if len(live) >= 2 else 0.0
    ratio = abs(mean_root) / rate_ref if rate_ref > 0 else math.inf
    return LdpReport(ks, roots, mean_root, slope, rate_ref, ratio,
                     bool(1.0 / 3.0 <= ratio <= 3.0),
                     [s.sigma for s in series])
