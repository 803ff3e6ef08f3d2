"""Domains, grids, maps and external fields for the weighted energy problem.

The set K is either a finite union of real intervals (the outer endpoints may
be infinite) or a single axis-aligned rectangle in the complex plane.  Maps f
and fields Q are small evaluable specifications; admissibility of a field on
an unbounded domain is decided by a numeric screen on geometric shells, and
unbounded problems are reduced to compact ones by adaptive truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NoConvergenceError, NumericalError, ParameterError


# ---------------------------------------------------------------------------
# Domain and grid types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DomainSet:
    """Union of disjoint real intervals, or one closed rectangle in C.

    Intervals are ordered and pairwise disjoint.  Only the outer endpoints may
    be infinite: the first interval may start at -inf and the last may end at
    +inf (the whole real line is the single component (-inf, +inf)).
    """

    components: tuple[tuple[float, float], ...] = ()
    rectangle: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if (len(self.components) == 0) == (self.rectangle is None):
            raise ParameterError("domain needs interval components or a rectangle, not both")
        if self.rectangle is not None:
            x0, x1, y0, y1 = self.rectangle
            if not (np.isfinite([x0, x1, y0, y1]).all() and x0 < x1 and y0 < y1):
                raise ParameterError("rectangle must be bounded with positive side lengths")
            return
        comps = self.components
        for i, (a, b) in enumerate(comps):
            if not a < b:
                raise ParameterError(f"interval component {i} has empty interior: [{a}, {b}]")
            if a == -math.inf and i != 0:
                raise ParameterError("only the first component may extend to -inf")
            if b == math.inf and i != len(comps) - 1:
                raise ParameterError("only the last component may extend to +inf")
        for (a0, b0), (a1, b1) in zip(comps, comps[1:]):
            if not b0 < a1:
                raise ParameterError("interval components must be disjoint and sorted")

    @classmethod
    def intervals(cls, pairs: Sequence[Sequence[float]]) -> "DomainSet":
        comps = tuple(sorted((float(a), float(b)) for a, b in pairs))
        return cls(components=comps)

    @classmethod
    def rect(cls, x0: float, x1: float, y0: float, y1: float) -> "DomainSet":
        return cls(rectangle=(float(x0), float(x1), float(y0), float(y1)))

    @property
    def is_real(self) -> bool:
        return self.rectangle is None

    @property
    def unbounded(self) -> bool:
        if self.rectangle is not None:
            return False
        return math.isinf(self.components[0][0]) or math.isinf(self.components[-1][1])

    @property
    def measure(self) -> float:
        """Total length (intervals) or area (rectangle)."""
        if self.rectangle is not None:
            x0, x1, y0, y1 = self.rectangle
            return (x1 - x0) * (y1 - y0)
        return float(sum(b - a for a, b in self.components))

    @property
    def bounding_radius(self) -> float:
        """Largest modulus over the set; infinite for unbounded domains."""
        if self.rectangle is not None:
            x0, x1, y0, y1 = self.rectangle
            return max(abs(complex(x, y)) for x in (x0, x1) for y in (y0, y1))
        return max(abs(self.components[0][0]), abs(self.components[-1][1]))

    def truncate(self, radius: float) -> "DomainSet":
        """Intersect with the closed disk of the given radius about 0."""
        if radius <= 0:
            raise ParameterError("truncation radius must be positive")
        if self.rectangle is not None:
            return self
        clipped = []
        for a, b in self.components:
            lo, hi = max(a, -radius), min(b, radius)
            if lo < hi:
                clipped.append((lo, hi))
        if not clipped:
            raise DomainError(f"truncation at radius {radius} leaves the domain empty")
        return DomainSet(components=tuple(clipped))

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_1d(np.asarray(points))
        if self.rectangle is not None:
            x0, x1, y0, y1 = self.rectangle
            re, im = np.real(pts), np.imag(pts)
            return (re >= x0 - tol) & (re <= x1 + tol) & (im >= y0 - tol) & (im <= y1 + tol)
        ok = np.zeros(pts.shape, dtype=bool)
        x = np.real(pts)
        for a, b in self.components:
            ok |= (x >= a - tol) & (x <= b + tol)
        return ok & (np.imag(pts) == 0)


@dataclass(eq=False)
class GridSet:
    """Quadrature discretization of a domain: points, cell masses, spacing.

    ``spacing`` is half the minimum cell width and doubles as the kernel
    regularization scale.  ``parent`` is None for hand-built grids (tests may
    place points on curves); grids from :func:`build_grid` always carry their
    domain and satisfy the mass-sum identity.
    """

    points: np.ndarray
    cell_mass: np.ndarray
    spacing: float
    parent: DomainSet | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points)
        self.cell_mass = np.asarray(self.cell_mass, dtype=float)
        if self.points.ndim != 1 or self.points.shape != self.cell_mass.shape:
            raise ParameterError("points and cell_mass must be equal-length 1-d arrays")
        if self.points.size == 0:
            raise ParameterError("grid must contain at least one point")
        if not self.spacing > 0:
            raise ParameterError("grid spacing must be positive")
        if np.any(self.cell_mass <= 0):
            raise ParameterError("cell masses must be positive")
        if self.parent is not None:
            if not bool(np.all(self.parent.contains(self.points))):
                raise DomainError("grid points fall outside the parent domain")
            total = float(self.cell_mass.sum())
            if abs(total - self.parent.measure) > 1e-12 * max(1.0, self.parent.measure):
                raise NumericalError("cell masses do not sum to the domain measure")

    @property
    def size(self) -> int:
        return int(self.points.size)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.points)


def same_grid(a: GridSet, b: GridSet) -> bool:
    return a is b or (a.size == b.size and bool(np.array_equal(a.points, b.points)))


# ---------------------------------------------------------------------------
# Map and field specifications
# ---------------------------------------------------------------------------

_MAP_VARIANTS = ("identity", "power", "exp", "log", "polynomial")


@dataclass(frozen=True)
class MapSpec:
    """The fixed map f: identity, principal power/log on (0, inf), exp,
    or a real-coefficient polynomial.  Evaluable with derivative."""

    variant: str
    theta: float | None = None
    coefficients: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.variant not in _MAP_VARIANTS:
            raise ParameterError(f"unknown map variant {self.variant!r}")
        if self.variant == "power":
            if self.theta is None or not self.theta > 0:
                raise ParameterError("power map needs a positive exponent")
        if self.variant == "polynomial":
            if not self.coefficients:
                raise ParameterError("polynomial map needs coefficients")

    @classmethod
    def identity(cls) -> "MapSpec":
        return cls("identity")

    @classmethod
    def power(cls, theta: float) -> "MapSpec":
        return cls("power", theta=float(theta))

    @classmethod
    def exp(cls) -> "MapSpec":
        return cls("exp")

    @classmethod
    def log(cls) -> "MapSpec":
        return cls("log")

    @classmethod
    def polynomial(cls, coefficients: Sequence[float]) -> "MapSpec":
        return cls("polynomial", coefficients=tuple(float(c) for c in coefficients))

    @property
    def requires_positive(self) -> bool:
        return self.variant in ("power", "log")

    def __call__(self, z):
        z = np.asarray(z)
        if self.variant == "identity":
            return z + 0.0
        if self.variant == "power":
            return np.power(z, self.theta)
        if self.variant == "exp":
            return np.exp(z)
        if self.variant == "log":
            return np.log(z)
        out = np.zeros_like(z, dtype=complex if np.iscomplexobj(z) else float)
        for c in reversed(self.coefficients):
            out = out * z + c
        return out

    def derivative(self, z):
        z = np.asarray(z)
        if self.variant == "identity":
            return np.ones_like(z, dtype=float) + 0.0 * z
        if self.variant == "power":
            return self.theta * np.power(z, self.theta - 1.0)
        if self.variant == "exp":
            return np.exp(z)
        if self.variant == "log":
            return 1.0 / z
        out = np.zeros_like(z, dtype=complex if np.iscomplexobj(z) else float)
        for j in range(len(self.coefficients) - 1, 0, -1):
            out = out * z + j * self.coefficients[j]
        return out

    def validate_domain(self, domain: DomainSet) -> list[str]:
        """Branch-domain diagnostics; empty when the pairing is legal."""
        problems = []
        if self.requires_positive:
            if not domain.is_real:
                problems.append(f"{self.variant} map requires a real domain in (0, inf)")
            else:
                lo = domain.components[0][0]
                floor = 0.0
                if self.variant == "log" and lo <= floor:
                    problems.append("log map requires the domain inside (0, inf)")
                if self.variant == "power" and lo < floor:
                    problems.append("power map requires the domain inside [0, inf)")
        return problems


@dataclass(frozen=True)
class WeightSpec:
    """External field Q as a finite sum of c*x^p and c*|z|^p terms, plus an
    optional tabulated component interpolated on a real grid.

    All supported variants are continuous, hence lower semicontinuous and
    bounded below on bounded sets.
    """

    terms: tuple[tuple[float, float, str], ...] = ()
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self):
        for c, p, kind in self.terms:
            if kind not in ("x", "abs"):
                raise ParameterError(f"unknown weight term kind {kind!r}")
            if not (np.isfinite(c) and np.isfinite(p)):
                raise ParameterError("weight term coefficients must be finite")
        if self.table is not None:
            xs, vals = self.table
            if len(xs) != len(vals) or len(xs) < 2:
                raise ParameterError("tabulated weight needs matching x/value arrays")
            if any(b <= a for a, b in zip(xs, xs[1:])):
                raise ParameterError("tabulated weight abscissae must increase")

    @classmethod
    def zero(cls) -> "WeightSpec":
        return cls()

    @classmethod
    def monomial(cls, c: float, p: float, kind: str = "x") -> "WeightSpec":
        return cls(terms=((float(c), float(p), kind),))

    @classmethod
    def from_terms(cls, terms: Sequence[Sequence]) -> "WeightSpec":
        return cls(terms=tuple((float(c), float(p), str(kind)) for c, p, kind in terms))

    @classmethod
    def tabulated(cls, xs: Sequence[float], values: Sequence[float]) -> "WeightSpec":
        return cls(table=(tuple(float(x) for x in xs), tuple(float(v) for v in values)))

    @property
    def is_zero(self) -> bool:
        return not self.terms and self.table is None

    def __call__(self, z):
        z = np.asarray(z)
        out = np.zeros(z.shape, dtype=float)
        for c, p, kind in self.terms:
            if kind == "x":
                base = np.real(z) if np.iscomplexobj(z) else z
                out = out + c * np.power(base, p)
            else:
                out = out + c * np.power(np.abs(z), p)
        if self.table is not None:
            xs, vals = self.table
            out = out + np.interp(np.real(z), xs, vals)
        return out if out.shape else float(out)

    def scaled(self, factor: float) -> "WeightSpec":
        terms = tuple((c * factor, p, kind) for c, p, kind in self.terms)
        table = None
        if self.table is not None:
            xs, vals = self.table
            table = (xs, tuple(v * factor for v in vals))
        return WeightSpec(terms=terms, table=table)


# ---------------------------------------------------------------------------
# Admissibility screen
# ---------------------------------------------------------------------------

def psi(z, weight: WeightSpec, fmap: MapSpec):
    """Margin of the field over the combined log scale of z and f(z):
    Q(z) - (1/2) log[(1+|z|^2)(1+|f(z)|^2)]."""
    z = np.asarray(z)
    fz = fmap(z)
    val = weight(z) - 0.5 * np.log((1.0 + np.abs(z) ** 2) * (1.0 + np.abs(fz) ** 2))
    return val if np.ndim(val) else float(val)


@dataclass(frozen=True)
class ShellSchedule:
    """Geometric radius schedule r0 * 2^j for j = 0..levels-1."""

    r0: float = 1.0
    levels: int = 20
    samples_per_segment: int = 64

    def __post_init__(self):
        if not (self.r0 > 0 and self.levels >= 2 and self.samples_per_segment >= 4):
            raise ParameterError("invalid shell schedule")

    def radii(self) -> np.ndarray:
        return self.r0 * 2.0 ** np.arange(self.levels + 1)


@dataclass
class AdmissibilityReport:
    verdict: str                      # "ADMISSIBLE" or "SUSPECT"
    shell_minima: list[tuple[float, float, float | None]]  # (r_lo, r_hi, min psi)
    offending_shell: int | None
    threshold: float
    trivially_compact: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return self.verdict == "ADMISSIBLE"


def _shell_segments(domain: DomainSet, r_lo: float, r_hi: float):
    segs = []
    for a, b in domain.components:
        lo, hi = max(a, r_lo), min(b, r_hi)
        if lo < hi:
            segs.append((lo, hi))
        lo, hi = max(a, -r_hi), min(b, -r_lo)
        if lo < hi:
            segs.append((lo, hi))
    return segs


def check_f_admissible(domain: DomainSet, weight: WeightSpec, fmap: MapSpec,
                       shells: ShellSchedule = ShellSchedule(),
                       threshold: float = 1.0) -> AdmissibilityReport:
    """Numeric screen for divergence of psi along the domain.

    Scans shells {r_j <= |x| < r_{j+1}} on a geometric schedule and records the
    minimum of psi over each.  Verdict ADMISSIBLE when the final shell sets the
    overall record, the last few shell minima strictly increase, and the final
    minimum clears the threshold.  Bounded domains are admissible outright
    (the field is finite on a nonempty set by construction).  This is a
    screen for the supported symbolic family, not a proof.
    """
    notes: list[str] = []
    if not domain.unbounded:
        probe = build_grid(domain, 16)
        if not np.all(np.isfinite(weight(probe.points))):
            raise DomainError("field evaluates non-finite on a compact domain")
        return AdmissibilityReport("ADMISSIBLE", [], None, threshold,
                                   trivially_compact=True,
                                   notes=["compact domain: admissible for any continuous field"])

    radii = shells.radii()
    minima: list[tuple[float, float, float | None]] = []
    values: list[float] = []
    for j in range(shells.levels):
        segs = _shell_segments(domain, radii[j], radii[j + 1])
        if not segs:
            minima.append((radii[j], radii[j + 1], None))
            notes.append(f"shell {j} is empty, skipped")
            continue
        m = math.inf
        for lo, hi in segs:
            ts = lo + (np.arange(shells.samples_per_segment) + 0.5) * (hi - lo) / shells.samples_per_segment
            m = min(m, float(np.min(psi(ts, weight, fmap))))
        minima.append((radii[j], radii[j + 1], m))
        values.append(m)
    if not values:
        raise DomainError("all shells were empty; widen the schedule")

    verdict = "ADMISSIBLE"
    offending = None
    last = len(values) - 1
    if values[last] < threshold:
        verdict, offending = "SUSPECT", last
    elif last >= 1 and values[last] <= max(values[:last]):
        verdict, offending = "SUSPECT", int(np.argmax(values[:last]))
    else:
        tail = min(3, len(values))
        for i in range(last - tail + 2, last + 1):
            if i >= 1 and values[i] <= values[i - 1]:
                verdict, offending = "SUSPECT", i
                break
    return AdmissibilityReport(verdict, minima, offending, threshold, notes=notes)


def check_strong_f_admissible(domain: DomainSet, weight: WeightSpec, fmap: MapSpec,
                              delta: float,
                              shells: ShellSchedule = ShellSchedule(),
                              threshold: float = 1.0) -> AdmissibilityReport:
    """Screen for admissibility of the deflated field (1 - delta) Q."""
    if not (0.0 < delta < 1.0):
        raise ParameterError("delta must lie strictly between 0 and 1")
    return check_f_admissible(domain, weight.scaled(1.0 - delta), fmap, shells, threshold)


# ---------------------------------------------------------------------------
# Grids and truncation
# ---------------------------------------------------------------------------

def build_grid(domain: DomainSet, n: int) -> GridSet:
    """Midpoint grid with n points split across components by measure."""
    if n < 2:
        raise ParameterError("grid needs at least 2 points")
    if domain.rectangle is not None:
        x0, x1, y0, y1 = domain.rectangle
        w, h = x1 - x0, y1 - y0
        nx = max(1, round(math.sqrt(n * w / h)))
        ny = max(1, round(n / nx))
        dx, dy = w / nx, h / ny
        xs = x0 + (np.arange(nx) + 0.5) * dx
        ys = y0 + (np.arange(ny) + 0.5) * dy
        pts = (xs[:, None] + 1j * ys[None, :]).ravel()
        mass = np.full(pts.size, dx * dy)
        return GridSet(pts, mass, 0.5 * min(dx, dy), parent=domain)
    if domain.unbounded:
        raise ParameterError("unbounded domain: truncate before building a grid")
    comps = domain.components
    if n < len(comps):
        raise ParameterError("fewer grid points than domain components")
    lengths = np.array([b - a for a, b in comps])
    raw = n * lengths / lengths.sum()
    counts = np.maximum(1, np.floor(raw).astype(int))
    while counts.sum() < n:
        counts[int(np.argmax(raw - counts))] += 1
    while counts.sum() > n:
        eligible = np.where(counts > 1)[0]
        j = eligible[int(np.argmin((raw - counts)[eligible]))]
        counts[j] -= 1
    pts, mass = [], []
    for (a, b), ni in zip(comps, counts):
        h = (b - a) / ni
        pts.append(a + (np.arange(ni) + 0.5) * h)
        mass.append(np.full(ni, h))
    pts = np.concatenate(pts)
    mass = np.concatenate(mass)
    return GridSet(pts, mass, 0.5 * float(mass.min()), parent=domain)


@dataclass(frozen=True)
class TruncationOptions:
    r_init: float = 2.0
    max_doublings: int = 12
    margin: float = 0.05
    support_tol: float | None = None   # defaults to 1e-8 / n at use site

    def __post_init__(self):
        if not (self.r_init > 0 and self.max_doublings >= 0 and 0 < self.margin < 1):
            raise ParameterError("invalid truncation options")


def adaptive_truncation(domain: DomainSet, weight: WeightSpec, fmap: MapSpec,
                        solve: Callable[[DomainSet], tuple[GridSet, np.ndarray]],
                        opts: TruncationOptions = TruncationOptions()) -> tuple[float, DomainSet]:
    """Find a truncation radius whose equilibrium support is strictly interior.

    Solves on K intersected with {|z| <= R}, doubling R whenever the computed
    support (weights above the support threshold) reaches into the outer
    margin of the truncated region.  Deterministic given the options.  The
    admissibility screen must pass first; for bounded domains this is a no-op
    returning the bounding radius.
    """
    if not domain.unbounded:
        return domain.bounding_radius, domain
    report = check_f_admissible(domain, weight, fmap)
    if not report.admissible:
        raise DomainError("field failed the admissibility screen; "
                          f"offending shell {report.offending_shell}")
    radius = opts.r_init
    last = None
    for _ in range(opts.max_doublings + 1):
        truncated = domain.truncate(radius)
        grid, weights = solve(truncated)
        tol = opts.support_tol if opts.support_tol is not None else 1e-8 / weights.size
        support = np.abs(grid.points[weights > tol])
        if support.size == 0:
            raise NumericalError("equilibrium solve returned an empty support")
        last = (radius, truncated, grid, weights)
        if float(support.max()) <= (1.0 - opts.margin) * radius:
            return radius, truncated
        radius *= 2.0
    raise NoConvergenceError(
        f"support still touches the boundary after {opts.max_doublings} doublings",
        result=last)
