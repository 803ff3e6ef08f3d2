"""Config-driven batch driver.

One JSON config describes the problem (domain, map, field, grid size) and a
single task; the driver writes a summary JSON with every scalar result, CSV
tables shaped for plotting, and a manifest with a SHA-256 per artifact.
Floats in CSVs carry 17 significant digits so identical config and seed give
byte-identical files.

Exit codes: 0 success, 2 validation error, 3 numerical non-convergence
(artifacts still written), 4 resource guard.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cdf import grid_cdf
from .errors import (DomainError, NoConvergenceError, NumericalError,
                     ParameterError, ResourceError, StructuralError)
from .geometry import (DomainSet, MapSpec, ShellSchedule, TruncationOptions,
                       WeightSpec, adaptive_truncation, build_grid,
                       check_f_admissible, check_strong_f_admissible)
from .equilibrium import (SolverOptions, certify_minimizer, frostman_check,
                          solve_on_grid, truncation_solver)
from .ensemble import (BaseMeasure, mcmc_sample, zk_root_sequence)
from .extremal import GreenFunctionSpec, bw_bound_check, wkq_lower_estimate
from .fekete import exchange_optimize, fekete_sequence, greedy_leja

TASKS = ("equilibrium", "fekete", "sample", "partition", "frostman",
         "extremal", "admissibility")
STOCHASTIC_TASKS = ("sample", "partition")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NO_CONVERGENCE = 3
EXIT_RESOURCE = 4


def _fmt(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------

_TASK_DEFAULTS = {
    "equilibrium": {"max_iters": 4000, "tol_energy": 1e-10, "tol_frostman": 1e-8},
    "frostman": {"max_iters": 4000, "tol_energy": 1e-10, "tol_frostman": 1e-8,
                 "tol": 5e-3},
    "fekete": {"k_max": 10},
    "sample": {"k": 5, "steps": 100_000, "burn": None, "thin": None},
    "partition": {"k_list": [2, 4, 6], "N": 50_000},
    "extremal": {"k_list": [5, 10, 20], "test_points": [3.0],
                 "disk": {"center": 0.0, "radius": 2.0}},
    "admissibility": {"r0": 1.0, "levels": 20, "threshold": 1.0},
}


def resolve_config(cfg: dict) -> dict:
    """Fill defaults into a parsed config; returns a new dict."""
    out = {
        "problem": {
            "domain": cfg.get("problem", {}).get("domain", {"intervals": [[-1.0, 1.0]]}),
            "map": cfg.get("problem", {}).get("map", {"variant": "identity"}),
            "weight": cfg.get("problem", {}).get("weight", {"terms": []}),
            "n": cfg.get("problem", {}).get("n", 400),
            "truncation": {"r_init": 2.0, "max_doublings": 12,
                           **cfg.get("problem", {}).get("truncation", {})},
        },
        "task": dict(cfg.get("task", {})),
        "output": {"directory": "out", "formats": ["json", "csv"],
                   **cfg.get("output", {})},
    }
    name = out["task"].get("name")
    if name in _TASK_DEFAULTS:
        out["task"] = {**_TASK_DEFAULTS[name], **out["task"]}
    return out


def _build_domain(spec: dict) -> DomainSet:
    if "rectangle" in spec:
        return DomainSet.rect(*spec["rectangle"])
    pairs = [(float(a) if a is not None else -math.inf,
              float(b) if b is not None else math.inf)
             for a, b in spec["intervals"]]
    return DomainSet.intervals(pairs)


def _build_map(spec: dict) -> MapSpec:
    variant = spec.get("variant", "identity")
    if variant == "power":
        return MapSpec.power(spec["theta"])
    if variant == "polynomial":
        return MapSpec.polynomial(spec["coefficients"])
    return MapSpec(variant)


def _build_weight(spec: dict) -> WeightSpec:
    terms = tuple((float(t["c"]), float(t["p"]), t.get("kind", "x"))
                  for t in spec.get("terms", []))
    table = None
    if "table" in spec:
        table = (tuple(float(x) for x in spec["table"]["x"]),
                 tuple(float(v) for v in spec["table"]["values"]))
    return WeightSpec(terms=terms, table=table)


def validate(cfg: dict) -> list[str]:
    """Pure validation; empty list means run() would pass validation."""
    diags: list[str] = []
    resolved = resolve_config(cfg)
    task = resolved["task"]
    name = task.get("name")
    if name not in TASKS:
        diags.append(f"task name must be one of {TASKS}, got {name!r}")
        return diags
    try:
        domain = _build_domain(resolved["problem"]["domain"])
        fmap = _build_map(resolved["problem"]["map"])
        _build_weight(resolved["problem"]["weight"])
    except (ParameterError, DomainError, KeyError, TypeError) as exc:
        diags.append(f"problem block invalid: {exc}")
        return diags
    diags.extend(fmap.validate_domain(domain))
    if fmap.variant == "power" and not domain.is_real:
        pass  # already diagnosed by validate_domain
    weight_spec = resolved["problem"]["weight"]
    if domain.is_real and domain.components[0][0] < 0:
        for t in weight_spec.get("terms", []):
            p = float(t["p"])
            if t.get("kind", "x") == "x" and p != int(p):
                diags.append("fractional x-power weight term on a domain with negatives")
    n = resolved["problem"]["n"]
    if not isinstance(n, int) or n < 2:
        diags.append("problem.n must be an integer >= 2")
    if name in STOCHASTIC_TASKS and task.get("seed") is None:
        diags.append(f"task {name!r} is stochastic and needs a seed")
    if name == "admissibility" and "delta" in task:
        d = task["delta"]
        if not (isinstance(d, (int, float)) and 0 < d < 1):
            diags.append("delta must lie strictly between 0 and 1")
    if name == "sample":
        if task.get("k", 1) < 1:
            diags.append("sample task needs k >= 1")
        steps = task.get("steps", 0)
        burn = task.get("burn")
        if burn is not None and steps <= burn:
            diags.append("sample task needs steps > burn")
    if name == "partition" and not task.get("k_list"):
        diags.append("partition task needs a nonempty k_list")
    if name == "fekete" and task.get("k_max", 2) < 2:
        diags.append("fekete task needs k_max >= 2")
    if name == "extremal" and len(task.get("k_list", [])) < 2:
        diags.append("extremal task needs at least two k values")
    return diags


# ---------------------------------------------------------------------------
# Artifact writing
# ---------------------------------------------------------------------------

class _ArtifactWriter:
    def __init__(self, directory: Path):
        self.directory = directory
        self.directory.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def write_csv(self, name: str, header: list[str], rows) -> None:
        path = self.directory / name
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([c if isinstance(c, str) else _fmt(c) for c in row])
        self.files.append(path)

    def write_json(self, name: str, payload: dict) -> None:
        path = self.directory / name
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self.files.append(path)

    def write_manifest(self) -> None:
        entries = []
        for path in sorted(self.files):
            data = path.read_bytes()
            entries.append({"filename": path.name, "bytes": len(data),
                            "sha256": hashlib.sha256(data).hexdigest()})
        with open(self.directory / "manifest.json", "w") as fh:
            json.dump({"files": entries}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _grid_rows(grid, weights):
    if np.iscomplexobj(grid.points):
        for i, (z, m, w) in enumerate(zip(grid.points, grid.cell_mass, weights)):
            yield [str(i), z.real, z.imag, m, w]
    else:
        for i, (x, m, w) in enumerate(zip(grid.points, grid.cell_mass, weights)):
            yield [str(i), x, m, w]


def _measure_header(grid):
    if np.iscomplexobj(grid.points):
        return ["index", "x", "y", "cell_mass", "weight"]
    return ["index", "x", "cell_mass", "weight"]


# ---------------------------------------------------------------------------
# Task runners
# ---------------------------------------------------------------------------

def _prepare_problem(resolved: dict):
    problem = resolved["problem"]
    domain = _build_domain(problem["domain"])
    fmap = _build_map(problem["map"])
    weight = _build_weight(problem["weight"])
    return domain, weight, fmap


def _gridded_problem(resolved: dict, solver: SolverOptions):
    domain, weight, fmap = _prepare_problem(resolved)
    n = resolved["problem"]["n"]
    radius = domain.bounding_radius
    if domain.unbounded:
        trunc = TruncationOptions(
            r_init=float(resolved["problem"]["truncation"]["r_init"]),
            max_doublings=int(resolved["problem"]["truncation"]["max_doublings"]))
        probe = SolverOptions(max_iters=min(800, solver.max_iters),
                              tol_frostman=max(solver.tol_frostman, 1e-6))
        radius, domain = adaptive_truncation(
            domain, weight, fmap, truncation_solver(weight, fmap, n, probe), trunc)
    grid = build_grid(domain, n)
    return domain, weight, fmap, grid, radius


def _solver_options(task: dict) -> SolverOptions:
    return SolverOptions(max_iters=int(task.get("max_iters", 4000)),
                         tol_energy=float(task.get("tol_energy", 1e-10)),
                         tol_frostman=float(task.get("tol_frostman", 1e-8)))


def _run_equilibrium(resolved, writer, results) -> int:
    task = resolved["task"]
    solver = _solver_options(task)
    domain, weight, fmap, grid, radius = _gridded_problem(resolved, solver)
    res, km = solve_on_grid(grid, weight, fmap, solver)
    tol = float(task.get("tol", 5e-3))
    frost = frostman_check(res, grid, weight, fmap, tol)
    results.update({
        "V_w": res.V_w, "F_w": res.F_w, "iterations": res.iterations,
        "converged": res.converged, "truncation_radius": radius,
        "support_size": int(res.support_idx.size),
        "support_min": float(np.min(np.abs(grid.points[res.support_idx]))),
        "support_max": float(np.max(np.abs(grid.points[res.support_idx]))),
        "frostman": {"lower": frost.lower, "upper": frost.upper,
                     "tol": frost.tol, "passed": frost.passed},
    })
    if resolved["task"]["name"] == "frostman":
        results["certified"] = certify_minimizer(res.mu_star, grid, weight, fmap, tol)
    writer.write_csv("measure.csv", _measure_header(grid),
                     _grid_rows(grid, res.mu_star.weights))
    if grid.is_real:
        writer.write_csv("cdf.csv", ["x", "cdf"],
                         zip(grid.points, grid_cdf(res.mu_star.weights)))
    return EXIT_OK if res.converged else EXIT_NO_CONVERGENCE


def _run_fekete(resolved, writer, results) -> int:
    task = resolved["task"]
    solver = _solver_options(task)
    domain, weight, fmap, grid, radius = _gridded_problem(resolved, solver)
    series = fekete_sequence(grid, int(task["k_max"]), weight, fmap, solver)
    results.update({
        "reference_delta": series.reference_delta,
        "reference_energy": series.reference_energy,
        "truncation_radius": radius,
        "deltas": {str(s.k): s.delta for s in series.steps},
    })
    writer.write_csv("delta_sequence.csv", ["k", "delta_k", "reference"],
                     [[str(s.k), s.delta, series.reference_delta] for s in series.steps])
    last = series.steps[-1]
    rows = []
    for j, z in enumerate(last.config.points):
        z = complex(z)
        rows.append([str(last.k), str(j), z.real] + ([z.imag] if not grid.is_real else []))
    writer.write_csv("fekete_points.csv",
                     ["k", "j", "x"] + ([] if grid.is_real else ["y"]), rows)
    return EXIT_OK


def _run_sample(resolved, writer, results) -> int:
    task = resolved["task"]
    solver = _solver_options(task)
    domain, weight, fmap, grid, radius = _gridded_problem(resolved, solver)
    base = BaseMeasure.lebesgue(grid)
    batch = mcmc_sample(base, int(task["k"]), weight, fmap,
                        steps=int(task["steps"]),
                        burn=None if task.get("burn") is None else int(task["burn"]),
                        thin=None if task.get("thin") is None else int(task["thin"]),
                        seed=int(task["seed"]))
    results.update({"truncation_radius": radius, **batch.summary_dict()})
    batch.to_csv(writer.directory / "samples.csv")
    writer.files.append(writer.directory / "samples.csv")
    if grid.is_real:
        writer.write_csv("mean_cdf.csv", ["x", "mean_cdf"],
                         zip(grid.points, batch.mean_cdf))
    return EXIT_OK


def _run_partition(resolved, writer, results) -> int:
    task = resolved["task"]
    solver = _solver_options(task)
    domain, weight, fmap, grid, radius = _gridded_problem(resolved, solver)
    base = BaseMeasure.lebesgue(grid)
    series = zk_root_sequence(base, [int(k) for k in task["k_list"]], weight, fmap,
                              N=int(task["N"]), seed=int(task["seed"]),
                              solver_opts=solver)
    results.update({
        "reference_delta": series.reference_delta,
        "bm_surrogate": series.bm_surrogate,
        "truncation_radius": radius,
        "roots": {str(e.k): e.root for e in series.entries},
    })
    writer.write_csv("zk_roots.csv",
                     ["k", "log_z", "root", "stderr_log", "method", "reference"],
                     [[str(e.k), e.log_z, e.root,
                       "" if e.stderr_log is None else _fmt(e.stderr_log),
                       e.method, series.reference_delta] for e in series.entries])
    return EXIT_OK


def _run_extremal(resolved, writer, results) -> int:
    task = resolved["task"]
    solver = _solver_options(task)
    domain, weight, fmap, grid, radius = _gridded_problem(resolved, solver)
    if "disk" in task:
        da = GreenFunctionSpec("disk", center=complex(task["disk"]["center"]),
                               radius=float(task["disk"]["radius"]))
    else:
        da = GreenFunctionSpec("interval", a=float(task["interval"][0]),
                               b=float(task["interval"][1]))
    ks = [int(k) for k in task["k_list"]]
    zs = np.asarray([complex(z) if isinstance(z, (list, tuple)) else float(z)
                     for z in task["test_points"]])
    configs = [exchange_optimize(greedy_leja(grid, k, weight, fmap),
                                 grid, weight, fmap) for k in ks]
    report = bw_bound_check(configs, grid, zs, da, weight, fmap)
    results.update({
        "per_k_max": dict(zip(map(str, report.ks), report.per_k_max)),
        "spread": report.spread, "slope": report.slope, "passed": report.passed,
    })
    rows = []
    for cfg in configs:
        for z in zs:
            lk = wkq_lower_estimate(z, cfg, grid, weight, fmap)
            rows.append([str(cfg.k), complex(z).real, lk,
                         float(da(z)), float(da(fmap(z))),
                         lk - float(da(z)) - float(da(fmap(z)))])
    writer.write_csv("bw_bounds.csv",
                     ["k", "z", "lower_estimate", "green_z", "green_fz", "gap"], rows)
    return EXIT_OK


def _run_admissibility(resolved, writer, results) -> int:
    task = resolved["task"]
    domain, weight, fmap = _prepare_problem(resolved)
    shells = ShellSchedule(r0=float(task["r0"]), levels=int(task["levels"]))
    threshold = float(task["threshold"])
    if "delta" in task:
        report = check_strong_f_admissible(domain, weight, fmap,
                                           float(task["delta"]), shells, threshold)
    else:
        report = check_f_admissible(domain, weight, fmap, shells, threshold)
    results.update({
        "verdict": report.verdict,
        "offending_shell": report.offending_shell,
        "trivially_compact": report.trivially_compact,
        "notes": report.notes,
    })
    writer.write_csv("shells.csv", ["r_lo", "r_hi", "min_psi"],
                     [[lo, hi, "" if m is None else _fmt(m)]
                      for lo, hi, m in report.shell_minima])
    return EXIT_OK


_RUNNERS = {
    "equilibrium": _run_equilibrium,
    "frostman": _run_equilibrium,
    "fekete": _run_fekete,
    "sample": _run_sample,
    "partition": _run_partition,
    "extremal": _run_extremal,
    "admissibility": _run_admissibility,
}


def run(cfg: dict, out_dir: str | None = None) -> int:
    """Validate, execute the configured task, and write artifacts."""
    diags = validate(cfg)
    resolved = resolve_config(cfg)
    if diags:
        for d in diags:
            print(f"config error: {d}", file=sys.stderr)
        return EXIT_VALIDATION
    directory = Path(out_dir if out_dir is not None else resolved["output"]["directory"])
    writer = _ArtifactWriter(directory)
    results: dict = {}
    name = resolved["task"]["name"]
    try:
        code = _RUNNERS[name](resolved, writer, results)
    except (ParameterError, DomainError, StructuralError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ResourceError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except NoConvergenceError as exc:
        results["error"] = str(exc)
        results["converged"] = False
        code = EXIT_NO_CONVERGENCE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    summary = {
        "version": __version__,
        "task": name,
        "config": resolved,
        "results": results,
    }
    writer.write_json("summary.json", summary)
    writer.write_manifest()
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="biortheq",
        description="Equilibrium measures, Fekete configurations and ensemble "
                    "sampling for doubled-Vandermonde weighted energies.")
    parser.add_argument("task", choices=TASKS, help="task to run; must match the config")
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--threads", type=int, default=None,
                        help="recorded in the summary; computations are single-threaded")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    cfg.setdefault("task", {})
    if cfg["task"].get("name") is None:
        cfg["task"]["name"] = args.task
    elif cfg["task"]["name"] != args.task:
        print(f"config task {cfg['task']['name']!r} does not match "
              f"requested task {args.task!r}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.seed is not None:
        cfg["task"]["seed"] = args.seed
    if args.threads is not None:
        cfg.setdefault("output", {})["threads"] = args.threads
    return run(cfg, args.out)


if __name__ == "__main__":
    sys.exit(main())
