"""Many-body vs. Hartree rate study: trace distances across a particle-number sweep."""

from __future__ import annotations

import csv
import io
import json
import logging
import platform
import time as _time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy

from hartreemix import __version__
from hartreemix.density import (
    check_norm_relation,
    hartree_projector,
    reduced_density,
)
from hartreemix.grid import PeriodicGrid
from hartreemix.hartree import HartreeSystem, MixtureSpec, OrbitalSet, evolve_to
from hartreemix.manybody import (
    BASIS_CAP,
    build_hamiltonian,
    build_joint_basis,
    krylov_propagate,
    number_expectations,
    product_state,
)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_HEADER = ["N_total", "N_vector", "time", "trace_distance", "hs_distance", "runtime_s"]
DISTANCE_FLOOR = 1e-8


@dataclass
class StudyPlan:
    grid: PeriodicGrid
    mixture: MixtureSpec  # template; particle numbers are replaced per sweep point
    initial: np.ndarray  # orbitals, shape (p, *grid.shape)
    N_sweep: list[tuple[int, ...]]
    measure_times: list[float]
    dt: float = 1e-3
    krylov_tol: float = 1e-9
    krylov_dim: int = 30
    basis_cap: int = BASIS_CAP
    record_runtime: bool = False

    def __post_init__(self):
        self.N_sweep = [tuple(int(n) for n in N) for N in self.N_sweep]
        self.measure_times = sorted(float(t) for t in self.measure_times)
        if any(t < 0 for t in self.measure_times):
            raise ValueError("measurement times must be nonnegative")
        for N in self.N_sweep:
            if len(N) != self.mixture.p:
                raise ValueError(f"sweep entry {N} does not have {self.mixture.p} components")
            dim = 1
            for n in N:
                dim *= int(scipy.special.comb(n + self.grid.size - 1, n, exact=True))
            if dim > self.basis_cap:
                raise ValueError(f"sweep entry {N} needs joint dimension {dim} > cap {self.basis_cap}")


@dataclass
class Row:
    N_total: int
    N_vector: tuple[int, ...]
    time: float
    trace_distance: float
    hs_distance: float
    runtime_s: float | None = None
    relation_ok: bool = True
    rank_one_ok: bool = True
    ratio: float = 0.0  # trace_distance / hs_distance
    density_issues: tuple[str, ...] = ()
    failure: str | None = None


@dataclass
class ConvergenceReport:
    rows: list[Row]
    fits: dict = field(default_factory=dict)
    growth: dict = field(default_factory=dict)
    notices: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def to_csv(self, provenance: dict | None = None) -> str:
        buf = io.StringIO()
        if provenance is not None:
            buf.write(f"# schema_version={SCHEMA_VERSION}\n")
            buf.write("# config=" + json.dumps(provenance, sort_keys=True, separators=(",", ":")) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([
                r.N_total,
                " ".join(str(n) for n in r.N_vector),
                repr(r.time),
                repr(r.trace_distance) if r.failure is None else "nan",
                repr(r.hs_distance) if r.failure is None else "nan",
                "" if r.runtime_s is None else f"{r.runtime_s:.3f}",
            ])
        return buf.getvalue()

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "fits": self.fits,
            "growth": self.growth,
            "notices": self.notices,
            "norm_relation": [
                {"N_vector": list(r.N_vector), "time": r.time, "ratio": r.ratio,
                 "sqrt_2p_holds": r.relation_ok, "two_hs_holds": r.rank_one_ok}
                for r in self.rows if r.failure is None
            ],
            "failures": [
                {"N_vector": list(r.N_vector), "time": r.time, "error": r.failure}
                for r in self.rows if r.failure is not None
            ],
            "metadata": self.metadata,
        }


def run_point(plan: StudyPlan, N_vector: Sequence[int]) -> list[Row]:
    """Many-body and Hartree evolution from the same product data for one N-vector."""
    N_vector = tuple(int(n) for n in N_vector)
    start = _time.perf_counter()
    grid = plan.grid
    spec = plan.mixture.with_N(N_vector)
    basis = build_joint_basis(grid.size, N_vector, plan.basis_cap)
    H = build_hamiltonian(grid, spec, basis, plan.basis_cap)
    orbitals = OrbitalSet(grid, plan.initial)
    psi = product_state(basis, orbitals)
    system = HartreeSystem(grid, spec)

    rows = []
    t_prev = 0.0
    for t in plan.measure_times:
        psi = krylov_propagate(H, psi, t - t_prev, plan.krylov_tol, plan.krylov_dim)
        orbitals = evolve_to(orbitals, spec, t - t_prev, plan.dt, system=system)
        t_prev = t
        counts = number_expectations(psi)
        if np.max(np.abs(counts - np.asarray(N_vector))) > 1e-10:
            raise RuntimeError(f"particle numbers drifted: {counts}")
        gamma = reduced_density(psi, grid)
        proj = hartree_projector(grid, orbitals.orbitals)
        rel = check_norm_relation(gamma, proj, spec.p)
        rows.append(Row(
            N_total=sum(N_vector),
            N_vector=N_vector,
            time=t,
            trace_distance=rel.trace_distance,
            hs_distance=rel.hs_distance,
            runtime_s=(_time.perf_counter() - start) if plan.record_runtime else None,
            relation_ok=rel.holds and rel.trace_distance <= 2 + 1e-9,
            rank_one_ok=rel.holds_rank_one,
            ratio=rel.trace_distance / rel.hs_distance if rel.hs_distance > 0 else 0.0,
            density_issues=rel.issues,
        ))
    return rows


def _safe_point(args):
    plan, N = args
    try:
        return run_point(plan, N)
    except Exception as exc:  # recorded in the report, sweep continues
        log.warning("sweep point %s failed: %s", N, exc)
        return [Row(sum(N), tuple(N), t, float("nan"), float("nan"), failure=repr(exc))
                for t in plan.measure_times]


def fit_rate(rows: Sequence[Row], time: float) -> tuple[float, float, float]:
    """Least-squares fit of log(distance) against log(N_total) at one time.

    Returns (slope, intercept, rms residual).  Nonpositive or failed rows are
    dropped with a warning.
    """
    pts = [(r.N_total, r.trace_distance) for r in rows if r.time == time and r.failure is None]
    good = [(n, d) for n, d in pts if d > 0 and np.isfinite(d)]
    if len(good) < len(pts):
        log.warning("excluded %d nonpositive distances at t=%g", len(pts) - len(good), time)
    if len({n for n, _ in good}) < 3:
        raise ValueError(f"need >= 3 distinct N_total with positive distances at t={time}")
    x = np.log([n for n, _ in good])
    y = np.log([d for _, d in good])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))


def growth_in_time(rows: Sequence[Row]) -> float:
    """Exponential-envelope rate K_hat >= 0 from log(distance) vs t at the largest N."""
    ok = [r for r in rows if r.failure is None and r.trace_distance > 0 and r.time > 0]
    if not ok:
        raise ValueError("no usable rows")
    n_top = max(r.N_total for r in ok)
    pts = sorted((r.time, r.trace_distance) for r in ok if r.N_total == n_top)
    if len(pts) < 3:
        raise ValueError("need >= 3 positive times at the largest N")
    t, d = np.array(pts).T
    slope = np.polyfit(t, np.log(d), 1)[0]
    return float(max(slope, 0.0))


def run_study(plan: StudyPlan, jobs: int = 1, provenance: dict | None = None) -> ConvergenceReport:
    t0 = _time.perf_counter()
    tasks = [(plan, N) for N in plan.N_sweep]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_safe_point, tasks))
    else:
        results = [_safe_point(t) for t in tasks]
    rows = [r for point in results for r in point]
    report = ConvergenceReport(rows)

    for t in plan.measure_times:
        at_t = [r for r in rows if r.time == t and r.failure is None]
        if t == 0:
            continue
        if at_t and all(r.trace_distance <= DISTANCE_FLOOR for r in at_t):
            report.notices.append(f"t={t}: degenerate: distances at floor, fit skipped")
            continue
        try:
            slope, intercept, resid = fit_rate(rows, t)
            report.fits[repr(t)] = {"slope": slope, "intercept": intercept, "residual": resid}
        except ValueError as exc:
            report.notices.append(f"t={t}: fit skipped: {exc}")
    try:
        report.growth = {"K_hat": growth_in_time(rows), "diagnostic": True}
    except ValueError as exc:
        report.notices.append(f"growth_in_time skipped: {exc}")

    bad = [r for r in rows if r.failure is None and (not r.relation_ok or r.density_issues)]
    for r in bad:
        report.notices.append(
            f"N={r.N_vector} t={r.time}: trace/HS = {r.ratio:.4f} "
            f"(sqrt(2p) bound holds={r.relation_ok}, 2*HS bound holds={r.rank_one_ok}), "
            f"density issues={list(r.density_issues)}"
        )
    report.metadata = {
        "potentials": plan.mixture.potentials.to_list(),
        "include_self_cross": plan.mixture.include_self_cross,
        "grid": {"dim": plan.grid.dim, "points": plan.grid.points, "length": plan.grid.length},
        "dt": plan.dt,
        "krylov_tol": plan.krylov_tol,
        "versions": {"hartreemix": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "config": provenance,
    }
    if plan.record_runtime:
        report.metadata["timing"] = {"total_s": _time.perf_counter() - t0}
    return report
