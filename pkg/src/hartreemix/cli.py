"""Command-line entry point.

    hartreemix hartree        --config run.yaml [--out DIR]
    hartreemix converge       --config run.yaml [--out DIR] [--jobs N]
    hartreemix check          --config run.yaml [--out DIR]
    hartreemix potential-cert --config run.yaml [--out DIR]

Exit codes: 0 success, 1 check failure, 2 config error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
from pathlib import Path

import numpy as np

from hartreemix import config as cfgmod
from hartreemix import fock
from hartreemix.config import ConfigError
from hartreemix.convergence import SCHEMA_VERSION, StudyPlan, run_study
from hartreemix.errors import CapExceededError, ConvergenceError, NumericalAbort, TailGuardError
from hartreemix.hartree import OrbitalSet, evolve
from hartreemix.potentials import (
    bisect_constant,
    certify_operator_inequality,
    minimal_constant,
)

log = logging.getLogger("hartreemix")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _out_dir(cfg: dict, override: str | None) -> Path:
    d = Path(override or cfg["output"]["directory"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _dump_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(fock._jsonable(doc), indent=2, sort_keys=True) + "\n")


def _provenance_lines(cfg: dict) -> str:
    return (f"# schema_version={SCHEMA_VERSION}\n"
            "# config=" + json.dumps(cfg, sort_keys=True, separators=(",", ":")) + "\n")


def cmd_hartree(cfg: dict, out: str | None = None, jobs: int = 1) -> int:
    cfgmod.require(cfg, "grid", "mixture", "evolution")
    grid = cfgmod.build_grid(cfg)
    spec = cfgmod.build_mixture(cfg)
    init = OrbitalSet(grid, cfgmod.build_initial(cfg, grid, spec.p))
    ev = cfg["evolution"]
    traj = evolve(init, spec, ev["t_final"], ev["dt"], stride=ev["stride"])
    d = _out_dir(cfg, out)
    formats = cfg["output"]["formats"]
    if "csv" in formats:
        with (d / "trajectory.csv").open("w", newline="") as fh:
            fh.write(_provenance_lines(cfg))
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "q", "site", "re", "im"])
            for state, _ in traj:
                for q in range(state.p):
                    for site, z in enumerate(state.orbitals[q].ravel()):
                        w.writerow([repr(float(state.time)), q, site, repr(float(z.real)), repr(float(z.imag))])
    energies = np.array([dg.weighted_energy for _, dg in traj])
    masses = np.array([dg.masses for _, dg in traj])
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": cfg,
        "diagnostics": [
            {"time": dg.time, "masses": list(dg.masses), "weighted_energy": dg.weighted_energy}
            for _, dg in traj
        ],
        "energy_drift": float(np.max(np.abs(energies - energies[0]))),
        "max_mass_deviation": float(np.max(np.abs(masses - 1.0))),
    }
    if "json" in formats:
        _dump_json(d / "diagnostics.json", summary)
    print(f"t_final={traj[-1][0].time:g}  energy drift={summary['energy_drift']:.3e}  "
          f"max mass deviation={summary['max_mass_deviation']:.3e}")
    return EXIT_OK


def build_plan(cfg: dict) -> StudyPlan:
    cfgmod.require(cfg, "grid", "mixture", "study")
    grid = cfgmod.build_grid(cfg)
    spec = cfgmod.build_mixture(cfg)
    sweep = [tuple(n) for n in cfg["study"]["N_sweep"]]
    if len({sum(n) for n in sweep}) < 3:
        raise ConfigError("study: N_sweep needs >= 3 distinct total particle numbers for a fit")
    ev = cfg["evolution"]
    kw = {}
    if "basis_cap" in cfg["study"]:
        kw["basis_cap"] = cfg["study"]["basis_cap"]
    try:
        return StudyPlan(
            grid=grid,
            mixture=spec,
            initial=cfgmod.build_initial(cfg, grid, spec.p),
            N_sweep=sweep,
            measure_times=ev["measure_times"],
            dt=ev["dt"],
            krylov_tol=ev["krylov_tol"],
            krylov_dim=ev["krylov_dim"],
            record_runtime=cfg["output"]["record_runtime"],
            **kw,
        )
    except ValueError as exc:
        raise ConfigError(f"study: {exc}") from None


def cmd_converge(cfg: dict, out: str | None = None, jobs: int = 1) -> int:
    plan = build_plan(cfg)
    report = run_study(plan, jobs=jobs, provenance=cfg)
    d = _out_dir(cfg, out)
    (d / "report.csv").write_text(report.to_csv(provenance=cfg))
    doc = report.to_json_dict()
    doc["metadata"]["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    _dump_json(d / "report.json", doc)
    print(f"{'time':>8} {'slope':>10} {'intercept':>10} {'residual':>10}")
    for t, fit in report.fits.items():
        print(f"{float(t):8.3f} {fit['slope']:10.4f} {fit['intercept']:10.4f} {fit['residual']:10.2e}")
    for note in report.notices:
        print(f"notice: {note}")
    if any(r.failure for r in report.rows):
        return EXIT_NUMERIC
    return EXIT_OK


def _certify_reports(cfg: dict) -> list[fock.CheckReport]:
    grid = cfgmod.build_grid(cfg)
    spec = cfgmod.build_mixture(cfg)
    Ks = cfg.get("checks", {}).get("certify_K")
    reports = []
    seen = []
    for q in range(spec.p):
        for r in range(q, spec.p):
            pot = spec.potentials[q, r]
            if pot in seen:
                continue
            seen.append(pot)
            k_min = minimal_constant(pot, grid)
            grid_K = Ks if Ks else [max(k_min, 1e-12) * f for f in (1.0 + 1e-9, 2.0, 4.0)]
            certs = [certify_operator_inequality(pot, grid, K) for K in grid_K]
            holds = [c.holds for c in certs]
            # once certified for K0, every K >= K0 must certify too
            order = np.argsort(grid_K)
            flags = [holds[i] for i in order]
            monotone = all(b or not a for a, b in zip(flags, flags[1:]))
            reports.append(fock.CheckReport(
                "potential_cert",
                {"pair": [q, r], "potential": pot.to_dict()},
                margin=min(c.min_eig for c in certs),
                passed=bool(monotone),
                details={"K_min_generalized": k_min,
                         "K_min_bisection": bisect_constant(pot, grid) if k_min > 0 else 0.0,
                         "K_grid": list(grid_K),
                         "min_eig": [c.min_eig for c in certs], "holds": holds,
                         "monotone": monotone},
            ))
    return reports


def cmd_potential_cert(cfg: dict, out: str | None = None, jobs: int = 1) -> int:
    reports = _certify_reports(cfg)
    d = _out_dir(cfg, out)
    _dump_json(d / "potential_cert.json", {"schema_version": SCHEMA_VERSION, "config": cfg,
                                           "reports": [r.to_dict() for r in reports]})
    for r in reports:
        print(f"pair {tuple(r.parameters['pair'])}: K_min={r.details['K_min_generalized']:.6g} "
              f"monotone={r.details['monotone']}")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_CHECK


def run_checks(cfg: dict) -> tuple[list[dict], bool, bool]:
    """Returns (entries, all_passed, precondition_error)."""
    ch = cfg["checks"]
    which = ch["which"]
    n_max = ch["n_max"]
    entries: list[dict] = []
    precondition = False

    def record(rep: fock.CheckReport, expect: bool = True):
        d = rep.to_dict()
        d["expected_pass"] = expect
        d["ok"] = rep.passed == expect
        entries.append(d)

    def guarded(name, fn):
        nonlocal precondition
        try:
            fn()
        except TailGuardError as exc:
            precondition = True
            entries.append({"name": name, "ok": False, "precondition_error": str(exc)})

    if "relbN" in which:
        guarded("relbN", lambda: record(
            fock.check_relbN(fock.TruncatedFock(n_max, ch["modes"]), ch["trials"], ch["seed"])))
    if "weyl" in which:
        f1 = fock.TruncatedFock(n_max)
        for z in ch["weyl_z"]:
            def weyl_one(z=z):
                W = fock.weyl_operator(f1, z)
                res = fock.unitarity_residual(W)
                inv = float(np.max(np.abs(W @ fock.weyl_operator(f1, -z) - np.eye(f1.dim))))
                record(fock.CheckReport("weyl_unitarity", {"n_max": n_max, "z": z},
                                        margin=1e-10 - max(res, inv), passed=max(res, inv) <= 1e-10,
                                        details={"unitarity": res, "inverse": inv}))
                record(fock.check_weyl_shift(f1, z, ch["shift_k_support"]))
            guarded("weyl", weyl_one)
    if "coherent_weights" in which:
        f1 = fock.TruncatedFock(n_max)
        for z in ch["weyl_z"]:
            def cw(z=z):
                w = fock.coherent_sector_weights(f1, z)
                dev = float(np.max(np.abs(w - fock.poisson_profile(n_max, z))))
                record(fock.CheckReport("coherent_weights", {"n_max": n_max, "z": z},
                                        margin=1e-9 - dev, passed=dev <= 1e-9,
                                        details={"max_deviation": dev, "total": float(w.sum())}))
            guarded("coherent_weights", cw)
    if "sector_bounds" in which:
        for N in ch["sector_N"]:
            for reading in fock.READINGS:
                guarded("sector_bounds", lambda N=N, reading=reading: record(
                    fock.check_sector_bounds(N, n_max, reading)))
    if "d_constant" in which:
        Ns = np.arange(1, 10_001)
        ratio = fock.d_constant(Ns) / (2 * np.pi * Ns) ** 0.25
        ok = bool(np.all(ratio > 1) and np.all(ratio <= 1.05) and np.all(np.diff(ratio) < 0))
        record(fock.CheckReport("d_constant", {"N_max": 10_000},
                                margin=float(min(ratio.min() - 1, 1.05 - ratio.max())), passed=ok,
                                details={"ratio_first": ratio[0], "ratio_last": ratio[-1]}))
    if "parity" in which:
        f1 = fock.TruncatedFock(n_max)
        record(fock.check_parity_structure(f1, f1.ops.number))
        record(fock.check_parity_structure(f1, fock.squeezing_generator(f1)))
        record(fock.check_parity_structure(f1, fock.linear_generator(f1)), expect=False)
    if "potential_cert" in which and "grid" in cfg and "mixture" in cfg:
        for rep in _certify_reports(cfg):
            record(rep)
    return entries, all(e["ok"] for e in entries), precondition


def cmd_check(cfg: dict, out: str | None = None, jobs: int = 1) -> int:
    cfgmod.require(cfg, "checks")
    entries, ok, precondition = run_checks(cfg)
    d = _out_dir(cfg, out)
    _dump_json(d / "checks.json", {"schema_version": SCHEMA_VERSION, "config": cfg,
                                   "checks": entries, "all_passed": ok})
    for e in entries:
        status = "ok  " if e["ok"] else "FAIL"
        extra = e.get("precondition_error", "")
        print(f"{status} {e['name']} {json.dumps(e.get('parameters', {}), default=str)} {extra}")
    if precondition:
        return EXIT_CONFIG
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {
    "hartree": cmd_hartree,
    "converge": cmd_converge,
    "check": cmd_check,
    "potential-cert": cmd_potential_cert,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="hartreemix", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="YAML or JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    parser.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = cfgmod.load(args.config)
        return COMMANDS[args.command](cfg, args.out, args.jobs)
    except (ConfigError, CapExceededError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalAbort, ConvergenceError, FloatingPointError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
