"""Command-line entry point: verify, simulate, material-table.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 runtime abort (BlowUp / Inadmissible).
"""

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from . import jacobi_block as jb
from .config import build, parse_config, parse_text
from .errors import BlowUp, Inadmissible, ParseError, ValidationError
from .generic_structure import CORRUPTIONS, DEFAULT_TOLS, verify_structure

log = logging.getLogger("genericmech")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ABORT = 0, 1, 2, 3
GAUGES = ("theta", "e", "s")
ALL_CHECKS = ("skew", "nic1", "nic2", "jacobi", "onsager", "hamiltonian")
# the simplified-assembly comparison is only resolution-exact; spectral
# accuracy needs an analytic energy, so it is opt-in for piecewise models
SMOOTH_ONLY = ("hamiltonian",)
APPENDIX_TRIALS = 50             # random instances per kind
REPORT_FIELDS = ("suite", "trial", "check", "value", "tol", "passed")


def num_workers(jobs):
    cap = os.environ.get("GENERIC_NUM_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer GENERIC_NUM_THREADS=%r", cap)
    return max(1, min(n, jobs))


def run_jobs(fn, jobs):
    """Map fn over jobs, in order; processes only when more than one worker is allowed."""
    n = num_workers(len(jobs))
    if n == 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, jobs))


# --- verify ---------------------------------------------------------------------

def _structure_job(job):
    raw, gauge, corrupt, checks, trials, seed = job
    cfg = build(raw)
    sc, v = cfg.scene, cfg.verify
    model = sc.model.with_gauge(gauge)
    rep = verify_structure(sc.grid, model, sc.dissipation, trials=trials, seed=seed,
                           corrupt=corrupt, checks=checks, kmax=v.kmax, thermal=v.thermal)
    return rep.rows


def _appendix_job(job):
    trials, seed, kinds = job
    return jb.equivalence_theorem_test(trials=trials, seed=seed, kinds=kinds)


def _default_checks(cfg):
    if cfg.verify.checks:
        unknown = set(cfg.verify.checks) - set(ALL_CHECKS)
        if unknown:
            raise ValidationError(f"verify.checks: unknown {sorted(unknown)}; "
                                  f"choose from {list(ALL_CHECKS)}")
        return tuple(cfg.verify.checks)
    if cfg.model_kind == "quadratic":
        return ALL_CHECKS
    return tuple(c for c in ALL_CHECKS if c not in SMOOTH_ONLY)


def _tol_header(checks, appendix):
    lines = ["# tolerances"]
    for k, v in DEFAULT_TOLS.items():
        kind = ">=" if k == "entropy_production" else "<="
        lines.append(f"#   {k:26s} {kind} {v:.1e}")
    if appendix:
        lines.append(f"#   {'block_condition_A':26s} <= {jb.TOL_CONFORM:.1e}")
        lines.append(f"#   {'block_condition_B':26s} <= {jb.TOL_DJ11:.1e}")
        lines.append(f"#   {'block_condition_C':26s} <= {jb.TOL_CONFORM:.1e}")
        lines.append(f"#   {'block_jacobi_conforming':26s} <= {jb.TOL_CONFORM:.1e}")
        lines.append(f"#   {'block_jacobi_detect':26s} >  {jb.DETECT:.1e}")
    lines.append(f"# checks: {', '.join(checks)}")
    return "\n".join(lines)


def cmd_verify(args, cfg):
    v = cfg.verify
    trials = args.trials if args.trials is not None else v.trials
    seed = args.seed if args.seed is not None else v.seed
    checks = _default_checks(cfg)
    raw = cfg.raw
    print(_tol_header(checks, args.appendix_a))
    print(f"# model {cfg.model_kind}, d = {cfg.scene.grid.d}, N = {cfg.scene.grid.N}, "
          f"trials = {trials}, seed = {seed}")
    if cfg.model_kind != "quadratic" and not v.checks:
        print(f"# skipped for non-analytic energies: {', '.join(SMOOTH_ONLY)}")

    jobs, suites = [], []
    corrupt = tuple(v.corrupt)
    for g in GAUGES:
        jobs.append((raw, g, corrupt, checks, trials, seed))
        suites.append(("structure" if not corrupt else "corrupted", g, corrupt))
    if args.negative_controls:
        for c in CORRUPTIONS:
            jobs.append((raw, "e", (c,), ("skew", "jacobi", "nic1"), trials, seed))
            suites.append(("control", "e", (c,)))
    results = run_jobs(_structure_job, jobs)

    rows, failures, controls = [], 0, []
    for (kind, g, corr), res in zip(suites, results):
        name = f"{kind}[{g}{',' + '+'.join(corr) if corr else ''}]"
        for r in res:
            rows.append({"suite": name, **r})
        if kind == "control":
            detected = any(not r["passed"] for r in res)
            controls.append((corr[0], detected))
            if not detected:
                failures += 1
        else:
            failures += sum(not r["passed"] for r in res)

    appendix = None
    if args.appendix_a:
        kinds = ("conforming", "violate_A", "violate_B", "violate_C")
        if args.negative_controls:
            kinds = kinds + ("quadratic", "flip_n1")
        n_inst = args.trials if args.trials is not None else APPENDIX_TRIALS
        appendix = run_jobs(_appendix_job, [(n_inst, seed, kinds)])[0]
        summ = appendix.summary()
        for k, (ok, tot) in summ.items():
            failures += tot - ok

    out = args.out
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "verify_report.csv"), "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS)
            w.writeheader()
            for r in rows:
                w.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k])
                            for k in REPORT_FIELDS})
        if appendix is not None:
            appendix.to_csv(os.path.join(out, "appendix_a.csv"))
        summary = {"tolerances": DEFAULT_TOLS, "checks": list(checks), "trials": trials,
                   "seed": seed, "model": cfg.model_kind, "failures": failures,
                   "controls": {c: d for c, d in controls}}
        if appendix is not None:
            summary["appendix_a"] = {k: list(v) for k, v in appendix.summary().items()}
        with open(os.path.join(out, "verify_summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)

    worst = {}
    for r in rows:
        if r["suite"].startswith("control"):
            continue
        key = (r["suite"], r["check"])
        lower = r["check"] == "entropy_production"
        if key not in worst or (r["value"] < worst[key][0] if lower else r["value"] > worst[key][0]):
            worst[key] = (r["value"], r["tol"], r["passed"])
    for (suite, check), (val, tol, _) in worst.items():
        ok = all(r["passed"] for r in rows if r["suite"] == suite and r["check"] == check)
        print(f"{suite:22s} {check:26s} {val: .3e}  tol {tol:.1e}  {'PASS' if ok else 'FAIL'}")
    for c, det in controls:
        print(f"{'control':22s} {c:26s} {'detected' if det else 'NOT DETECTED'}")
    if appendix is not None:
        for k, (ok, tot) in appendix.summary().items():
            print(f"{'appendix-a':22s} {k:26s} {ok}/{tot} classified correctly")
    print("verification", "passed" if failures == 0 else f"FAILED ({failures})")
    return EXIT_OK if failures == 0 else EXIT_FAIL


# --- simulate -------------------------------------------------------------------

def cmd_simulate(args, cfg):
    sc = cfg.scene
    if args.seed is not None:
        sc = replace(sc, initial=replace(sc.initial, seed=args.seed))
    from .simulator import run
    out = args.out or "."
    try:
        q, diag = run(sc, out_dir=out)
    except (BlowUp, Inadmissible) as exc:
        print(f"aborted after {exc.diagnostics.steps} steps: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_ABORT
    print(f"steps {diag.steps}, t = {diag.t[-1]:.6e}")
    print(f"energy drift {diag.energy_drift():.3e}, entropy change "
          f"{(diag.S_tot[-1] - diag.S_tot[0]) / diag.entropy_scale:.3e} (per heat capacity)")
    print(f"min theta {min(diag.min_theta):.6e}, min det F_e {min(diag.min_detFe):.6e}")
    print(f"wrote {os.path.join(out, 'diagnostics.csv')}")
    return EXIT_OK


# --- material-table -------------------------------------------------------------

def pressure_table(energy, J, thetas):
    """Rows (theta, J, rho, p) of the bulk state equation."""
    rows = []
    for th in thetas:
        p = energy.pressure(J, th)
        for Jk, pk in zip(J, p):
            rows.append((th, Jk, energy.rho_ref / Jk, pk))
    return rows


def density_table(energy, J, thetas, pressures):
    """Rows (theta, p, rho): density at given pressures, from the monotone p(J).

    On a plateau p(J) is constant; the density there is taken at the
    low-density end, so the output shows the jump at the plateau pressure.
    """
    rows = []
    for th in thetas:
        p = energy.pressure(J, th)          # non-increasing in J
        for pk in pressures:
            i = int(np.searchsorted(-p, -pk, side="right"))
            if i <= 0 or i >= len(J):
                continue
            p0, p1 = p[i - 1], p[i]
            s = 0.0 if p0 == p1 else (p0 - pk) / (p0 - p1)
            Jk = J[i - 1] + s * (J[i] - J[i - 1])
            rows.append((th, pk, energy.rho_ref / Jk))
    return rows


def cmd_material_table(args, cfg):
    if cfg.model_kind != "mantle":
        raise ValidationError("model.kind: material-table needs the mantle model")
    en = cfg.scene.model.energy
    t = cfg.table
    J = np.linspace(t.J_min, t.J_max, t.n)
    pr = np.linspace(t.p_min, t.p_max, t.n)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "pressure_J.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("theta", "J", "rho", "p"))
        w.writerows((repr(float(x)) for x in row) for row in pressure_table(en, J, t.thetas))
    with open(os.path.join(out, "density_p.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("theta", "p", "rho"))
        w.writerows((repr(float(x)) for x in row) for row in density_table(en, J, t.thetas, pr))
    (a1, b1), (a2, b2) = en.plateaus()
    for th in t.thetas:
        p1, p2 = en.plateau_pressures(th)
        print(f"theta {th:g} K: plateau 1 {p1 / 1e9:.4f} GPa on J in [{a1:.4f}, {b1:.4f}], "
              f"plateau 2 {p2 / 1e9:.4f} GPa on J in [{a2:.4f}, {b2:.4f}]")
    print(f"wrote {os.path.join(out, 'pressure_J.csv')} and {os.path.join(out, 'density_p.csv')}")
    return EXIT_OK


# --- entry ----------------------------------------------------------------------

DEFAULT_TABLE_CONFIG = "model.kind = mantle\ngrid.d = 1\ngrid.N = 64\n"


def make_parser():
    p = argparse.ArgumentParser(prog="genericmech",
                                description="Structure checks and simulation of the GENERIC "
                                            "thermo-visco-elastoplastic model.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("verify", "simulate", "material-table"):
        s = sub.add_parser(name)
        s.add_argument("--config", required=(name == "simulate"))
        s.add_argument("--out")
        s.add_argument("--seed", type=int)
        if name == "verify":
            s.add_argument("--trials", type=int)
            s.add_argument("--appendix-a", action="store_true",
                           help="also run the block-Jacobi criterion on random instances")
            s.add_argument("--negative-controls", action="store_true",
                           help="corrupted operators that must be detected")
    return p


def load(args):
    if args.config:
        return parse_config(args.config)
    text = DEFAULT_TABLE_CONFIG if args.command == "material-table" else ""
    return build(parse_text(text, "<defaults>"))


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args)
        if args.command == "verify" and args.trials is not None and args.trials < 1:
            raise ValidationError("--trials must be >= 1")
        if args.command == "verify":
            return cmd_verify(args, cfg)
        if args.command == "simulate":
            return cmd_simulate(args, cfg)
        return cmd_material_table(args, cfg)
    except (ParseError, ValidationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlowUp, Inadmissible) as exc:
        print(f"runtime abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
