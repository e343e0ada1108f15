"""Command-line bench driver.

Subcommands:
    spectrum  -- leading eigenvalue pairs over a follower-force sweep (CSV)
                 plus a summary with the flutter onset and Hopf threshold
    landau    -- Landau coefficients at the Hopf point (JSON record)
    sweep     -- nonlinear limit-cycle amplitude/frequency sweep (CSV) plus a
                 square-root scaling fit (JSON)
    compare   -- theory-versus-simulation table from landau + sweep artifacts

All outputs are deterministic: no timestamps, fixed float formatting, sorted
JSON keys.  Artifacts embed a parameter fingerprint so that compare can
refuse to mix results from different configurations.
"""

import argparse
import concurrent.futures
import csv
import hashlib
import json
import math
import os
import sys

import numpy as np

from .model import RodParams, ValidationError, make_grid
from . import spectrum as spec
from . import landau as lan
from . import sim as simulation


EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_VALIDATION = 2


class ComputationError(RuntimeError):
    """Wrapper for downstream numerical failures (exit code 1)."""


def fingerprint(params):
    """Stable hash of the physical parameters for artifact provenance."""
    return hashlib.sha256(params.to_json().encode()).hexdigest()[:16]


def _fmt(v):
    return f"{v:.12g}"


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path):
    with open(path) as fh:
        return json.load(fh)


def load_config(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config {path} is not valid JSON: {exc}")
    if not isinstance(doc, dict) or "params" not in doc:
        raise ValidationError("config must be a JSON object with a 'params' section")
    params = RodParams.from_dict(doc["params"])
    return params, doc


def _force_list(section):
    """Force values from an explicit list or a (min, max, step) range."""
    if "forces" in section:
        forces = [float(f) for f in section["forces"]]
    elif {"force_min", "force_max", "force_step"} <= set(section):
        lo = float(section["force_min"])
        hi = float(section["force_max"])
        step = float(section["force_step"])
        if step <= 0.0 or hi < lo:
            raise ValidationError("force range must have step > 0 and max >= min")
        count = int(round((hi - lo) / step)) + 1
        forces = [lo + i * step for i in range(count) if lo + i * step <= hi + 1e-12]
    else:
        raise ValidationError("section needs 'forces' or force_min/max/step")
    if not forces:
        raise ValidationError("empty force list")
    if sorted(forces) != forces:
        raise ValidationError("force values must be sorted ascending")
    return forces


# ---------------------------------------------------------------------------
# spectrum


def cmd_spectrum(params, doc, out_dir, grid_n, jobs):
    section = doc.get("spectrum", {})
    forces = _force_list(section) if section else _force_list(
        {"force_min": 0.0, "force_max": 60.0, "force_step": 0.5})
    grid = make_grid(grid_n)
    rows = []
    for F in forces:
        p = params.with_force(F)
        pairs = spec._leading_fast(p, grid, count=2)
        w1 = pairs[0]
        w2 = pairs[1] if len(pairs) > 1 else complex(float("nan"), float("nan"))
        rows.append((F, w1.real, w1.imag, w2.real, w2.imag))
    csv_path = os.path.join(out_dir, "spectrum.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["force_tilde", "re_w1", "im_w1", "re_w2", "im_w2"])
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    hopf = spec.find_hopf_threshold(params, grid)
    _write_json(os.path.join(out_dir, "spectrum_summary.json"), {
        "fingerprint": fingerprint(params),
        "params": params.to_dict(),
        "grid_n": grid_n,
        "force_star": hopf.force_star,
        "force_crit": hopf.force_crit,
        "omega_c": hopf.omega_c,
        "num_points": len(rows),
    })
    return EXIT_OK


# ---------------------------------------------------------------------------
# landau


def _landau_model(params, grid):
    hopf = spec.find_hopf_threshold(params, grid)
    p_c = params.with_force(hopf.force_crit)
    op = spec.assemble_operator(p_c, grid)
    op_adj = spec.assemble_adjoint_operator(p_c, grid)
    mode = spec.critical_mode(op, omega_c=hopf.omega_c)
    adjoint = spec.adjoint_mode(op_adj, omega_c=hopf.omega_c)
    corrections = lan.quadratic_corrections(mode, p_c, grid)
    model = lan.landau_coefficients(mode, adjoint, corrections, p_c, grid)
    return hopf, model


def cmd_landau(params, doc, out_dir, grid_n, jobs):
    grid = make_grid(grid_n)
    hopf, model = _landau_model(params, grid)
    record = {
        "fingerprint": fingerprint(params),
        "params": params.to_dict(),
        "grid_n": grid_n,
        "force_star": hopf.force_star,
        "force_crit": model.force_crit,
        "omega_c": model.omega_c,
        "alpha": [model.alpha.real, model.alpha.imag],
        "beta": [model.beta.real, model.beta.imag],
        "rho_abs": model.rho_abs,
        "sigma": model.sigma,
        "C": model.C if model.supercritical else None,
        "supercritical": model.supercritical,
    }
    _write_json(os.path.join(out_dir, "landau.json"), record)
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep


def fit_scaling(delta_forces, amplitudes, window_max=2.0, amp_floor=1e-4):
    """Square-root scaling fit of saturated amplitudes above threshold.

    Fits amplitude^2 = m * dF by least squares through the origin over
    dF in (0, window_max] (so C_fit = sqrt(m)), and the exponent p from a
    log-log fit of amplitude vs dF, excluding amplitudes below amp_floor.
    """
    dF = np.asarray(delta_forces, dtype=float)
    amp = np.asarray(amplitudes, dtype=float)
    mask = (dF > 0.0) & (dF <= window_max) & (amp >= amp_floor)
    excluded = [i for i in range(len(dF)) if not mask[i]]
    used = int(mask.sum())
    result = {
        "window_max": window_max,
        "amp_floor": amp_floor,
        "points_used": used,
        "points_excluded": excluded,
    }
    if used == 0:
        result.update({"slope_m": None, "C_fit": None, "p": None,
                       "C_loglog": None, "rms_log_residual": None,
                       "notice": "no supercritical points"})
        return result
    x, a = dF[mask], amp[mask]
    m = float(np.dot(x, a * a) / np.dot(x, x))
    result["slope_m"] = m
    result["C_fit"] = math.sqrt(m)
    if used >= 2:
        coef = np.polyfit(np.log(x), np.log(a), 1)
        resid = np.log(a) - np.polyval(coef, np.log(x))
        result["p"] = float(coef[0])
        result["C_loglog"] = float(np.exp(coef[1]))
        result["rms_log_residual"] = float(np.sqrt(np.mean(resid ** 2)))
    else:
        result["p"] = None
        result["C_loglog"] = None
        result["rms_log_residual"] = None
        result["notice"] = "single point: exponent not identifiable"
    return result


def _run_point(args):
    params_doc, force, grid_n, overrides = args
    params = RodParams.from_dict(params_doc).with_force(force)
    cfg = simulation.SimConfig(params=params, n=grid_n, **overrides)
    try:
        record = simulation.run(cfg)
    except simulation.StiffnessError as exc:
        return (force, None, None, False, str(exc))
    if record.saturated:
        return (force, record.amplitude, record.frequency, True, "")
    return (force, None, None, False, "not saturated")


def cmd_sweep(params, doc, out_dir, grid_n, jobs):
    section = doc.get("sweep", {})
    forces = _force_list(section)
    allowed = {"t_max", "dt0", "delta", "perturbation", "rtol", "atol",
               "sat_drift", "sat_periods", "decay_floor"}
    overrides = {k: v for k, v in section.items() if k in allowed}
    overrides.setdefault("t_max", 12.0)
    grid = make_grid(grid_n)
    hopf = spec.find_hopf_threshold(params, grid)
    tasks = [(params.to_dict(), F, grid_n, overrides) for F in forces]
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = [_run_point(t) for t in tasks]
    csv_path = os.path.join(out_dir, "sweep.csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["force_tilde", "amplitude", "frequency", "saturated", "note"])
        for F, amp, freq, sat, note in results:
            writer.writerow([_fmt(F),
                             _fmt(amp) if amp is not None else "",
                             _fmt(freq) if freq is not None else "",
                             "1" if sat else "0", note])
    sat_points = [(F, amp) for F, amp, _, sat, _ in results if sat]
    dF = [F - hopf.force_crit for F, _ in sat_points]
    amps = [a for _, a in sat_points]
    fit = fit_scaling(dF, amps, window_max=float(section.get("window_max", 2.0)))
    fit.update({
        "fingerprint": fingerprint(params),
        "params": params.to_dict(),
        "grid_n": grid_n,
        "force_crit": hopf.force_crit,
        "omega_c": hopf.omega_c,
        "unsaturated_forces": [F for F, _, _, sat, _ in results if not sat],
    })
    _write_json(os.path.join(out_dir, "scaling_fit.json"), fit)
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def _read_sweep_csv(path):
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    return rows


def cmd_compare(params, doc, out_dir, grid_n, jobs,
                landau_path=None, sweep_path=None, fit_path=None):
    landau_path = landau_path or os.path.join(out_dir, "landau.json")
    sweep_path = sweep_path or os.path.join(out_dir, "sweep.csv")
    fit_path = fit_path or os.path.join(out_dir, "scaling_fit.json")
    for p in (landau_path, sweep_path, fit_path):
        if not os.path.exists(p):
            raise ValidationError(f"missing artifact: {p}")
    landau_rec = _read_json(landau_path)
    fit_rec = _read_json(fit_path)
    if landau_rec["fingerprint"] != fit_rec["fingerprint"]:
        diff = {k: (landau_rec["params"].get(k), fit_rec["params"].get(k))
                for k in set(landau_rec["params"]) | set(fit_rec["params"])
                if landau_rec["params"].get(k) != fit_rec["params"].get(k)}
        raise ValidationError(
            f"parameter fingerprint mismatch between {landau_path} and "
            f"{fit_path}; differing keys: {diff}")
    if abs(landau_rec["force_crit"] - fit_rec["force_crit"]) > 1e-3:
        raise ValidationError(
            "force_crit disagrees between landau and sweep artifacts: "
            f"{landau_rec['force_crit']} vs {fit_rec['force_crit']}")
    if not landau_rec.get("supercritical", True) or landau_rec.get("C") is None:
        raise ComputationError("landau record is subcritical: no amplitude law")
    Fc = landau_rec["force_crit"]
    C = landau_rec["C"]
    omega_c = landau_rec["omega_c"]
    sigma = landau_rec["sigma"]
    rows = []
    fails = 0
    for rec in _read_sweep_csv(sweep_path):
        if rec["saturated"] != "1":
            continue
        F = float(rec["force_tilde"])
        amp_sim = float(rec["amplitude"])
        freq_sim = float(rec["frequency"])
        dF = F - Fc
        amp_th = C * math.sqrt(dF) if dF > 0 else 0.0
        freq_th = omega_c + dF * sigma
        rel = abs(amp_sim - amp_th) / amp_th if amp_th > 0 else float("inf")
        note = "beyond asymptotic range" if dF > 2.0 else ""
        if dF <= 1.0 and rel > 0.10:
            fails += 1
        rows.append((F, amp_sim, amp_th, rel, freq_sim, freq_th, note))
    header = (f"{'force':>10} {'amp_sim':>12} {'amp_theory':>12} "
              f"{'rel_err':>9} {'freq_sim':>12} {'freq_theory':>12}  note")
    lines = [header]
    for F, a_s, a_t, rel, f_s, f_t, note in rows:
        lines.append(f"{F:>10.4f} {a_s:>12.6f} {a_t:>12.6f} "
                     f"{rel:>9.4f} {f_s:>12.4f} {f_t:>12.4f}  {note}")
    verdict = "PASS" if fails == 0 and rows else "FAIL"
    lines.append(f"summary: {verdict} ({len(rows)} rows, "
                 f"{fails} near-threshold rows beyond 10% amplitude error)")
    report = "\n".join(lines)
    print(report)
    _write_json(os.path.join(out_dir, "compare.json"), {
        "fingerprint": landau_rec["fingerprint"],
        "force_crit": Fc,
        "rows": [{"force_tilde": F, "amp_sim": a_s, "amp_theory": a_t,
                  "rel_err": rel, "freq_sim": f_s, "freq_theory": f_t,
                  "note": note}
                 for F, a_s, a_t, rel, f_s, f_t, note in rows],
        "verdict": verdict,
    })
    return EXIT_OK if verdict == "PASS" else EXIT_COMPUTE


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rodflutter",
        description="Follower-loaded rod flutter bench: spectrum sweeps, "
                    "Landau coefficients, nonlinear sweeps, comparison.")
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--jobs", type=int, default=1, help="worker pool size")
    parser.add_argument("--grid-n", type=int, default=96,
                        help="collocation nodes (default 96)")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("spectrum", help="eigenvalue sweep over force")
    sub.add_parser("landau", help="Landau coefficients at the Hopf point")
    sub.add_parser("sweep", help="nonlinear amplitude sweep + scaling fit")
    cmp_p = sub.add_parser("compare", help="theory vs simulation table")
    cmp_p.add_argument("--landau-json", default=None)
    cmp_p.add_argument("--sweep-csv", default=None)
    cmp_p.add_argument("--fit-json", default=None)
    return parser


_COMMANDS = {
    "spectrum": cmd_spectrum,
    "landau": cmd_landau,
    "sweep": cmd_sweep,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        params, doc = load_config(args.config)
        if args.jobs < 1 or args.grid_n < 4:
            raise ValidationError("--jobs must be >= 1 and --grid-n >= 4")
        os.makedirs(args.out, exist_ok=True)
        if args.command == "compare":
            return cmd_compare(params, doc, args.out, args.grid_n, args.jobs,
                               landau_path=args.landau_json,
                               sweep_path=args.sweep_csv,
                               fit_path=args.fit_json)
        return _COMMANDS[args.command](params, doc, args.out,
                                       args.grid_n, args.jobs)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ComputationError, spec.EigenSolverError, spec.BracketError,
            spec.StaleThresholdError, spec.DiscretizationError,
            lan.ConsistencyError, lan.DegenerateNormalizationError,
            lan.NotApplicableError, simulation.StiffnessError,
            simulation.InsufficientDataError) as exc:
        print(f"computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
