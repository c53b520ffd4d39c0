"""Run orchestration: simulate a configured scenario, evaluate diagnostics, write artifacts."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import ConvergenceError, extract_limit_profiles, radial_steady_state
from .config import PROBE_NAMES, ScenarioConfig, initial_data, validate_config
from .dynamics import Constant, SolverError, linear_residual, reflection_differences, simulate, tol_neg
from .fields import Trajectory, write_trajectory
from .geometry import Direction, half_domain_mask
from .probes import (corner_curvature_probe, differences_from_view, harnack_ratio, interior_mask,
                     norm_ratio_series, normalized_quotient_probe, quotient_bracket, rescale_window,
                     wedge_and_slope_probe)
from .symmetry import antipodality, axis_report, radial_deviation

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_DEGENERATE = 0, 2, 3, 4
SKIPPED = "skipped"


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _combine(verdicts) -> str:
    vs = [v for v in verdicts if v not in (SKIPPED, None)]
    if not vs:
        return SKIPPED
    for key in ("fail", "degenerate"):
        if key in vs:
            return key
    if all(v == "inconclusive" for v in vs):
        return "inconclusive"
    return "pass"


# ------------------------------------------------------------- diagnostics

def sign_preservation(traj: Trajectory, e: Direction) -> dict:
    grid = traj.grid
    d1, d2 = reflection_differences(grid, traj.u1, traj.u2, e)
    mask = half_domain_mask(grid, e)
    m1 = float(d1[:, mask].min())
    m2 = float(d2[:, mask].min())
    scale = max(float(np.abs(traj.u1).max()), float(np.abs(traj.u2).max()))
    tol = tol_neg(float(traj.meta.get("dt", 0.0)), grid.h, scale)
    return {"min_u1e": m1, "min_u2e": m2, "tol_neg": tol,
            "verdict": "pass" if min(m1, m2) >= -tol else "fail"}


def symmetry_series(traj: Trajectory) -> dict:
    cols = {k: [] for k in ("t", "fss_u1", "fss_u2", "mono_u1", "mono_u2", "axis_u1", "axis_u2",
                            "degenerate_u1", "degenerate_u2")}
    for n, t in enumerate(traj.times):
        cols["t"].append(t)
        for s, u in (("u1", traj.u1[n]), ("u2", traj.u2[n])):
            a = axis_report(traj.grid, u)
            cols["fss_" + s].append(a.fss_deviation)
            cols["mono_" + s].append(a.monotonicity_violation)
            cols["axis_" + s].append(a.axis_angle)
            cols["degenerate_" + s].append(int(a.degenerate))
    return cols


def _profile_checks(cfg: ScenarioConfig, grid, z1, z2, cls: str) -> dict:
    tol = cfg.tolerances
    out = {"classification": cls, "sup_norm": [float(np.abs(z1).max()), float(np.abs(z2).max())]}
    axes, verdicts = {}, []
    alive = {"coexistence": (1, 2), "semitrivial_1": (1,), "semitrivial_2": (2,), "trivial": ()}[cls]
    reports = {}
    for i, z in ((1, z1), (2, z2)):
        if i not in alive:
            axes[f"u{i}"] = "extinct"
            continue
        a = axis_report(grid, z)
        reports[i] = a
        entry = a.to_dict()
        if a.degenerate:
            entry["verdict"] = "inconclusive"
        else:
            zmax = float(np.abs(z).max())
            ok = a.fss_deviation < tol["fss"] and a.monotonicity_violation < tol["monotonicity"] * zmax
            entry["verdict"] = "pass" if ok else "fail"
        verdicts.append(entry["verdict"])
        axes[f"u{i}"] = entry
    out["axes"] = axes
    out["fss_verdict"] = _combine(verdicts) if cls == "coexistence" else SKIPPED
    if cls == "coexistence":
        verdict, err = antipodality(reports[1], reports[2], tol["antipodality_deg"])
        out["antipodality"] = {"verdict": verdict, "error_deg": err}
    else:
        out["antipodality"] = {"verdict": SKIPPED, "error_deg": None}
    if cls.startswith("semitrivial"):
        k = alive[0]
        z = z1 if k == 1 else z2
        dev = radial_deviation(grid, z)
        out["radial"] = {"species": k, "radial_deviation": dev,
                         "verdict": "pass" if dev < tol["radial"] else "fail"}
    else:
        out["radial"] = SKIPPED
    return out


def steady_state_check(cfg: ScenarioConfig, grid, z, species: int) -> dict:
    coeffs = cfg.coefficients
    a, b = coeffs.a[species - 1], coeffs.b[species - 1]
    if not (isinstance(a, Constant) and isinstance(b, Constant)):
        return {"verdict": SKIPPED, "reason": "time-dependent coefficients"}
    try:
        prof = radial_steady_state(a.value, b.value, grid.domain, grid.n_r)
    except ConvergenceError as exc:
        return {"verdict": "fail", "error": str(exc)}
    lifted = prof.lift(grid)
    scale = max(float(np.abs(lifted).max()), 1e-300)
    err = float(np.abs(z - lifted).max()) / scale
    return {"species": species, "relative_sup_error": err, "profile_max": float(prof.z.max()),
            "residual": prof.residual, "subcritical": prof.subcritical,
            "verdict": "pass" if err < cfg.tolerances["steady_state"] else "fail", "_profile": prof}


def run_probes(cfg: ScenarioConfig, traj: Trajectory, e: Direction) -> dict:
    names = cfg.data["diagnostics"]["probes"] or []
    if not names:
        return {}
    pc = cfg.data["probes"]
    grid = traj.grid
    out = {}
    try:
        end = float(traj.times[-1]) if pc["window_end"] is None else float(pc["window_end"])
        view = rescale_window(traj, end, pc["window_width"])
    except ValueError as exc:
        return {n: {"verdict": "fail", "error": str(exc)} for n in names}
    for name in names:
        try:
            if name == "wedge":
                d1, d2 = differences_from_view(view, e)
                tol = tol_neg(float(traj.meta.get("dt", 0.0)), grid.h,
                              max(float(np.abs(traj.u1).max()), float(np.abs(traj.u2).max())))
                out[name] = wedge_and_slope_probe(grid, e, d1, d2, view.unit_times, pc["delta"], tol).to_dict()
            elif name == "corner":
                last = view.traj
                d1, d2 = reflection_differences(grid, last.u1[-1], last.u2[-1], e)
                r1 = corner_curvature_probe(grid, e, d1).to_dict()
                r2 = corner_curvature_probe(grid, e, d2).to_dict()
                out[name] = {"u1e": r1, "u2e": r2, "verdict": _combine([r1["verdict"], r2["verdict"]])}
            elif name == "harnack":
                d1, _ = differences_from_view(view, e)
                mask = interior_mask(grid, e, pc["delta"])
                out[name] = harnack_ratio(view, d1, mask, tuple(pc["harnack_taus"]), pc["p_exp"]).to_dict()
            elif name == "quotient":
                t0 = float(traj.times[0]) + pc["quotient_transient"]
                taus, ratios = norm_ratio_series(traj.window(t0, float(traj.times[-1])), 1, pc["quotient_lag"])
                c2, exc = quotient_bracket(taus, ratios, t0 + pc["quotient_calibration"])
                nq = normalized_quotient_probe(traj, [float(traj.times[-1])]).to_dict()
                out[name] = {"C2": c2, "excursion": exc, "n_ratios": len(ratios),
                             "ratio_min": float(ratios.min()), "ratio_max": float(ratios.max()),
                             "normalized": nq, "verdict": "pass" if exc <= 1.0 else "fail"}
        except ValueError as exc:
            out[name] = {"verdict": "fail", "error": str(exc)}
    return out


# --------------------------------------------------------------- outputs

def _write_csv(path: Path, columns: dict) -> None:
    keys = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in keys])
    np.savetxt(path, data, delimiter=",", header=",".join(keys), comments="", fmt="%.17g")


def _write_manifest(out: Path, status: str) -> dict:
    files = []
    for p in sorted(out.rglob("*")):
        if p.is_file() and p != out / "manifest.json":
            rel = p.relative_to(out).as_posix()
            files.append({"path": rel, "bytes": p.stat().st_size,
                          "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
    manifest = {"status": status, "files": files, "version": __version__}
    (out / "manifest.json").write_text(dump_json(manifest))
    return manifest


def run_scenario(cfg: ScenarioConfig | str | Path, out_dir, seed: int | None = None) -> tuple[dict, int]:
    """Simulate, diagnose and write ``report.json``, snapshots, aggregates and ``manifest.json``.

    Returns ``(report, exit_code)``. Configuration errors propagate as
    :class:`~fsslab.config.ConfigError`.
    """
    if not isinstance(cfg, ScenarioConfig):
        cfg = ScenarioConfig.load(cfg)
    cfg = cfg.with_seed(seed)
    out = Path(out_dir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    (out / "aggregates").mkdir(parents=True, exist_ok=True)
    grid = cfg.grid()
    system = cfg.system(grid)
    e = cfg.direction
    diag = cfg.data["diagnostics"]
    tol = cfg.tolerances
    validation = validate_config(cfg)
    u1, u2 = initial_data(cfg, grid)
    tm = cfg.time
    report = {
        "config": cfg.to_dict(), "seed": cfg.seed, "version": __version__,
        "validation": {k: validation[k] for k in ("violations", "warnings", "checks")},
        "direction": {"index": cfg.data["direction_index"], "angle": e.angle},
    }
    try:
        traj = simulate(system, u1, u2, float(tm["t_end"]), float(tm["dt"]), cadence=tm["cadence"],
                        tail_every_step=tm["tail_every_step"])
    except SolverError as exc:
        report.update({"status": "solver_failure", "error": str(exc)})
        (out / "report.json").write_text(dump_json(report))
        _write_manifest(out, "solver_failure")
        return report, EXIT_SOLVER

    meta = dict(traj.meta)
    report["scheme"] = {k: meta[k] for k in sorted(meta)}
    report["scheme"]["n_snapshots"] = len(traj)
    verdicts = {}
    h0 = validation["checks"].get("h0", {})
    verdicts["coefficients"] = "fail" if any("(h2)" in v for v in validation["violations"]) else "pass"
    verdicts["h0"] = "pass" if h0.get("strict") else ("degenerate" if h0.get("holds") else "fail")

    if h0.get("holds"):
        sp = sign_preservation(traj, e)
        report["sign_preservation"] = sp
        verdicts["sign_preservation"] = sp["verdict"]
    else:
        report["sign_preservation"] = SKIPPED
        verdicts["sign_preservation"] = SKIPPED

    norms = {"t": traj.times, "sup_u1": np.abs(traj.u1).max(axis=(1, 2)),
             "sup_u2": np.abs(traj.u2).max(axis=(1, 2))}
    d1, d2 = reflection_differences(grid, traj.u1, traj.u2, e)
    mask = half_domain_mask(grid, e)
    norms["min_u1e"] = d1[:, mask].min(axis=1)
    norms["min_u2e"] = d2[:, mask].min(axis=1)
    _write_csv(out / "aggregates" / "norms_vs_time.csv", norms)
    if diag["symmetry"]:
        _write_csv(out / "aggregates" / "symmetry_vs_time.csv", symmetry_series(traj))

    representatives = []
    steady = None
    if diag["omega"]:
        try:
            lps = extract_limit_profiles(traj, tol["tail_fraction"], tol["cluster"], tol["extinction"])
        except ValueError as exc:
            report["omega"] = {"verdict": "degenerate", "error": str(exc)}
            verdicts["omega"] = "degenerate"
        else:
            report["omega"] = lps.summary()
            verdicts["omega"] = "pass"
            for t, (z1, z2), cls, rad in zip(lps.times, lps.profiles, lps.classification, lps.cluster_radius):
                entry = {"t": t, "cluster_radius": rad}
                if diag["symmetry"]:
                    entry.update(_profile_checks(cfg, grid, z1, z2, cls))
                else:
                    entry["classification"] = cls
                if diag["steady_state"] and cls.startswith("semitrivial"):
                    k = int(cls[-1])
                    res = steady_state_check(cfg, grid, z1 if k == 1 else z2, k)
                    prof = res.pop("_profile", None)
                    if prof is not None and steady is None:
                        steady = prof
                    entry["steady_state"] = res
                representatives.append(entry)
    else:
        report["omega"] = SKIPPED
        verdicts["omega"] = SKIPPED
    report["representatives"] = representatives
    report["classification"] = [r["classification"] for r in representatives]
    verdicts["fss"] = _combine(r.get("fss_verdict", SKIPPED) for r in representatives)
    verdicts["antipodality"] = _combine(r.get("antipodality", {}).get("verdict", SKIPPED) for r in representatives)
    verdicts["radial"] = _combine(r["radial"]["verdict"] if isinstance(r.get("radial"), dict) else SKIPPED
                                  for r in representatives)
    verdicts["steady_state"] = _combine(r.get("steady_state", {}).get("verdict", SKIPPED)
                                        for r in representatives)
    report["antipodality"] = verdicts["antipodality"]
    if steady is not None:
        steady.to_csv(out / "aggregates" / "steady_profile.csv")

    if diag["linear_residual"]:
        start = tm["tail_every_step"] if tm["tail_every_step"] is not None else float(traj.times[0])
        sub = traj.window(start, float(traj.times[-1]))
        if len(sub) >= 3:
            lt, r1, r2 = linear_residual(system, sub, e)
            report["linear_residual"] = {"max_u1e": float(r1.max()), "max_u2e": float(r2.max()),
                                         "n_times": len(lt)}
            _write_csv(out / "aggregates" / "linear_residual_vs_time.csv", {"t": lt, "res_u1e": r1, "res_u2e": r2})
        else:
            report["linear_residual"] = {"error": "fewer than 3 snapshots", "verdict": "degenerate"}
    else:
        report["linear_residual"] = SKIPPED

    probes = run_probes(cfg, traj, e)
    report["probes"] = probes if probes else SKIPPED
    for name in PROBE_NAMES:
        verdicts["probe_" + name] = probes[name]["verdict"] if name in probes else SKIPPED

    mode = cfg.data["output"]["snapshots"]
    if mode == "all":
        write_trajectory(out / "snapshots", traj)
    elif mode == "final":
        write_trajectory(out / "snapshots", traj.select([len(traj) - 1]))
    report["verdicts"] = verdicts
    degenerate = any(v == "degenerate" for v in verdicts.values())
    report["status"] = "degenerate" if degenerate else "ok"
    (out / "report.json").write_text(dump_json(report))
    _write_manifest(out, report["status"])
    return report, EXIT_DEGENERATE if degenerate else EXIT_OK
