"""Numerical instruments for reflection differences: Harnack ratios, wedge and slope
bounds, corner curvatures, barrier residuals and normalized quotients.

Every probe returns a :class:`ProbeReport` whose constants are ratios or
signs, hence invariant under positive rescaling of the input fields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import reflection_differences
from .fields import FieldInterpolator, Trajectory, directional_derivative, directional_second_derivative, \
    laplacian, normal_derivative
from .geometry import (Direction, PolarGrid, boundary_distance, corner_distance, corner_frames,
                       half_domain_boundary_distance, half_domain_mask)

UNIT_FRACTIONS = tuple(k / 7 for k in range(1, 8))
DEGENERATE_FLOOR = 1e-14


@dataclass
class ProbeReport:
    name: str
    constants: dict
    formulas: dict
    verdict: str  # pass | fail | degenerate | inconclusive
    params: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return {"name": self.name, "constants": _jsonable(self.constants), "formulas": dict(self.formulas),
                "verdict": self.verdict, "params": _jsonable(self.params)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ------------------------------------------------------------------ windows

@dataclass(frozen=True)
class TrajectoryView:
    """Snapshots of ``[t_center - width, t_center]`` with unit-window times ``s in [0, 1]``."""

    traj: Trajectory
    t_start: float
    width: float

    @property
    def grid(self) -> PolarGrid:
        return self.traj.grid

    @property
    def unit_times(self) -> np.ndarray:
        return (self.traj.times - self.t_start) / self.width

    def indices(self, s0: float, s1: float) -> np.ndarray:
        s = self.unit_times
        return np.flatnonzero((s >= s0 - 1e-9) & (s <= s1 + 1e-9))

    def physical_time(self, s: float) -> float:
        return self.t_start + s * self.width


def rescale_window(traj: Trajectory, t_center: float, width: float) -> TrajectoryView:
    """Affine map of ``[t_center - width, t_center]`` onto ``[0, 1]``.

    Diffusion is not rescaled; probes compare signs and ratios only.
    """
    if width <= 0:
        raise ValueError("window width must be positive")
    t0 = t_center - width
    eps = 1e-9 * max(1.0, abs(t_center))
    if t0 < traj.times[0] - eps or t_center > traj.times[-1] + eps:
        raise ValueError(f"window [{t0:g}, {t_center:g}] outside trajectory span "
                         f"[{traj.times[0]:g}, {traj.times[-1]:g}]")
    return TrajectoryView(traj.window(t0, t_center), t0, float(width))


def _time_weights(s: np.ndarray) -> np.ndarray:
    if len(s) == 1:
        return np.ones(1)
    w = np.zeros(len(s))
    d = np.diff(s)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


# ------------------------------------------------------------------ Harnack

def harnack_ratio(view: TrajectoryView, values: np.ndarray, mask: np.ndarray,
                  taus=(1 / 7, 4 / 7, 5 / 7, 1.0), p_exp: float = 1.0) -> ProbeReport:
    """``inf_{D x [t3,t4]} v / (mean_{D x [t1,t2]} v**p)**(1/p)``.

    ``values`` is a stack aligned with ``view.traj.times``.
    """
    grid = view.grid
    t1, t2, t3, t4 = taus
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty spatial mask")
    early, late = view.indices(t1, t2), view.indices(t3, t4)
    if len(early) == 0 or len(late) == 0:
        raise ValueError("no snapshots inside the Harnack time windows")
    for idx in (early, late):
        if np.min(values[idx][:, mask]) <= 0:
            raise ValueError("Harnack probe requires positivity")
    inf_late = float(np.min(values[late][:, mask]))
    w = grid.area_weights[mask]
    tw = _time_weights(view.unit_times[early])
    num = sum(twi * np.sum(w * values[i][mask] ** p_exp) for twi, i in zip(tw, early))
    avg = (num / (tw.sum() * w.sum())) ** (1.0 / p_exp)
    kappa = inf_late / avg
    return ProbeReport(
        "harnack_ratio", {"kappa": kappa, "inf_late": inf_late, "mean_early": avg},
        {"kappa": "inf_{D x (t3,t4)} v / (avg_{D x (t1,t2)} v^p)^(1/p)"},
        "pass" if kappa > 0 else "fail",
        {"taus": list(taus), "p_exp": p_exp, "h": grid.h, "n_early": len(early), "n_late": len(late)})


def interior_mask(grid: PolarGrid, e: Direction, delta: float) -> np.ndarray:
    """``B(e) minus [dB(e)]_delta`` on the grid."""
    return half_domain_mask(grid, e) & grid.interior_mask & (half_domain_boundary_distance(grid, e) > delta)


def sector_mask(grid: PolarGrid, e: Direction, r_min: float, r_max: float, half_angle: float) -> np.ndarray:
    """Polar box ``r_min <= r <= r_max``, angle to ``e`` at most ``half_angle``.

    When the bounds fall on grid radii and angles, every refinement samples
    the same closed region, so infima are comparable across grids.
    """
    gap = np.abs(np.mod(grid.phi - e.angle + math.pi, 2 * math.pi) - math.pi)
    return (grid.R >= r_min - 1e-12) & (grid.R <= r_max + 1e-12) & (gap[None, :] <= half_angle + 1e-12)


# ------------------------------------------------------------- wedge/slope

def differences_from_view(view: TrajectoryView, e: Direction):
    return reflection_differences(view.grid, view.traj.u1, view.traj.u2, e)


def _flat_points(grid: PolarGrid, e: Direction, delta: float) -> np.ndarray:
    """Sample points on ``H(e) & B`` farther than ``delta`` from the corners."""
    t = e.normal()
    a1, a2 = grid.domain.inner_radius, grid.domain.outer_radius
    radii = grid.r[(grid.r > a1 + delta) & (grid.r < a2 - delta)]
    if grid.is_disk:
        radii = radii[radii > 0]
    pts = [s * rad * t for rad in radii for s in (1.0, -1.0)]
    if grid.is_disk and delta < a2:
        pts.append(np.zeros(2))
    return np.array(pts).reshape(-1, 2)


def wedge_and_slope_probe(grid: PolarGrid, e: Direction, d1, d2, unit_times=None, delta: float = 0.1,
                          tol: float = 1e-10, window=(6 / 7, 1.0)) -> ProbeReport:
    """``mu_i = min v_i/(x.e)`` away from ``dB(e)`` and ``eps_i = min dv_i/dnu`` on ``dB(e)`` off the corners.

    ``d1, d2`` are single fields or stacks aligned with ``unit_times``. The
    normal derivative is taken along the inward normal (``e`` on the flat part).
    """
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    if d1.ndim == 2:
        d1, d2 = d1[None], d2[None]
        unit_times = np.ones(1)
    s = np.asarray(unit_times, dtype=float)
    sel = np.flatnonzero((s >= window[0] - 1e-9) & (s <= window[1] + 1e-9))
    if len(sel) == 0:
        raise ValueError("no snapshots in the probe window")
    half = half_domain_mask(grid, e)
    low = min(float(d1[sel][:, half].min()), float(d2[sel][:, half].min()))
    if low < -tol:
        raise ValueError(f"sign hypothesis violated: min difference {low:.3g} < -{tol:g}")
    params = {"delta": delta, "window": list(window), "h": grid.h, "n_snapshots": len(sel)}
    formulas = {"mu_i": "min over (B(e) \\ [dB(e)]_delta) x window of u_i^e / (x.e)",
                "eps_i": "min over (dB(e) \\ [dB & H(e)]_delta) x window of inward du_i^e/dnu"}
    scale = max(float(np.abs(d1[sel]).max()), float(np.abs(d2[sel]).max()))
    if scale <= DEGENERATE_FLOOR:
        zero = {"mu_1": 0.0, "mu_2": 0.0, "eps_1": 0.0, "eps_2": 0.0}
        return ProbeReport("wedge_and_slope", zero, formulas, "degenerate", params)
    region = interior_mask(grid, e, delta)
    if not region.any():
        raise ValueError("wedge region is empty; reduce delta")
    xe = (grid.X * e.vector[0] + grid.Y * e.vector[1])[region]
    curved = half_domain_mask(grid, e)[-1] & (corner_distance(grid, e)[-1] > delta)
    inner_cols = None
    if not grid.is_disk:
        inner_cols = half_domain_mask(grid, e)[0] & (corner_distance(grid, e)[0] > delta)
    flat = _flat_points(grid, e, delta)
    consts = {}
    for name, d in (("1", d1), ("2", d2)):
        mus, epss = [], []
        for n in sel:
            mus.append(float(np.min(d[n][region] / xe)))
            slopes = []
            if curved.any():
                slopes.append(normal_derivative(grid, d[n], "outer", curved))
            if inner_cols is not None and inner_cols.any():
                slopes.append(normal_derivative(grid, d[n], "inner", inner_cols))
            if len(flat):
                slopes.append(directional_derivative(grid, d[n], flat, e.vector,
                                                     interpolator=FieldInterpolator(grid, d[n])))
            epss.append(float(np.min(np.concatenate(slopes))))
        consts["mu_" + name] = min(mus)
        consts["eps_" + name] = min(epss)
    ok = all(v > 0 for v in consts.values())
    return ProbeReport("wedge_and_slope", consts, formulas, "pass" if ok else "fail", params)


# ------------------------------------------------------------------ corners

def corner_curvature_probe(grid: PolarGrid, e: Direction, d, rho: float | None = None) -> ProbeReport:
    """Second derivatives of ``d`` along ``s`` and ``s_tilde`` at every corner of ``B(e)``.

    The ``s_tilde`` ray leaves the domain, so it is sampled along ``-s_tilde``
    (a second derivative is even in the direction).
    """
    d = np.asarray(d, dtype=float)
    frames = corner_frames(grid, e)
    formulas = {"d_ss": "d^2 v / ds^2 at the corner, s = (nu + e)/sqrt(2)",
                "d_stst": "d^2 v / ds~^2 at the corner, s~ = (-nu + e)/sqrt(2)",
                "antisymmetry": "|d_ss + d_stst|"}
    interp = FieldInterpolator(grid, d)
    rows = []
    for f in frames:
        dss, used = directional_second_derivative(grid, d, f.point, f.s, rho, interp)
        dtt, _ = directional_second_derivative(grid, d, f.point, -f.s_tilde, rho, interp)
        rows.append({"point": f.point.tolist(), "ring": f.ring, "d_ss": dss, "d_stst": dtt,
                     "antisymmetry": abs(dss + dtt)})
    params = {"rho": used, "h": grid.h}
    if np.abs(d).max() <= DEGENERATE_FLOOR:
        for r in rows:
            r["d_ss"] = r["d_stst"] = r["antisymmetry"] = 0.0
        return ProbeReport("corner_curvature", {"corners": rows}, formulas, "degenerate", params)
    ok = all(r["d_ss"] > 0 and r["d_stst"] < 0 for r in rows)
    return ProbeReport("corner_curvature", {"corners": rows}, formulas, "pass" if ok else "fail", params)


def corner_positivity_check(grid: PolarGrid, e: Direction, w, tol: float = 1e-12, deltas=None,
                            eps: float | None = None, modulus: float | None = None) -> ProbeReport:
    """Largest scanned ``delta`` with ``w >= -tol`` on ``[H(e) & dB]_delta & B(e)``.

    Given a curvature floor ``eps`` and a bound ``modulus`` on the third
    derivatives, ``eps / modulus`` is also reported as the Taylor prediction.
    """
    w = np.asarray(w, dtype=float)
    half = half_domain_mask(grid, e) & grid.interior_mask
    dist = corner_distance(grid, e)
    reach = float(dist[half].max())
    if deltas is None:
        deltas = np.arange(1, int(np.ceil(reach / grid.h)) + 1) * grid.h
    deltas = np.sort(np.asarray(deltas, dtype=float))
    on_boundary = half_domain_mask(grid, e) & grid.boundary_mask
    boundary_ok = bool(np.all(np.abs(w[on_boundary]) <= max(tol, 1e-12))) if on_boundary.any() else True
    best = 0.0
    first_bad = None
    for dl in deltas:
        m = half & (dist <= dl)
        if m.any() and w[m].min() < -tol:
            first_bad = float(dl)
            break
        best = float(dl)
    consts = {"delta": best, "scan_max": float(deltas[-1]), "first_failure": first_bad}
    if eps is not None and modulus:
        consts["predicted_delta"] = eps / modulus
    verdict = "pass" if first_bad is None else "fail"
    return ProbeReport("corner_positivity", consts,
                       {"delta": "max scanned delta with w >= -tol on [H(e) & dB]_delta & B(e)"},
                       verdict, {"tol": tol, "h": grid.h, "boundary_zero": boundary_ok})


# --------------------------------------------------------------- barriers

def interior_barrier(X, Y, t, y, r, t_star, beta0, N: int = 2):
    """Value, time derivative and exact Laplacian of the interior barrier ``z``."""
    g = 2.0 * (N + 1) / r**2
    rho2 = (X - y[0]) ** 2 + (Y - y[1]) ** 2
    E = np.exp(-g * (rho2 + (t - t_star) ** 2))
    decay = math.exp(-beta0 * t)
    z = (E - math.exp(-g * r * r)) * decay
    zt = E * decay * (-2 * g * (t - t_star)) - beta0 * z
    lap = E * decay * (4 * g * g * rho2 - 2 * g * N)
    return z, zt, lap


def corner_barrier(X, Y, t, e: Direction, y, r, beta0, N: int = 2, t_star: float = 1.0):
    """Value, time derivative and exact Laplacian of ``phi = (x.e) (E - e^{-theta r^2}) e^{-beta0 t}``."""
    th = 2.0 * (N + 3) / r**2
    x1 = X * e.vector[0] + Y * e.vector[1]
    rho2 = (X - y[0]) ** 2 + (Y - y[1]) ** 2
    E = np.exp(-th * (rho2 + (t - t_star) ** 2))
    decay = math.exp(-beta0 * t)
    phi = x1 * (E - math.exp(-th * r * r)) * decay
    phit = x1 * E * decay * (-2 * th * (t - t_star)) - beta0 * phi
    # y lies on H(e), so grad(x.e) . grad(E) = -2 th E (x - y).e = -2 th E x1
    lap = x1 * E * decay * (4 * th * th * rho2 - 2 * th * (N + 2))
    return phi, phit, lap


def comparison_residual(grid: PolarGrid, kind: str, e: Direction, r: float, beta0: float, c=None,
                        t_star: float = 1.0, n_times: int = 9, N: int = 2) -> ProbeReport:
    """Max of ``z_t - Lap_h z - c z`` over the barrier region D (interior) or U (corner).

    The base point is ``x* = A2 e`` (interior) or the corner ``A2 e_perp``;
    ``y = x* + r nu``. ``c`` defaults to the constant ``beta0``. The report
    carries the analytic residual and ``tol = max |Lap_h z - Lap z|``.
    """
    a2 = grid.domain.outer_radius
    if kind == "interior":
        xs = a2 * e.vector
        nu = -e.vector
    elif kind == "corner":
        xs = a2 * e.normal()
        nu = -e.normal()
    else:
        raise ValueError(f"unknown barrier kind {kind!r}")
    if r <= 0 or r >= grid.domain.width / 2:
        raise ValueError("barrier radius outside the grid")
    y = xs + r * nu
    times = np.linspace(max(0.0, t_star - r / 2), t_star, n_times)
    c = np.full(grid.shape, float(beta0)) if c is None else np.broadcast_to(np.asarray(c, float), grid.shape)
    X, Y = grid.X, grid.Y
    base = half_domain_mask(grid, e) & grid.interior_mask
    disc, anal, tol = -np.inf, -np.inf, 0.0
    count = 0
    for t in times:
        dt2 = (t - t_star) ** 2
        reg = base & ((X - y[0]) ** 2 + (Y - y[1]) ** 2 + dt2 < r * r) \
            & ((X - xs[0]) ** 2 + (Y - xs[1]) ** 2 + dt2 < r * r / 4)
        if not reg.any():
            continue
        if kind == "interior":
            z, zt, lap = interior_barrier(X, Y, t, y, r, t_star, beta0, N)
        else:
            z, zt, lap = corner_barrier(X, Y, t, e, y, r, beta0, N, t_star)
        lap_h = laplacian(grid, z)
        disc = max(disc, float(np.max((zt - lap_h - c * z)[reg])))
        anal = max(anal, float(np.max((zt - lap - c * z)[reg])))
        tol = max(tol, float(np.max(np.abs(lap_h - lap)[reg])))
        count += int(reg.sum())
    if count == 0:
        raise ValueError("barrier region contains no grid nodes")
    verdict = "pass" if disc <= tol else "fail"
    return ProbeReport(
        "comparison_residual", {"residual": disc, "analytic_residual": anal, "tol": tol},
        {"residual": "max over region of z_t - Lap_h z - c z", "tol": "max over region of |Lap_h z - Lap z|"},
        verdict, {"kind": kind, "r": r, "beta0": beta0, "t_star": t_star, "h": grid.h, "nodes": count})


# -------------------------------------------------------- normalized quotient

def norm_ratio_series(traj: Trajectory, species: int = 1, lag: float = 1.0):
    """``(tau, |u(tau + lag)|_inf / |u(tau)|_inf)`` over snapshot pairs exactly ``lag`` apart."""
    u = traj.species(species)
    norms = np.max(np.abs(u.reshape(len(traj), -1)), axis=1)
    t = traj.times
    taus, ratios = [], []
    for i, ti in enumerate(t):
        j = int(np.searchsorted(t, ti + lag - 1e-9))
        if j < len(t) and abs(t[j] - ti - lag) < 1e-9 * max(1.0, abs(ti)):
            if norms[i] <= 0:
                raise ValueError("normalized quotient requires a nonzero field")
            taus.append(ti)
            ratios.append(norms[j] / norms[i])
    return np.array(taus), np.array(ratios)


def quotient_bracket(taus, ratios, calibration_end: float):
    """``C2`` from ratios with ``tau <= calibration_end``; returns ``(C2, worst later excursion)``.

    The excursion is ``max(C2 / ratio, ratio * C2)`` over later ratios; at most 1 means inside ``[C2, 1/C2]``.
    """
    taus = np.asarray(taus)
    ratios = np.asarray(ratios)
    cal = taus <= calibration_end + 1e-12
    if not cal.any() or cal.all():
        raise ValueError("calibration window must split the ratio series")
    c2 = float(min(np.min(ratios[cal]), np.min(1.0 / ratios[cal])))
    later = ratios[~cal]
    excursion = float(max(np.max(c2 / later), np.max(later * c2)))
    return c2, excursion


def normalized_quotient_probe(traj: Trajectory, t_list, k: float = 1.0, species: int = 1,
                              band: float = 0.1) -> ProbeReport:
    """Per ``t_n``: ``C_sup = max v_n`` on ``[t_n - k, t_n + k]`` and a power-law fit of ``v_n(t_n)`` near the boundary.

    ``v_n = u / |u(t_n)|_inf``; the fit ``log v = log C_inf + theta log dist`` uses the outer ``band`` fraction of the width.
    """
    grid = traj.grid
    u = traj.species(species)
    dist = boundary_distance(grid)
    fit_mask = grid.interior_mask & (dist <= band * grid.domain.width + 1e-12)
    if grid.is_disk:
        fit_mask[0] = False
    rows = []
    for tn in t_list:
        n = int(np.argmin(np.abs(traj.times - tn)))
        beta = float(np.max(np.abs(u[n])))
        if np.min(u[n][grid.interior_mask]) <= 0 or beta == 0:
            raise ValueError("normalized quotient probe requires positivity in the interior")
        win = np.flatnonzero(np.abs(traj.times - traj.times[n]) <= k + 1e-9)
        c_sup = float(np.max(u[win]) / beta)
        v = u[n][fit_mask] / beta
        A = np.column_stack([np.ones(v.size), np.log(dist[fit_mask])])
        coef, *_ = np.linalg.lstsq(A, np.log(v), rcond=None)
        rows.append({"t": float(traj.times[n]), "beta": beta, "C_sup": c_sup,
                     "C_inf": float(math.exp(coef[0])), "theta": float(coef[1])})
    return ProbeReport(
        "normalized_quotient", {"windows": rows},
        {"C_sup": "max of u/|u(t_n)|_inf on [t_n-k, t_n+k]",
         "C_inf, theta": "least squares log v_n = log C_inf + theta log dist(x, dB) on the outer band"},
        "pass" if all(r["C_sup"] >= 1.0 - 1e-12 for r in rows) else "fail",
        {"k": k, "band": band, "species": species, "h": grid.h})
