"""Reflection differences, initial-data ordering checks and foliated Schwarz diagnostics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .geometry import Direction, PolarGrid, half_domain_mask, reflection_index_map

NORM_FLOOR = 1e-300


@dataclass(frozen=True)
class ReflectionDifference:
    direction: Direction
    u1e: np.ndarray  # u1 - u1 o sigma_e
    u2e: np.ndarray  # u2 o sigma_e - u2
    t: float = 0.0


@dataclass(frozen=True)
class HypothesisCheck:
    holds: bool
    strict: bool
    violation: float
    max_difference: tuple[float, float]


@dataclass(frozen=True)
class AxisReport:
    axis_angle: float
    moment: float
    degenerate: bool
    fss_deviation: float | None = None
    monotonicity_violation: float | None = None

    @property
    def direction(self) -> Direction:
        return Direction(self.axis_angle)

    def to_dict(self) -> dict:
        return asdict(self)


def reflection_difference(grid: PolarGrid, u1, u2, e: Direction, t: float = 0.0) -> ReflectionDifference:
    """Differences with opposite sign conventions for the two species."""
    refl = reflection_index_map(grid, e)
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    return ReflectionDifference(e, u1 - refl.apply(u1), refl.apply(u2) - u2, t)


def check_reflection_hypothesis(grid: PolarGrid, u01, u02, e: Direction, tol: float = 1e-12) -> HypothesisCheck:
    """Check ``u01 >= u01 o sigma_e`` and ``u02 <= u02 o sigma_e`` on ``B(e)``.

    ``strict`` additionally requires neither difference to vanish identically.
    """
    d = reflection_difference(grid, u01, u02, e)
    mask = half_domain_mask(grid, e)
    m1, m2 = d.u1e[mask], d.u2e[mask]
    low = min(float(m1.min()), float(m2.min()))
    holds = low >= -tol
    high = (float(m1.max()), float(m2.max()))
    strict = holds and high[0] > tol and high[1] > tol
    return HypothesisCheck(holds, strict, max(0.0, -low), high)


def detect_axis(grid: PolarGrid, z, rel_threshold: float = 1e-10) -> AxisReport:
    """Axis from the area-weighted angular first moment of ``z`` (origin excluded)."""
    z = np.asarray(z, dtype=float)
    w = grid.area_weights.copy()
    if grid.is_disk:
        w[0] = 0.0
    wz = w * z
    mx = float(np.sum(wz * np.cos(grid.PHI)))
    my = float(np.sum(wz * np.sin(grid.PHI)))
    mag = math.hypot(mx, my)
    l1 = float(np.sum(grid.area_weights * np.abs(z)))
    degenerate = mag < rel_threshold * l1 or l1 == 0.0
    angle = 0.0 if degenerate else math.atan2(my, mx) % (2 * math.pi)
    return AxisReport(angle, mag, degenerate)


def _signed_angles(grid: PolarGrid, p: Direction) -> np.ndarray:
    """Signed angle of each column relative to ``p``, in ``(-pi, pi]``."""
    a = np.mod(grid.phi - p.angle + math.pi, 2 * math.pi) - math.pi
    a[np.isclose(a, -math.pi, atol=1e-12)] = math.pi
    return a


def _theta_order(grid: PolarGrid, p: Direction) -> np.ndarray:
    """Columns sorted by angle-to-p, the + side before the - side on ties."""
    sa = _signed_angles(grid, p)
    theta = np.round(np.abs(sa), 9)
    side = (sa < -1e-12).astype(int)
    return np.lexsort((side, theta))


def foliated_schwarz_symmetrize(grid: PolarGrid, z, p: Direction) -> np.ndarray:
    """Per-ring rearrangement: largest values nearest ``p``, nonincreasing in the polar angle."""
    z = np.asarray(z, dtype=float)
    order = _theta_order(grid, p)
    out = z.copy()
    start = 1 if grid.is_disk else 0
    ranked = -np.sort(-z[start:], axis=1, kind="stable")
    out[start:, order] = ranked
    return out


def _l2(grid: PolarGrid, f) -> float:
    return float(np.sqrt(np.sum(grid.area_weights * f * f)))


def fss_deviation(grid: PolarGrid, z, p: Direction, floor: float = NORM_FLOOR) -> float:
    """Relative L2 distance between ``z`` and its symmetrization about ``p``."""
    z = np.asarray(z, dtype=float)
    diff = z - foliated_schwarz_symmetrize(grid, z, p)
    return _l2(grid, diff) / max(_l2(grid, z), floor)


def angular_monotonicity_violation(grid: PolarGrid, z, p: Direction) -> float:
    """Largest ascent of ``z`` when walking away from ``p`` along either half ring.

    Both halves are sampled on the common ladder of node angles-to-p by
    periodic linear interpolation.
    """
    z = np.asarray(z, dtype=float)
    sa = _signed_angles(grid, p)
    ladder = np.unique(np.round(np.abs(sa), 12))
    start = 1 if grid.is_disk else 0
    # periodic extension for interpolation in absolute angle
    phi_ext = np.concatenate([grid.phi - 2 * math.pi, grid.phi, grid.phi + 2 * math.pi])
    worst = 0.0
    for sign in (1.0, -1.0):
        targets = np.mod(p.angle + sign * ladder, 2 * math.pi)
        for row in z[start:]:
            ext = np.concatenate([row, row, row])
            vals = np.interp(targets, phi_ext, ext)
            step = np.diff(vals)
            if step.size:
                worst = max(worst, float(step.max()))
    return max(worst, 0.0)


def radial_deviation(grid: PolarGrid, z, floor: float = NORM_FLOOR) -> float:
    """Relative L2 distance between ``z`` and its per-ring angular mean."""
    z = np.asarray(z, dtype=float)
    mean = z.mean(axis=1, keepdims=True)
    return _l2(grid, z - mean) / max(_l2(grid, z), floor)


def axis_report(grid: PolarGrid, z) -> AxisReport:
    """Detect the axis and attach both symmetry metrics about it."""
    a = detect_axis(grid, z)
    p = Direction(a.axis_angle)
    return AxisReport(a.axis_angle, a.moment, a.degenerate,
                      fss_deviation(grid, z, p), angular_monotonicity_violation(grid, z, p))


def angle_gap(a: float, b: float) -> float:
    """Absolute angular distance in ``[0, pi]``."""
    d = (a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def antipodality(p1: AxisReport, p2: AxisReport, tol_deg: float = 3.0) -> tuple[str, float | None]:
    """Verdict on ``angle(p1) - angle(p2) = pi``; degenerate axes are inconclusive."""
    if p1.degenerate or p2.degenerate:
        return "inconclusive", None
    err = angle_gap(p1.axis_angle, p2.axis_angle + math.pi)
    return ("pass" if math.degrees(err) < tol_deg else "fail"), math.degrees(err)


def refine_axis(grid: PolarGrid, z, p: Direction, bracket: float | None = None, tol: float = 1e-6) -> Direction:
    """Golden-section search of ``fss_deviation`` over ``p +- bracket``."""
    bracket = grid.dphi if bracket is None else bracket
    g = (math.sqrt(5) - 1) / 2
    lo, hi = p.angle - bracket, p.angle + bracket

    def cost(a):
        return fss_deviation(grid, z, Direction(a))
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = cost(c), cost(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = cost(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = cost(d)
    return Direction((lo + hi) / 2)
